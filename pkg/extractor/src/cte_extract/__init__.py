"""Dump pooled per-layer ViT embeddings of an image directory into CTE1."""

from .extract import (
    CTE1_MAGIC,
    IMAGE_EXTENSIONS,
    POOLINGS,
    ExtractError,
    ExtractJob,
    extract,
    list_images,
    pool_tokens,
    write_cte1,
)

__version__ = "0.1.0"

__all__ = [
    "CTE1_MAGIC",
    "IMAGE_EXTENSIONS",
    "POOLINGS",
    "ExtractError",
    "ExtractJob",
    "extract",
    "list_images",
    "pool_tokens",
    "write_cte1",
    "__version__",
]
