"""Per-layer pooled encoder embeddings for an image directory, written as CTE1.

Runs a ViT-style encoder with all hidden states exposed and pools each block's
token matrix to one vector per image (``cls`` = classification token,
``mean`` = average over all tokens). The output file holds one CTE1 layer per
encoder block in depth order; sample row i corresponds to the i-th filename
in lexicographic order. Inference runs in eval mode under ``no_grad``, so two
runs of the same job produce byte-identical files.

CTE1 layout (little-endian): magic ``CTE1``, u32 layer count, then per layer
u32 n_samples, u32 dim, and n_samples * dim float32 values row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

CTE1_MAGIC = b"CTE1"
POOLINGS = ("mean", "cls")
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


class ExtractError(Exception):
    """Raised for bad jobs, undecodable images, or encoder load failures."""


@dataclass(frozen=True)
class ExtractJob:
    """One extraction run: image directory -> CTE1 file."""

    image_dir: Path
    model: str
    output_path: Path
    pooling: str = "mean"
    batch_size: int = 64
    device: str = "cpu"
    include_embedding_layer: bool = False

    def __post_init__(self) -> None:
        if self.pooling not in POOLINGS:
            raise ExtractError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.batch_size < 1:
            raise ExtractError("batch_size must be >= 1")
        object.__setattr__(self, "image_dir", Path(self.image_dir))
        object.__setattr__(self, "output_path", Path(self.output_path))


def pool_tokens(hidden: torch.Tensor, pooling: str) -> torch.Tensor:
    """(batch, tokens, width) -> (batch, width).

    ``cls`` returns token 0; ``mean`` averages over all tokens, so a constant
    token matrix pools to that token.
    """
    if hidden.ndim != 3:
        raise ExtractError(f"expected (batch, tokens, width) hidden state, got {tuple(hidden.shape)}")
    if pooling == "cls":
        return hidden[:, 0, :]
    if pooling == "mean":
        return hidden.mean(dim=1)
    raise ExtractError(f"pooling must be one of {POOLINGS}, got {pooling!r}")


def list_images(directory: Path) -> list[Path]:
    """Image files in lexicographic filename order; the row order contract."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ExtractError(f"image directory not found: {directory}")
    paths = sorted(
        (p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS),
        key=lambda p: p.name,
    )
    if not paths:
        raise ExtractError(f"no image files in {directory}")
    return paths


def load_rgb(path: Path) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ExtractError(f"cannot decode image {path}: {exc}") from exc


def write_cte1(layers: list[np.ndarray], path: Path) -> int:
    """Validate the layer stack and write the file in one shot."""
    if not layers:
        raise ExtractError("no layers to write")
    n = layers[0].shape[0]
    chunks = [CTE1_MAGIC, struct.pack("<I", len(layers))]
    for i, layer in enumerate(layers):
        if layer.ndim != 2 or layer.shape[0] != n or layer.shape[1] < 1:
            raise ExtractError(f"layer {i} has inconsistent shape {layer.shape}")
        if not np.all(np.isfinite(layer)):
            raise ExtractError(f"layer {i} contains non-finite values")
        mat = np.ascontiguousarray(layer, dtype="<f4")
        chunks.append(struct.pack("<II", mat.shape[0], mat.shape[1]))
        chunks.append(mat.tobytes(order="C"))
    payload = b"".join(chunks)
    Path(path).write_bytes(payload)
    return len(payload)


def _load_encoder(name: str, device: str):
    from transformers import AutoImageProcessor, AutoModel

    try:
        model = AutoModel.from_pretrained(name)
        processor = AutoImageProcessor.from_pretrained(name)
    except Exception as exc:
        raise ExtractError(f"cannot load encoder {name!r}: {exc}") from exc
    model.eval()
    model.to(device)
    return model, processor


def extract(job: ExtractJob) -> Path:
    """Run the job and return the written CTE1 path."""
    paths = list_images(job.image_dir)
    model, processor = _load_encoder(job.model, job.device)

    per_layer: list[list[np.ndarray]] = []
    with torch.no_grad():
        for start in range(0, len(paths), job.batch_size):
            batch_paths = paths[start : start + job.batch_size]
            images = [load_rgb(p) for p in batch_paths]
            inputs = processor(images=images, return_tensors="pt").to(job.device)
            outputs = model(**inputs, output_hidden_states=True)
            hidden_states = outputs.hidden_states
            selected = hidden_states if job.include_embedding_layer else hidden_states[1:]
            if not per_layer:
                per_layer = [[] for _ in selected]
            elif len(selected) != len(per_layer):
                raise ExtractError("encoder returned a varying hidden-state count")
            for i, hs in enumerate(selected):
                pooled = pool_tokens(hs, job.pooling)
                per_layer[i].append(pooled.cpu().to(torch.float32).numpy())

    layers = [np.concatenate(parts, axis=0) for parts in per_layer]
    write_cte1(layers, job.output_path)
    return job.output_path
