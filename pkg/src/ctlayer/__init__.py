"""Layer-wise data-copying scores over encoder embeddings and curve-based
fingerprinting of generative-model architectures."""

from .errors import (
    CtlayerError,
    FormatError,
    ThresholdError,
    UsageError,
    ValidationError,
)
from .tensor_io import (
    EmbeddingSet,
    ValidatedTriple,
    load_embedding_set,
    save_embedding_set,
    validate_triple,
)
from .partition import Partition, assign_cells, fit_kmeans
from .ct_core import (
    CellStats,
    CtConfig,
    CtCurve,
    LayerDiagnostics,
    cell_ct_stats,
    ct_curve,
    ct_score,
    curve_to_csv,
    curve_to_json_obj,
    diagnostics_to_json_obj,
    mann_whitney_zu,
    nn_sq_distance,
)
from .imageops import (
    Image,
    Mask,
    bilinear_resize,
    center_crop,
    composite_background,
    down_up,
    gaussian_background,
    load_image,
    load_mask,
    rotate,
    save_image,
    save_mask,
    shuffle_patches,
)
from .fingerprint import (
    CandidateScore,
    DbEntry,
    FingerprintDb,
    MatchResult,
    baseline_features,
    build_db,
    cosine_heatmap,
    eval_accuracy,
    eval_accuracy_features,
    frechet_distance,
    load_db,
    match_curve,
    match_features,
    save_db,
)

__version__ = "0.1.0"

__all__ = [
    "CtlayerError",
    "FormatError",
    "ThresholdError",
    "UsageError",
    "ValidationError",
    "EmbeddingSet",
    "ValidatedTriple",
    "load_embedding_set",
    "save_embedding_set",
    "validate_triple",
    "Partition",
    "assign_cells",
    "fit_kmeans",
    "CellStats",
    "CtConfig",
    "CtCurve",
    "LayerDiagnostics",
    "cell_ct_stats",
    "ct_curve",
    "ct_score",
    "curve_to_csv",
    "curve_to_json_obj",
    "diagnostics_to_json_obj",
    "mann_whitney_zu",
    "nn_sq_distance",
    "Image",
    "Mask",
    "bilinear_resize",
    "center_crop",
    "composite_background",
    "down_up",
    "gaussian_background",
    "load_image",
    "load_mask",
    "rotate",
    "save_image",
    "save_mask",
    "shuffle_patches",
    "CandidateScore",
    "DbEntry",
    "FingerprintDb",
    "MatchResult",
    "baseline_features",
    "build_db",
    "cosine_heatmap",
    "eval_accuracy",
    "eval_accuracy_features",
    "frechet_distance",
    "load_db",
    "match_curve",
    "match_features",
    "save_db",
    "__version__",
]
