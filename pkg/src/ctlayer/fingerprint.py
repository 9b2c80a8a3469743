"""Curve database, nearest-curve matching, similarity heatmaps, and the
statistical baseline (pixel moments + one Fréchet coordinate).

Matching metrics over curve vectors:
  * ``l2``       argmin Euclidean distance,
  * ``cosine``   argmax cosine similarity (zero-norm vectors score 0),
  * ``combined`` midrank both metrics (1 = best), take the minimum rank sum;
                 rank-sum ties fall to smaller L2 distance, then db order.

Accuracy is architecture-level: a query counts as correct when the predicted
entry's architecture tag equals the query's architecture tag.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._rank import midranks
from .ct_core import CtCurve
from .errors import FormatError, ValidationError

METRICS = ("l2", "cosine", "combined")

DB_VERSION = 1


@dataclass(frozen=True)
class DbEntry:
    label: str
    architecture: str
    curve: CtCurve
    baseline_features: tuple[float, ...] | None = None


@dataclass(frozen=True)
class FingerprintDb:
    """Labeled reference curves (and optional baseline vectors) for matching."""

    entries: tuple[DbEntry, ...]
    layer_count: int
    version: int = DB_VERSION


@dataclass(frozen=True)
class CandidateScore:
    label: str
    l2_distance: float
    cosine_similarity: float
    combined_rank: float


@dataclass(frozen=True)
class MatchResult:
    predicted_label: str
    metric: str
    candidates: tuple[CandidateScore, ...]


def _l2(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return float(math.sqrt(np.dot(diff, diff)))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


def build_db(
    curves: Sequence[CtCurve],
    architectures: Sequence[str] | None = None,
    baseline_features: Sequence[Sequence[float] | None] | None = None,
) -> FingerprintDb:
    """Assemble a db from labeled curves; architecture tags default to labels."""
    if not curves:
        raise ValidationError("db needs at least one curve")
    if architectures is None:
        architectures = [c.label for c in curves]
    if len(architectures) != len(curves):
        raise ValidationError("architectures must parallel curves")
    if baseline_features is None:
        baseline_features = [None] * len(curves)
    if len(baseline_features) != len(curves):
        raise ValidationError("baseline_features must parallel curves")
    layer_count = curves[0].layer_count
    seen: set[str] = set()
    entries = []
    for curve, arch, feats in zip(curves, architectures, baseline_features):
        if curve.layer_count != layer_count:
            raise ValidationError(
                f"curve length mismatch: {curve.label!r} has {curve.layer_count}, expected {layer_count}"
            )
        if curve.label in seen:
            raise ValidationError(f"duplicate label {curve.label!r}")
        seen.add(curve.label)
        entries.append(
            DbEntry(
                label=curve.label,
                architecture=str(arch),
                curve=curve,
                baseline_features=None if feats is None else tuple(float(v) for v in feats),
            )
        )
    return FingerprintDb(entries=tuple(entries), layer_count=layer_count)


def _match_vectors(vectors: np.ndarray, labels: Sequence[str], query: np.ndarray, metric: str) -> MatchResult:
    l2s = np.array([_l2(query, v) for v in vectors])
    coss = np.array([_cosine(query, v) for v in vectors])
    rank_l2 = midranks(l2s)
    rank_cos = midranks(-coss)
    rank_sum = rank_l2 + rank_cos
    if metric == "l2":
        winner = int(np.argmin(l2s))
    elif metric == "cosine":
        winner = int(np.argmax(coss))
    elif metric == "combined":
        winner = min(range(len(labels)), key=lambda i: (rank_sum[i], l2s[i], i))
    else:
        raise ValidationError(f"unknown metric {metric!r}: expected one of {', '.join(METRICS)}")
    candidates = tuple(
        CandidateScore(
            label=labels[i],
            l2_distance=float(l2s[i]),
            cosine_similarity=float(coss[i]),
            combined_rank=float(rank_sum[i]),
        )
        for i in range(len(labels))
    )
    return MatchResult(predicted_label=labels[winner], metric=metric, candidates=candidates)


def match_curve(db: FingerprintDb, query: CtCurve, metric: str = "combined") -> MatchResult:
    """Nearest db entry to the query curve under the chosen metric."""
    if not db.entries:
        raise ValidationError("db is empty")
    if query.layer_count != db.layer_count:
        raise ValidationError(
            f"query length {query.layer_count} does not match db layer count {db.layer_count}"
        )
    vectors = np.array([e.curve.scores for e in db.entries], dtype=np.float64)
    labels = [e.label for e in db.entries]
    return _match_vectors(vectors, labels, np.asarray(query.scores, dtype=np.float64), metric)


def eval_accuracy(
    db: FingerprintDb,
    queries: Sequence[CtCurve],
    metric: str = "combined",
    query_architectures: Sequence[str] | None = None,
) -> tuple[float, list[MatchResult]]:
    """Fraction of queries whose predicted architecture tag matches their own."""
    if not queries:
        raise ValidationError("queries must be nonempty")
    if query_architectures is None:
        query_architectures = [q.label for q in queries]
    if len(query_architectures) != len(queries):
        raise ValidationError("query_architectures must parallel queries")
    arch_of = {e.label: e.architecture for e in db.entries}
    results = []
    correct = 0
    for query, arch in zip(queries, query_architectures):
        result = match_curve(db, query, metric)
        results.append(result)
        if arch_of[result.predicted_label] == str(arch):
            correct += 1
    return correct / len(queries), results


def match_features(db: FingerprintDb, query_features: Sequence[float], metric: str = "combined") -> MatchResult:
    """Match a baseline feature vector against the db's stored vectors.

    Each coordinate is z-normalized across db entries first (population
    spread); coordinates with zero spread are dropped from the comparison and
    the query is transformed with the db's statistics.
    """
    if not db.entries:
        raise ValidationError("db is empty")
    missing = [e.label for e in db.entries if e.baseline_features is None]
    if missing:
        raise ValidationError(f"entries without baseline features: {', '.join(missing)}")
    feats = np.array([e.baseline_features for e in db.entries], dtype=np.float64)
    q = np.asarray(query_features, dtype=np.float64)
    if q.ndim != 1 or q.size != feats.shape[1]:
        raise ValidationError(
            f"query feature length {q.size} does not match db feature length {feats.shape[1]}"
        )
    mu = feats.mean(axis=0)
    sd = feats.std(axis=0)
    keep = sd > 0.0
    labels = [e.label for e in db.entries]
    if not np.any(keep):
        # every coordinate is constant across the db; all candidates tie
        zeros = np.zeros((feats.shape[0], 1))
        return _match_vectors(zeros, labels, np.zeros(1), metric)
    fz = (feats[:, keep] - mu[keep]) / sd[keep]
    qz = (q[keep] - mu[keep]) / sd[keep]
    return _match_vectors(fz, labels, qz, metric)


def eval_accuracy_features(
    db: FingerprintDb,
    query_features: Sequence[Sequence[float]],
    metric: str = "combined",
    query_architectures: Sequence[str] | None = None,
) -> tuple[float, list[MatchResult]]:
    if not query_features:
        raise ValidationError("queries must be nonempty")
    if query_architectures is None:
        raise ValidationError("query_architectures is required for feature evaluation")
    if len(query_architectures) != len(query_features):
        raise ValidationError("query_architectures must parallel queries")
    arch_of = {e.label: e.architecture for e in db.entries}
    results = []
    correct = 0
    for feats, arch in zip(query_features, query_architectures):
        result = match_features(db, feats, metric)
        results.append(result)
        if arch_of[result.predicted_label] == str(arch):
            correct += 1
    return correct / len(query_features), results


def cosine_heatmap(
    curves: Sequence[CtCurve],
    family_of: Mapping[str, str] | None = None,
) -> tuple[np.ndarray, dict]:
    """All-pairs cosine similarity matrix plus intra/inter-family means.

    ``family_of`` maps curve labels to family tags (defaults to the label
    itself). Means are over unordered distinct pairs; a mean over an empty
    pair set is None.
    """
    if len(curves) < 2:
        raise ValidationError("heatmap needs at least two curves")
    length = curves[0].layer_count
    for c in curves[1:]:
        if c.layer_count != length:
            raise ValidationError(
                f"curve length mismatch: {c.label!r} has {c.layer_count}, expected {length}"
            )
    vectors = [np.asarray(c.scores, dtype=np.float64) for c in curves]
    n = len(vectors)
    sim = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        sim[i, i] = _cosine(vectors[i], vectors[i])
        for j in range(i + 1, n):
            value = _cosine(vectors[i], vectors[j])
            sim[i, j] = value
            sim[j, i] = value

    def family(label: str) -> str:
        return label if family_of is None else str(family_of[label])

    intra = []
    inter = []
    for i in range(n):
        for j in range(i + 1, n):
            if family(curves[i].label) == family(curves[j].label):
                intra.append(sim[i, j])
            else:
                inter.append(sim[i, j])
    stats = {
        "intra_mean": float(np.mean(intra)) if intra else None,
        "inter_mean": float(np.mean(inter)) if inter else None,
    }
    return sim, stats


def frechet_distance(mu1, cov1, mu2, cov2) -> float:
    """Squared-mean-gap plus covariance term between two Gaussians.

    ``|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2})`` with the cross term
    computed by eigendecomposition of ``S1^{1/2} S2 S1^{1/2}``. Inputs are
    symmetrized; eigenvalues below -1e-8 * lambda_max raise, tinier negatives
    are clamped to 0. The result is clamped to be nonnegative.
    """
    mu1 = np.asarray(mu1, dtype=np.float64).ravel()
    mu2 = np.asarray(mu2, dtype=np.float64).ravel()
    c1 = np.atleast_2d(np.asarray(cov1, dtype=np.float64))
    c2 = np.atleast_2d(np.asarray(cov2, dtype=np.float64))
    d = mu1.size
    if mu2.size != d or c1.shape != (d, d) or c2.shape != (d, d):
        raise ValidationError(
            f"dimension mismatch: mu sizes {mu1.size}/{mu2.size}, cov shapes {c1.shape}/{c2.shape}"
        )
    c1 = 0.5 * (c1 + c1.T)
    c2 = 0.5 * (c2 + c2.T)

    def _clamped_eigh(mat: np.ndarray, what: str):
        vals, vecs = np.linalg.eigh(mat)
        lam_max = max(float(vals.max()), 0.0)
        threshold = 1e-8 * lam_max
        if float(vals.min()) < -threshold:
            raise ValidationError(f"{what} is not PSD (eigenvalue {vals.min():.3e})")
        return np.clip(vals, 0.0, None), vecs

    vals1, vecs1 = _clamped_eigh(c1, "cov1")
    # validate cov2 the same way even though only its trace enters directly
    _clamped_eigh(c2, "cov2")
    root1 = (vecs1 * np.sqrt(vals1)) @ vecs1.T
    inner = root1 @ c2 @ root1
    inner = 0.5 * (inner + inner.T)
    cross_vals, _ = _clamped_eigh(inner, "cross product matrix")
    trace_sqrt = float(np.sqrt(cross_vals).sum())
    diff = mu1 - mu2
    value = float(diff @ diff) + float(np.trace(c1)) + float(np.trace(c2)) - 2.0 * trace_sqrt
    return max(value, 0.0)


def baseline_features(images, embeddings, reference_embeddings) -> np.ndarray:
    """7-vector baseline: per-channel pixel means and stds plus one Fréchet term.

    ``images`` is an iterable of Image objects or an (n, h, w, 3) uint8 array;
    pixel statistics use the population (divide-by-N) convention on the 0-255
    scale. The Fréchet coordinate compares the Gaussian fit of ``embeddings``
    (the dataset's final-layer matrix) against ``reference_embeddings``.
    """
    if isinstance(images, np.ndarray):
        pixel_stack = images
    else:
        arrays = [img.pixels if hasattr(img, "pixels") else np.asarray(img) for img in images]
        if not arrays:
            raise ValidationError("empty dataset")
        pixel_stack = np.stack(arrays)
    if pixel_stack.ndim != 4 or pixel_stack.shape[3] != 3 or pixel_stack.shape[0] < 1:
        raise ValidationError("images must stack to (n, height, width, 3)")
    flat = pixel_stack.reshape(-1, 3).astype(np.float64)
    means = flat.mean(axis=0)
    stds = flat.std(axis=0)

    emb = np.asarray(embeddings, dtype=np.float64)
    ref = np.asarray(reference_embeddings, dtype=np.float64)
    for name, mat in (("embeddings", emb), ("reference_embeddings", ref)):
        if mat.ndim != 2 or mat.shape[0] < 2:
            raise ValidationError(f"{name} must be a matrix with at least 2 rows")
        if not np.all(np.isfinite(mat)):
            raise ValidationError(f"{name} contains non-finite values")
    mu_e = emb.mean(axis=0)
    mu_r = ref.mean(axis=0)
    cov_e = np.cov(emb, rowvar=False)
    cov_r = np.cov(ref, rowvar=False)
    fd = frechet_distance(mu_e, np.atleast_2d(cov_e), mu_r, np.atleast_2d(cov_r))
    return np.concatenate([means, stds, [fd]])


def db_to_json_obj(db: FingerprintDb) -> dict:
    return {
        "version": db.version,
        "layer_count": db.layer_count,
        "entries": [
            {
                "label": e.label,
                "architecture": e.architecture,
                "curve": list(e.curve.scores),
                "baseline_features": None if e.baseline_features is None else list(e.baseline_features),
            }
            for e in db.entries
        ],
    }


def save_db(db: FingerprintDb, path) -> None:
    Path(path).write_text(json.dumps(db_to_json_obj(db), indent=2) + "\n", encoding="utf-8")


def load_db(source) -> FingerprintDb:
    """Parse and validate a db JSON file (path or file-like)."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"db file is not valid JSON: {exc}") from exc
    try:
        version = int(obj["version"])
        entries_obj = obj["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"db file missing required key: {exc}") from exc
    if version != DB_VERSION:
        raise FormatError(f"unsupported db version {version}")
    curves = []
    architectures = []
    features = []
    try:
        for entry in entries_obj:
            curves.append(CtCurve(label=str(entry["label"]), scores=tuple(entry["curve"])))
            architectures.append(str(entry["architecture"]))
            feats = entry.get("baseline_features")
            features.append(None if feats is None else tuple(float(v) for v in feats))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed db entry: {exc}") from exc
    db = build_db(curves, architectures, features)
    declared = obj.get("layer_count")
    if declared is not None and int(declared) != db.layer_count:
        raise FormatError(
            f"declared layer_count {declared} does not match entry curves ({db.layer_count})"
        )
    return db


def heatmap_to_csv(labels: Sequence[str], sim: np.ndarray) -> str:
    """Similarity matrix as CSV with a label header row and column, 6 decimals."""
    lines = ["label," + ",".join(labels)]
    for i, label in enumerate(labels):
        lines.append(label + "," + ",".join(f"{sim[i, j]:.6f}" for j in range(len(labels))))
    return "\n".join(lines) + "\n"
