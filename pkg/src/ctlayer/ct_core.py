"""Copy-detection scores: NN distance profiles, per-cell rank statistics,
the weighted aggregate score, and the per-layer curve.

Sign contract used throughout: the statistic compares generated-sample
distances against test-sample distances to the training set. Negative values
mean generated distances are stochastically SMALLER than test distances
(training data is being copied); positive values mean LARGER (underfitting);
near zero means the two distance samples are exchangeable.

All reductions run in a fixed, content-derived order (sorted cell index,
value-sorted rank sums), so results are bit-identical across runs and
invariant to row permutation of any input set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._dist import nn_sq_dists
from .errors import CtlayerError, ThresholdError, ValidationError
from .partition import Partition, _as_matrix, assign_cells, fit_kmeans
from .tensor_io import EmbeddingSet, validate_triple


@dataclass(frozen=True)
class CellStats:
    """Per-cell sample counts, test-mass weight, and rank statistic.

    ``z_u`` is None exactly when the cell fails the sample-count threshold
    (``included`` is False); weights always sum to 1 across all cells of a
    partition, excluded cells included.
    """

    cell_index: int
    n_test: int
    n_gen: int
    weight: float
    z_u: float | None
    included: bool


@dataclass(frozen=True)
class CtConfig:
    """Knobs for the per-layer computation; defaults match the CLI."""

    k: int = 5
    seed: int = 0
    tau_p: int = 10
    tau_q: int = 10
    max_iters: int = 100
    tol: float = 1e-6
    tie_correction: bool = True
    n_init: int = 10


@dataclass(frozen=True)
class CtCurve:
    """Labeled vector of per-layer scores; the fingerprint object."""

    label: str
    scores: tuple[float, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if len(self.scores) < 1:
            raise ValidationError("curve needs at least one layer score")
        if not all(math.isfinite(s) for s in self.scores):
            raise ValidationError("curve scores must be finite")

    @property
    def layer_count(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class LayerDiagnostics:
    layer: int
    ct: float
    cells: tuple[CellStats, ...]


def nn_sq_distance(x, train_layer) -> float:
    """Exact minimum squared Euclidean distance from ``x`` to any training row.

    Brute force over the training set is the reference semantics; the batched
    path used elsewhere reproduces it bit for bit.
    """
    t = _as_matrix(train_layer, "train_layer")
    xv = np.asarray(x, dtype=np.float64)
    if xv.ndim != 1:
        raise ValidationError("x must be a 1-D vector")
    if not np.all(np.isfinite(xv)):
        raise ValidationError("x contains non-finite values")
    if xv.shape[0] != t.shape[1]:
        raise ValidationError(f"dim mismatch: x has dim {xv.shape[0]}, train has dim {t.shape[1]}")
    return float(nn_sq_dists(xv[None, :], t)[0])


def _as_distance_list(values, name: str) -> list[float]:
    if isinstance(values, np.ndarray):
        if values.ndim != 1:
            raise ValidationError(f"{name} must be 1-D")
        out = values.astype(np.float64).tolist()
    else:
        try:
            out = [float(v) for v in values]
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{name} must be a flat list of reals") from exc
    if not out:
        raise ValidationError("empty distance list")
    for v in out:
        if not math.isfinite(v):
            raise ValidationError(f"{name} must be finite")
    return out


def mann_whitney_zu(dist_test, dist_gen, tie_correction: bool = True) -> float:
    """Normal-approximated rank statistic comparing two distance samples.

    Pools both samples, midranks ties, and forms U for the generated side:
    ``U_Q = R_Q - m(m+1)/2``. The returned value is ``(U_Q - mn/2) / sigma`` with
    the plain variance ``mn(m+n+1)/12`` or, when ``tie_correction`` is on
    (default), the tie-adjusted variance
    ``(mn/12) * [(N+1) - sum(t^3 - t) / (N(N-1))]``. Returns 0 when every
    pooled value is tied (sigma would be 0). Negative output means the
    generated distances are stochastically smaller (copying).

    All rank arithmetic is exact (midranks are halves of small integers), so
    the result is antisymmetric in its arguments bit for bit and invariant to
    the order of values within each list.
    """
    p = _as_distance_list(dist_test, "dist_test")
    q = _as_distance_list(dist_gen, "dist_gen")
    n = len(p)
    m = len(q)
    big_n = n + m
    pooled = [(v, 0) for v in p]
    pooled.extend((v, 1) for v in q)
    pooled.sort(key=lambda pair: pair[0])
    r_gen = 0.0
    tie_term = 0.0
    i = 0
    while i < big_n:
        j = i
        value = pooled[i][0]
        gen_in_group = pooled[i][1]
        while j + 1 < big_n and pooled[j + 1][0] == value:
            j += 1
            gen_in_group += pooled[j][1]
        # 0-based positions i..j carry 1-based ranks i+1..j+1
        r_gen += (i + j + 2) / 2.0 * gen_in_group
        size = j - i + 1
        tie_term += size**3 - size
        i = j + 1
    u_q = r_gen - m * (m + 1) / 2.0
    if tie_correction:
        var = (m * n / 12.0) * ((big_n + 1) - tie_term / (big_n * (big_n - 1.0)))
    else:
        var = m * n * (big_n + 1) / 12.0
    if var <= 0.0:
        return 0.0
    return (u_q - m * n / 2.0) / math.sqrt(var)


def cell_ct_stats(
    partition: Partition,
    train_layer,
    test_layer,
    gen_layer,
    tau_p: int = 10,
    tau_q: int = 10,
    tie_correction: bool = True,
) -> list[CellStats]:
    """Per-cell distance profiles and rank statistics for one layer.

    Test and generated samples are assigned to the fitted cells; each sample's
    distance is its exact NN squared distance to the FULL training set. Cells
    with fewer than ``tau_p`` test or ``tau_q`` generated samples are marked
    excluded and carry no statistic.
    """
    if tau_p < 1 or tau_q < 1:
        raise ValidationError("thresholds tau_p and tau_q must be >= 1")
    train = _as_matrix(train_layer, "train_layer")
    test = _as_matrix(test_layer, "test_layer")
    gen = _as_matrix(gen_layer, "gen_layer")
    if train.shape[1] != partition.dim:
        raise ValidationError(
            f"dim mismatch: train has dim {train.shape[1]}, partition has dim {partition.dim}"
        )
    if partition.training_assignment.shape[0] != train.shape[0]:
        raise ValidationError("partition was not fitted on a training set of this size")

    test_cells = assign_cells(partition, test)
    gen_cells = assign_cells(partition, gen)
    d_test = nn_sq_dists(test, train)
    d_gen = nn_sq_dists(gen, train)

    total_test = test.shape[0]
    stats = []
    for j in range(partition.k):
        dt = d_test[test_cells == j]
        dg = d_gen[gen_cells == j]
        n_t = int(dt.size)
        n_g = int(dg.size)
        included = n_t >= tau_p and n_g >= tau_q
        z = mann_whitney_zu(dt, dg, tie_correction) if included else None
        stats.append(
            CellStats(
                cell_index=j,
                n_test=n_t,
                n_gen=n_g,
                weight=n_t / total_test,
                z_u=z,
                included=included,
            )
        )
    return stats


def ct_score(cells: Sequence[CellStats]) -> float:
    """Test-mass-weighted average of the included cells' statistics."""
    num = 0.0
    den = 0.0
    for cell in sorted(cells, key=lambda c: c.cell_index):
        if cell.included:
            num += cell.weight * cell.z_u
            den += cell.weight
    if den == 0.0:
        raise ThresholdError("no cell passes the sample-count threshold")
    return num / den


def ct_curve(
    train: EmbeddingSet,
    test: EmbeddingSet,
    gen: EmbeddingSet,
    config: CtConfig | None = None,
    label: str | None = None,
) -> tuple[CtCurve, list[LayerDiagnostics]]:
    """Per-layer scores over a validated triple; deterministic given config.

    Each layer is processed independently: cells are fitted on the training
    layer, samples assigned, and the weighted score computed. Any per-layer
    failure aborts the whole curve with the layer index named.
    """
    cfg = config if config is not None else CtConfig()
    triple = validate_triple(train, test, gen)
    scores: list[float] = []
    diagnostics: list[LayerDiagnostics] = []
    for idx in range(triple.layer_count):
        try:
            part = fit_kmeans(
                train.layers[idx],
                cfg.k,
                seed=cfg.seed,
                max_iters=cfg.max_iters,
                tol=cfg.tol,
                n_init=cfg.n_init,
            )
            cells = cell_ct_stats(
                part,
                train.layers[idx],
                test.layers[idx],
                gen.layers[idx],
                tau_p=cfg.tau_p,
                tau_q=cfg.tau_q,
                tie_correction=cfg.tie_correction,
            )
            score = ct_score(cells)
        except CtlayerError as exc:
            raise type(exc)(f"layer {idx}: {exc}") from exc
        scores.append(score)
        diagnostics.append(LayerDiagnostics(layer=idx, ct=score, cells=tuple(cells)))
    metadata = {
        "k": cfg.k,
        "seed": cfg.seed,
        "tau_p": cfg.tau_p,
        "tau_q": cfg.tau_q,
        "max_iters": cfg.max_iters,
        "tol": cfg.tol,
        "tie_correction": cfg.tie_correction,
        "n_init": cfg.n_init,
        "n_train": triple.n_train,
        "n_test": triple.n_test,
        "n_gen": triple.n_gen,
    }
    curve = CtCurve(
        label=label if label is not None else gen.label,
        scores=tuple(scores),
        metadata=metadata,
    )
    return curve, diagnostics


def curve_to_json_obj(curve: CtCurve) -> dict:
    return {"label": curve.label, "scores": list(curve.scores)}


def curve_to_csv(curve: CtCurve) -> str:
    lines = ["layer,ct"]
    lines.extend(f"{i},{score!r}" for i, score in enumerate(curve.scores))
    return "\n".join(lines) + "\n"


def diagnostics_to_json_obj(curve: CtCurve, diagnostics: Sequence[LayerDiagnostics]) -> dict:
    return {
        "label": curve.label,
        "config": dict(curve.metadata),
        "per_layer": [
            {
                "layer": diag.layer,
                "ct": diag.ct,
                "cells": [
                    {
                        "cell_index": c.cell_index,
                        "n_test": c.n_test,
                        "n_gen": c.n_gen,
                        "weight": c.weight,
                        "z_u": c.z_u,
                        "included": c.included,
                    }
                    for c in diag.cells
                ],
            }
            for diag in diagnostics
        ],
    }
