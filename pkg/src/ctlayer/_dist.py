"""Exact squared-Euclidean distance kernels shared by partitioning and scoring.

Distances are always computed as explicit ``sum((a - b) ** 2)`` in float64,
never through the dot-product expansion, so values (and therefore ties and
exact zeros) match the brute-force definition bit for bit. Work is blocked
over rows only; each (row, row) pair is an independent reduction, so block
size cannot change any output value.
"""

from __future__ import annotations

import numpy as np

# Cap on elements of one broadcast diff block (~2 MB of float64): large
# temporaries fall out of cache and slow the kernel several-fold.
_BLOCK_ELEMENTS = 262_144


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All squared distances between rows of ``a`` (n, d) and rows of ``b`` (k, d)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    n, d = a.shape
    k = b.shape[0]
    out = np.empty((n, k), dtype=np.float64)
    step = max(1, _BLOCK_ELEMENTS // max(1, k * d))
    for start in range(0, n, step):
        stop = min(n, start + step)
        diff = a[start:stop, None, :] - b[None, :, :]
        np.einsum("ijk,ijk->ij", diff, diff, out=out[start:stop])
    return out


def nn_sq_dists(queries: np.ndarray, train: np.ndarray) -> np.ndarray:
    """Per-query exact minimum squared distance to any training row.

    Equivalent to ``pairwise_sq_dists(queries, train).min(axis=1)`` but blocks
    over training rows so the full matrix is never materialized. Taking the
    minimum is order-independent even in floating point, so the result equals
    the brute-force reference exactly.
    """
    q = np.ascontiguousarray(queries, dtype=np.float64)
    t = np.ascontiguousarray(train, dtype=np.float64)
    n, d = q.shape
    best = np.full(n, np.inf, dtype=np.float64)
    step = max(1, _BLOCK_ELEMENTS // max(1, n * d))
    for start in range(0, t.shape[0], step):
        stop = min(t.shape[0], start + step)
        block = pairwise_sq_dists(q, t[start:stop])
        np.minimum(best, block.min(axis=1), out=best)
    return best
