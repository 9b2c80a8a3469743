"""Deterministic k-means partitioning of an embedding layer.

The partition is always fitted on training embeddings only; test and
generated samples are assigned to the fitted cells afterwards. Fitting is
k-means++ seeding followed by Lloyd iterations, restarted ``n_init`` times
from seeds spawned deterministically off the caller's seed, keeping the
lowest-WCSS run. Rows are processed in a canonical (lexicographically
sorted) order internally, so the fit is invariant to input row permutation
and reproducible bit for bit given (inputs, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._dist import pairwise_sq_dists
from .errors import ValidationError


@dataclass(frozen=True)
class Partition:
    """Fitted cell structure for one layer.

    ``training_assignment[i]`` is the index of the centroid nearest to
    training row i (ties resolved toward the lower centroid index).
    ``wcss_history`` holds the within-cluster sum of squares measured after
    every assignment pass of the winning restart, final pass included, and is
    non-increasing.
    """

    k: int
    centroids: np.ndarray
    training_assignment: np.ndarray
    wcss: float
    seed: int
    iterations_run: int
    wcss_history: tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be a nonempty 2-D matrix")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted draws from the seeded generator."""
    n = x.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = pairwise_sq_dists(x, x[chosen[0] : chosen[0] + 1])[:, 0]
    for i in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining mass sits on already-chosen points (duplicates)
            idx = int(rng.integers(n))
        chosen[i] = idx
        d2 = np.minimum(d2, pairwise_sq_dists(x, x[idx : idx + 1])[:, 0])
    return x[chosen].copy()


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iters: int, tol: float):
    """Lloyd iterations with farthest-point reseeding of empty clusters."""
    n = x.shape[0]
    k = centroids.shape[0]
    rows = np.arange(n)
    history: list[float] = []
    iterations = 0
    for _ in range(max_iters):
        d2 = pairwise_sq_dists(x, centroids)
        assign = np.argmin(d2, axis=1)
        point_cost = d2[rows, assign]
        wcss = float(point_cost.sum())
        if history:
            assert wcss <= history[-1] * (1.0 + 1e-12) + 1e-12, "WCSS increased across a Lloyd iteration"
        history.append(wcss)

        new_centroids = np.empty_like(centroids)
        empty = []
        for j in range(k):
            members = assign == j
            count = int(members.sum())
            if count:
                new_centroids[j] = x[members].sum(axis=0) / count
            else:
                empty.append(j)
        if empty:
            cost = point_cost.copy()
            for j in empty:
                far = int(np.argmax(cost))
                new_centroids[j] = x[far]
                cost[far] = -1.0
        iterations += 1
        shift_vec = new_centroids - centroids
        shift = float(np.max(np.einsum("ij,ij->i", shift_vec, shift_vec)))
        centroids = new_centroids
        if shift <= tol:
            break

    d2 = pairwise_sq_dists(x, centroids)
    assign = np.argmin(d2, axis=1)
    wcss = float(d2[rows, assign].sum())
    history.append(wcss)
    return centroids, assign, wcss, iterations, history


def fit_kmeans(
    train_layer,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
    n_init: int = 10,
) -> Partition:
    """Fit k cells on one training layer; deterministic given (inputs, seed).

    Runs ``n_init`` independent k-means++/Lloyd restarts (seeds spawned from
    ``seed``) and keeps the lowest final WCSS, first run winning ties.
    Iteration stops when the maximum squared centroid displacement drops to
    ``tol`` or after ``max_iters`` iterations; empty clusters are reseeded to
    the point currently farthest from its assigned centroid.
    """
    x = _as_matrix(train_layer, "train_layer")
    n = x.shape[0]
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValidationError("k must be an integer >= 1")
    if k > n:
        raise ValidationError(f"k={k} exceeds the {n} training samples")
    if max_iters < 1:
        raise ValidationError("max_iters must be >= 1")
    if tol < 0:
        raise ValidationError("tol must be >= 0")
    if n_init < 1:
        raise ValidationError("n_init must be >= 1")

    order = np.lexsort(x.T[::-1])
    x_canon = np.ascontiguousarray(x[order])

    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(child)
        init = _kmeans_pp_init(x_canon, int(k), rng)
        result = _lloyd(x_canon, init, max_iters, tol)
        if best is None or result[2] < best[2]:
            best = result
    centroids, assign_canon, wcss, iterations, history = best

    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = assign_canon
    centroids = np.ascontiguousarray(centroids)
    centroids.flags.writeable = False
    assignment.flags.writeable = False
    return Partition(
        k=int(k),
        centroids=centroids,
        training_assignment=assignment,
        wcss=wcss,
        seed=int(seed),
        iterations_run=iterations,
        wcss_history=tuple(history),
    )


def assign_cells(partition: Partition, samples) -> np.ndarray:
    """Map each sample row to its nearest centroid (ties -> lowest index)."""
    s = _as_matrix(samples, "samples")
    if s.shape[1] != partition.dim:
        raise ValidationError(
            f"dim mismatch: samples have dim {s.shape[1]}, centroids have dim {partition.dim}"
        )
    return np.argmin(pairwise_sq_dists(s, partition.centroids), axis=1)
