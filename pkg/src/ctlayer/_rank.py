"""Midrank computation shared by the rank statistic and the combined matcher."""

from __future__ import annotations

import numpy as np


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks of ``values`` with ties assigned their average rank.

    Midranks are halves of integers, so every value (and every partial sum of
    up to ~2**51 of them) is exactly representable in float64; rank sums are
    therefore independent of accumulation order.
    """
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    n = values.size
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [n]])
    group_rank = 0.5 * (starts + ends + 1)
    ranks_sorted = np.repeat(group_rank, ends - starts)
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = ranks_sorted
    return ranks
