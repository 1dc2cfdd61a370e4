"""Clamped-column prefix sums shared by the solvers and the simulator."""

from __future__ import annotations

import numpy as np

from .error_model import ErrorSurface


def column_prefix(surface: ErrorSurface, length: int) -> tuple[np.ndarray, float]:
    """(prefix, tail) for one length column.

    prefix[n] = sum of the column over ages [0, n) for n <= delta_max + 1;
    tail is the clamp value used for every age past delta_max.
    """
    col = surface.column(length)
    prefix = np.empty(col.size + 1)
    prefix[0] = 0.0
    np.cumsum(col, out=prefix[1:])
    prefix.setflags(write=False)
    return prefix, float(col[-1])


def range_sum(prefix: np.ndarray, tail: float, start: int, count: int) -> float:
    """Sum of the clamped column over ages [start, start + count)."""
    if count <= 0:
        return 0.0
    rows = prefix.size - 1
    if start >= rows:
        return count * tail
    end = start + count
    core_end = end if end < rows else rows
    total = float(prefix[core_end] - prefix[start])
    if end > rows:
        total += (end - rows) * tail
    return total


def range_sum_vec(prefix: np.ndarray, tail: float, starts, counts) -> np.ndarray:
    """Vectorized range_sum; starts/counts broadcast against each other."""
    starts = np.asarray(starts)
    counts = np.asarray(counts)
    rows = prefix.size - 1
    ends = starts + counts
    core = prefix[np.minimum(ends, rows)] - prefix[np.minimum(starts, rows)]
    over = np.maximum(ends - rows, 0) - np.maximum(starts - rows, 0)
    return core + over * tail


def index_column(m: np.ndarray, tau_bound: int) -> np.ndarray:
    """Per-age minimum over horizons 1..tau_bound of the forward running mean.

    m is the expected-error sequence (constant past its last entry); the
    result drives the threshold waiting rule.
    """
    n = m.size
    ext = np.concatenate([m, np.full(tau_bound, m[-1])])
    prefix = np.concatenate([[0.0], np.cumsum(ext)])
    taus = np.arange(1, tau_bound + 1)
    ages = np.arange(n)
    windows = (prefix[ages[None, :] + taus[:, None]] - prefix[ages][None, :]) / taus[:, None]
    return windows.min(axis=0)


TIE_REL_TOL = 1e-9


def first_crossing(column: np.ndarray, threshold: float) -> np.ndarray | None:
    """For each age, offset of the first later age whose column value meets
    the threshold (the column is constant past its end).  None if even the
    final entry stays below the threshold.

    The comparison carries a small relative slack so that exact-tie cases
    (e.g. constant surfaces, where prefix-sum rounding perturbs values by a
    few ulps) cross deterministically at the first age.
    """
    eps = TIE_REL_TOL * max(1.0, abs(threshold))
    if column[-1] < threshold - eps:
        return None
    n = column.size
    positions = np.where(column >= threshold - eps, np.arange(n), n)
    nxt = np.minimum.accumulate(positions[::-1])[::-1]
    return nxt - np.arange(n)


def argmin_first(values: np.ndarray, rel_tol: float = TIE_REL_TOL) -> int:
    """Index of the first entry within tolerance of the minimum: lexicographic
    tie-breaking that is robust to prefix-sum rounding noise."""
    v = np.asarray(values)
    vmin = float(v.min())
    eps = rel_tol * max(1.0, abs(vmin))
    return int(np.argmax(v <= vmin + eps))


def strictly_less(value: float, best: float, rel_tol: float = TIE_REL_TOL) -> bool:
    """value beats best by more than the tie tolerance."""
    return value < best - rel_tol * max(1.0, abs(best))
