"""Empirical quantile functions and the one-dimensional Wasserstein distance."""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import EmptySampleError, GridMismatchError, InvalidArgumentError

DEFAULT_LEVELS = 200

# q * n within this relative distance of an integer is treated as that integer.
_RANK_SNAP = 1e-9


@dataclasses.dataclass(frozen=True, eq=False)
class QuantileGrid:
    levels: np.ndarray

    def __post_init__(self):
        levels = np.array(self.levels, dtype=np.float64).reshape(-1)
        if levels.size == 0:
            raise InvalidArgumentError("quantile grid must not be empty")
        if np.any(levels <= 0) or np.any(levels >= 1):
            raise InvalidArgumentError("quantile levels must lie in (0, 1)")
        if np.any(np.diff(levels) <= 0):
            raise InvalidArgumentError("quantile levels must be strictly increasing")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def midpoints(cls, count: int = DEFAULT_LEVELS) -> QuantileGrid:
        """Levels (k - 0.5) / count for k = 1..count."""
        if count < 1:
            raise InvalidArgumentError("quantile count must be >= 1")
        return cls((np.arange(1, count + 1) - 0.5) / count)

    @property
    def count(self) -> int:
        return self.levels.size

    def __eq__(self, other):
        if not isinstance(other, QuantileGrid):
            return NotImplemented
        return np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash(self.levels.tobytes())


@dataclasses.dataclass(frozen=True, eq=False)
class QuantileVector:
    values: np.ndarray
    sample_size: int
    grid: QuantileGrid


def nearest_ranks(levels, n):
    """0-based positions ceil(q * n) - 1 of the nearest-rank quantiles.

    ``n`` may be an array (one sample size per row); the result then has
    shape (len(n), len(levels)).
    """
    levels = np.asarray(levels, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    scaled = np.multiply.outer(n, levels) if n.ndim else levels * n
    nearest = np.rint(scaled)
    snap = np.abs(scaled - nearest) <= _RANK_SNAP * np.maximum(1.0, scaled)
    ranks = np.where(snap, nearest, np.ceil(scaled))
    return np.maximum(ranks, 1).astype(np.int64) - 1


def empirical_quantiles(sample, grid: QuantileGrid) -> QuantileVector:
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    x = np.sort(x[~np.isnan(x)])
    if x.size == 0:
        raise EmptySampleError("sample has no non-missing observations")
    return QuantileVector(x[nearest_ranks(grid.levels, x.size)], int(x.size), grid)


def quantile_matrix(rows, grid: QuantileGrid) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise empirical quantiles of a (S, T) matrix with NaN entries.

    Returns ``(values, counts)``; rows without any observation come back
    as all-NaN with count 0.
    """
    rows = np.asarray(rows, dtype=np.float64)
    counts = np.sum(~np.isnan(rows), axis=1)
    ordered = np.sort(rows, axis=1)  # NaN sorts last
    pos = nearest_ranks(grid.levels, np.maximum(counts, 1))
    values = np.take_along_axis(ordered, pos, axis=1)
    values[counts == 0] = np.nan
    return values, counts


def quantile_gap(a_values, b_values, r: float, strict_paper_scaling: bool = False):
    """Order-r distance between quantile vectors stored along the last axis.

    The mean over levels approximates the integral over (0, 1); with
    ``strict_paper_scaling`` the bare sum over levels is used instead.
    """
    diff = np.abs(np.asarray(a_values, dtype=np.float64) - np.asarray(b_values, dtype=np.float64))
    if r == 1:
        total = diff.sum(axis=-1)
    else:
        total = (diff ** r).sum(axis=-1)
    if not strict_paper_scaling:
        total = total / diff.shape[-1]
    return total if r == 1 else total ** (1.0 / r)


def check_order(r) -> float:
    r = float(r)
    if not r >= 1 or math.isinf(r):
        raise InvalidArgumentError(f"Wasserstein order must be a finite number >= 1, got {r}")
    return r


def quantile_wd(a: QuantileVector, b: QuantileVector, r: float = 2, strict_paper_scaling: bool = False) -> float:
    r = check_order(r)
    if a.grid != b.grid:
        raise GridMismatchError("quantile vectors were built on different grids")
    return float(quantile_gap(a.values, b.values, r, strict_paper_scaling))


def gaussian_w2(mu1: float, sigma1: float, mu2: float, sigma2: float) -> float:
    """Closed-form order-2 distance between two univariate normals."""
    if sigma1 < 0 or sigma2 < 0:
        raise InvalidArgumentError("standard deviations must be nonnegative")
    return math.hypot(mu1 - mu2, sigma1 - sigma2)
