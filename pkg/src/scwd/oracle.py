"""Slow, dense reference implementation used to check the fast pipeline.

Nothing here touches the sparse weight sets, the KD-tree regridder or the
vectorized quantile code: distances and kernel values are evaluated cell
by cell with :mod:`math`, quantile ranks use exact rational arithmetic,
and every reduction is a plain sequential loop.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .errors import OracleSizeError
from .geometry import LatLonGrid
from .results import AREA_MEAN, ScwdParams
from .stack import FieldStack

MAX_WORK_SHAPE = (32, 64)


def _unit(lat, lon):
    if abs(lat) == 90.0:
        return (0.0, 0.0, math.copysign(1.0, lat))
    phi, lam = math.radians(lat), math.radians(lon)
    return (math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi))


def _chord(u, v, radius):
    return radius * math.sqrt((u[0] - v[0]) ** 2 + (u[1] - v[1]) ** 2 + (u[2] - v[2]) ** 2)


def _cells(grid: LatLonGrid):
    return [(float(a), float(b)) for a in grid.lat for b in grid.lon]


def _kernel(d, l):
    if math.isinf(l):
        return 1.0
    if d > l:
        return 0.0
    x = d / l
    return (1 - x) ** 6 * (35 * x ** 2 + 18 * x + 3) / 3


def _areas(grid: LatLonGrid):
    raw = []
    for lat, _ in _cells(grid):
        raw.append(0.0 if abs(lat) == 90.0 else max(math.cos(math.radians(lat)), 0.0))
    total = sum(raw)
    return [a / total for a in raw]


def _regrid(stack: FieldStack, dst: LatLonGrid) -> np.ndarray:
    """Brute-force nearest neighbor; returns (T, n_dst_cells) float64."""
    src_values = stack.values.reshape(stack.n_times, -1).astype(np.float64)
    if stack.grid == dst:
        return src_values
    src = np.array([_unit(a, b) for a, b in _cells(stack.grid)])
    radius = dst.radius_km
    picks = []
    for a, b in _cells(dst):
        u = np.array(_unit(a, b))
        d = radius * np.sqrt(((src - u) ** 2).sum(axis=1))
        cutoff = d.min() * (1 + 1e-12) + radius * 1e-15
        picks.append(int(np.flatnonzero(d <= cutoff)[0]))
    return src_values[:, picks]


def dense_weights(params: ScwdParams) -> np.ndarray:
    """(n_centers, n_work_cells) normalized area-weighted kernel matrix."""
    work_cells = [_unit(a, b) for a, b in _cells(params.work)]
    areas = _areas(params.work)
    radius = params.work.radius_km
    rows = []
    for a, b in _cells(params.centers):
        c = _unit(a, b)
        raw = [_kernel(_chord(c, u, radius), params.range_km) * area for u, area in zip(work_cells, areas)]
        total = sum(raw)
        rows.append([x / total for x in raw])
    return np.array(rows)


def dense_slices(stack: FieldStack, params: ScwdParams, weights=None) -> np.ndarray:
    """(n_centers, T) slice values with NaN where over half the weight is missing."""
    _check_size(params)
    weights = dense_weights(params) if weights is None else weights
    fields = _regrid(stack, params.work)
    out = np.empty((weights.shape[0], fields.shape[0]))
    for s in range(weights.shape[0]):
        w = weights[s]
        for t in range(fields.shape[0]):
            f = fields[t]
            missing = np.isnan(f)
            miss_w = w[missing].sum()
            if miss_w > 0.5:
                out[s, t] = math.nan
            else:
                out[s, t] = (w[~missing] * f[~missing]).sum() / (1.0 - miss_w)
    return out


def _quantile(sample, q):
    """Nearest-rank quantile with a full sort on every call."""
    ordered = sorted(x for x in sample if not math.isnan(x))
    n = len(ordered)
    rank = math.ceil(Fraction(q).limit_denominator(1_000_000) * n)
    return ordered[max(rank, 1) - 1]


def _local_wd(row_a, row_b, levels, r, strict):
    if all(math.isnan(x) for x in row_a) or all(math.isnan(x) for x in row_b):
        return math.nan
    total = 0.0
    for q in levels:
        total += abs(_quantile(row_a, q) - _quantile(row_b, q)) ** r
    if not strict:
        total /= len(levels)
    return total ** (1.0 / r)


def _check_size(params: ScwdParams):
    n_lat, n_lon = params.work.shape
    if n_lat > MAX_WORK_SHAPE[0] or n_lon > MAX_WORK_SHAPE[1]:
        raise OracleSizeError(
            f"dense oracle supports work grids up to {MAX_WORK_SHAPE[0]}x{MAX_WORK_SHAPE[1]}, got {n_lat}x{n_lon}"
        )


def dense_oracle_scwd(stack_a: FieldStack, stack_b: FieldStack, params: ScwdParams) -> float:
    _check_size(params)
    weights = dense_weights(params)
    slices_a = dense_slices(stack_a, params, weights)
    slices_b = dense_slices(stack_b, params, weights)
    levels = [float(q) for q in params.quantiles.levels]
    r = params.r
    local = [
        _local_wd(list(slices_a[s]), list(slices_b[s]), levels, r, params.strict_paper_scaling)
        for s in range(slices_a.shape[0])
    ]
    center_areas = _areas(params.centers)
    num = 0.0
    den = 0.0
    for d, area in zip(local, center_areas):
        if math.isnan(d):
            continue
        if params.aggregation == AREA_MEAN:
            num += area * d ** r
            den += area
        else:
            num += d ** r
    if params.aggregation == AREA_MEAN:
        num /= den
    return num ** (1.0 / r)
