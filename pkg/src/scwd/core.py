"""End-to-end distance pipeline and the global-mean baseline.

A dataset is reduced once to per-center quantile functions of its slices
(:func:`sliced_quantiles`); any two reductions built with the same
parameters can then be compared (:func:`distance_from_quantiles`). That
mirrors the compute-once-per-dataset structure needed for rankings.
"""
from __future__ import annotations

import numpy as np

from .cache import get_weights
from .errors import CacheMismatchError, EmptyMapError, EmptySampleError, GridMismatchError
from .geometry import LatLonGrid, cell_areas, regrid_nearest
from .kernel import MISSING_WEIGHT_LIMIT, SliceMatrix, SparseWeightSet, slice_stack
from .quantiles import QuantileGrid, check_order, empirical_quantiles, quantile_gap, quantile_matrix, quantile_wd
from .results import AREA_MEAN, PAPER_SUM, DistanceResult, LocalWDMap, ScwdParams, SlicedQuantiles
from .stack import FieldStack


def global_mean_series(stack: FieldStack) -> np.ndarray:
    """Area-weighted global mean of every timestep.

    Uses the same missing-data rule as the slicer: NaN when more than half
    of the area is missing, otherwise the mean over present cells.
    """
    areas = cell_areas(stack.grid)
    values = stack.flat()
    missing = np.isnan(values)
    num = np.where(missing, 0.0, values) @ areas
    miss_area = missing.astype(np.float64) @ areas
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / (1.0 - miss_area)
    out[miss_area > MISSING_WEIGHT_LIMIT] = np.nan
    return out


def sliced_quantiles(
    stack: FieldStack,
    params: ScwdParams,
    threads=None,
    cache_dir=None,
    name: str = "",
    weights: SparseWeightSet | None = None,
) -> SlicedQuantiles:
    """Regrid, slice and take per-center quantiles of one dataset."""
    work_stack = regrid_nearest(stack, params.work)
    if weights is None:
        weights = get_weights(params.centers, params.work, params.range_km, threads=threads, cache_dir=cache_dir)
    elif weights.centers != params.centers or weights.work != params.work or weights.range_km != params.range_km:
        raise CacheMismatchError("weight set does not match the distance parameters")
    slices = slice_stack(work_stack, weights, threads=threads)
    values, counts = quantile_matrix(slices.values, params.quantiles)
    series = global_mean_series(work_stack)
    g_values, g_counts = quantile_matrix(series[None, :], params.quantiles)
    return SlicedQuantiles(
        params=params,
        values=values,
        counts=counts,
        missing_slices=slices.n_missing,
        n_times=stack.n_times,
        global_values=g_values[0],
        global_count=int(g_counts[0]),
        name=name,
    )


def local_wd_map(
    slices_a: SliceMatrix,
    slices_b: SliceMatrix,
    quantiles: QuantileGrid,
    r: float = 2,
    strict_paper_scaling: bool = False,
) -> LocalWDMap:
    r = check_order(r)
    if slices_a.centers != slices_b.centers:
        raise GridMismatchError("slice matrices live on different center grids")
    qa, _ = quantile_matrix(slices_a.values, quantiles)
    qb, _ = quantile_matrix(slices_b.values, quantiles)
    return LocalWDMap(slices_a.centers, quantile_gap(qa, qb, r, strict_paper_scaling), r)


def aggregate(wd_map: LocalWDMap, params: ScwdParams) -> float:
    r = wd_map.r
    present = ~np.isnan(wd_map.values)
    if not present.any():
        raise EmptyMapError("every center of the local map is missing")
    powered = wd_map.values[present] ** r
    if params.aggregation == PAPER_SUM:
        total = powered.sum()
    elif params.aggregation == AREA_MEAN:
        areas = cell_areas(wd_map.centers)[present]
        area_sum = areas.sum()
        if area_sum <= 0:
            raise EmptyMapError("present centers carry no area")
        total = (areas * powered).sum() / area_sum
    else:  # pragma: no cover - ScwdParams validates
        raise ValueError(params.aggregation)
    return float(total ** (1.0 / r))


def _check_compatible(qa: SlicedQuantiles, qb: SlicedQuantiles, params: ScwdParams | None) -> ScwdParams:
    if qa.digest != qb.digest:
        raise CacheMismatchError(
            f"sliced quantiles {qa.name or 'a'!r} and {qb.name or 'b'!r} were built with different parameters"
        )
    if params is None:
        return qa.params
    if params.slicing_digest() != qa.digest:
        raise CacheMismatchError("sliced quantiles do not match the requested parameters")
    return params


def distance_from_quantiles(qa: SlicedQuantiles, qb: SlicedQuantiles, params: ScwdParams | None = None) -> DistanceResult:
    """SCWD between two cached reductions.

    ``params`` supplies aggregation and scaling; its slicing parameters
    must match the caches.
    """
    params = _check_compatible(qa, qb, params)
    values = quantile_gap(qa.values, qb.values, params.r, params.strict_paper_scaling)
    wd_map = LocalWDMap(params.centers, values, params.r)
    return DistanceResult(aggregate(wd_map, params), wd_map, params, qa.name, qb.name)


def gmwd_from_quantiles(qa: SlicedQuantiles, qb: SlicedQuantiles, strict_paper_scaling: bool = False) -> float:
    _check_compatible(qa, qb, None)
    if qa.global_count == 0 or qb.global_count == 0:
        raise EmptySampleError("global-mean series has no usable timestep")
    return float(quantile_gap(qa.global_values, qb.global_values, qa.params.r, strict_paper_scaling))


def scwd(
    stack_a: FieldStack,
    stack_b: FieldStack,
    params: ScwdParams | None = None,
    threads=None,
    cache_dir=None,
) -> DistanceResult:
    params = params or ScwdParams()
    weights = get_weights(params.centers, params.work, params.range_km, threads=threads, cache_dir=cache_dir)
    qa = sliced_quantiles(stack_a, params, threads=threads, weights=weights, name=stack_a.variable)
    qb = sliced_quantiles(stack_b, params, threads=threads, weights=weights, name=stack_b.variable)
    return distance_from_quantiles(qa, qb, params)


def gmwd(
    stack_a: FieldStack,
    stack_b: FieldStack,
    r: float = 2,
    quantiles: QuantileGrid | None = None,
    work: LatLonGrid | None = None,
    strict_paper_scaling: bool = False,
) -> float:
    """Order-r distance between the two stacks' global-mean time series.

    With ``work`` given, both stacks are first regridded to it, matching
    what the flat-kernel pipeline sees.
    """
    r = check_order(r)
    quantiles = quantiles or QuantileGrid.midpoints()
    if work is not None:
        stack_a = regrid_nearest(stack_a, work)
        stack_b = regrid_nearest(stack_b, work)
    qa = empirical_quantiles(global_mean_series(stack_a), quantiles)
    qb = empirical_quantiles(global_mean_series(stack_b), quantiles)
    return quantile_wd(qa, qb, r, strict_paper_scaling)
