"""Wendland kernel weights and the convolution slicer.

Each center's slice is a locally weighted mean of the field: kernel values
are multiplied by the work-grid cell areas, normalized to sum to one, and
stored sparsely sorted by work-cell index so every reduction runs in a
fixed order.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from ._parallel import chunks, ordered_map
from .errors import EmptyKernelError, GridMismatchError, InvalidArgumentError
from .geometry import LatLonGrid, cell_areas
from .stack import FieldStack

FLAT = "flat"

# A slice is missing when more than this share of its weight sits on missing cells.
MISSING_WEIGHT_LIMIT = 0.5

_CENTER_CHUNK = 256
_TIME_CHUNK = 64


def parse_range(value) -> float:
    """Turn a range argument (km, or the string ``"flat"``) into a float.

    The flat kernel is represented as ``math.inf``.
    """
    if isinstance(value, str):
        text = value.strip().lower()
        if text == FLAT:
            return math.inf
        try:
            value = float(text)
        except ValueError:
            raise InvalidArgumentError(f"range must be a number of km or 'flat', got {value!r}")
    value = float(value)
    if math.isnan(value) or value <= 0:
        raise InvalidArgumentError(f"range must be positive, got {value}")
    return value


def format_range(range_km: float) -> str:
    return FLAT if math.isinf(range_km) else f"{range_km:g}"


def wendland(d, l):
    """Wendland kernel of range ``l`` at distance ``d`` (both km).

    With x = d / l the value is (1 - x)^6 (35 x^2 + 18 x + 3) / 3 on
    [0, 1] and zero beyond. ``l = inf`` gives the flat kernel (1 everywhere).
    """
    d_arr = np.asarray(d, dtype=np.float64)
    if np.any(d_arr < 0) or np.any(np.isnan(d_arr)):
        raise InvalidArgumentError("distance must be nonnegative")
    if not l > 0:
        raise InvalidArgumentError("range must be positive")
    if math.isinf(l):
        out = np.ones_like(d_arr)
    else:
        x = d_arr / l
        inside = x <= 1.0
        xc = np.where(inside, x, 1.0)
        out = np.where(inside, (1.0 - xc) ** 6 * (35.0 * xc * xc + 18.0 * xc + 3.0) / 3.0, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


@dataclasses.dataclass(frozen=True, eq=False)
class SparseWeightSet:
    """Normalized kernel weights for every center, in CSR layout.

    Rows may be shared between centers (``row_of_center``); the flat kernel
    stores a single row used by all centers.
    """

    centers: LatLonGrid
    work: LatLonGrid
    range_km: float
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    row_of_center: np.ndarray

    @property
    def flat(self) -> bool:
        return math.isinf(self.range_km)

    @property
    def n_centers(self) -> int:
        return self.centers.size

    @property
    def n_rows(self) -> int:
        return self.indptr.size - 1

    def center_weights(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        row = self.row_of_center[i]
        lo, hi = self.indptr[row], self.indptr[row + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def nonzeros_per_center(self) -> np.ndarray:
        return np.diff(self.indptr)[self.row_of_center]

    def matrix(self) -> sparse.csr_matrix:
        """Unique rows as a (n_rows, n_work_cells) CSR matrix."""
        return sparse.csr_matrix(
            (self.weights, self.indices, self.indptr), shape=(self.n_rows, self.work.size)
        )

    def digest(self) -> bytes:
        return weights_digest(self.centers, self.work, self.range_km)


def weights_digest(centers: LatLonGrid, work: LatLonGrid, range_km: float) -> bytes:
    h = hashlib.sha256(b"scwd-weights")
    h.update(centers.digest())
    h.update(work.digest())
    h.update(np.float64(range_km).tobytes())
    return h.digest()


def check_range(range_km: float, radius_km: float) -> None:
    if math.isinf(range_km):
        return
    if not 0 < range_km < 2 * radius_km:
        raise InvalidArgumentError(
            f"range {range_km:g} km must lie in (0, {2 * radius_km:g}) km; "
            f"use the flat kernel for the global-mean limit"
        )


def precompute_weights(centers: LatLonGrid, work: LatLonGrid, range_km, threads=None) -> SparseWeightSet:
    range_km = parse_range(range_km)
    check_range(range_km, work.radius_km)
    areas = cell_areas(work)

    if math.isinf(range_km):
        idx = np.flatnonzero(areas > 0)
        raw = wendland(np.zeros(idx.size), range_km) * areas[idx]
        return SparseWeightSet(
            centers=centers,
            work=work,
            range_km=range_km,
            indptr=np.array([0, idx.size], dtype=np.int64),
            indices=idx.astype(np.int64),
            weights=raw / raw.sum(),
            row_of_center=np.zeros(centers.size, dtype=np.int64),
        )

    work_vec = work.unit_vectors
    center_vec = centers.unit_vectors
    center_lat, center_lon = centers.points()
    tree = cKDTree(work_vec)
    # Slightly generous search radius; cells past the range get zero weight anyway.
    search = range_km / work.radius_km * (1 + 1e-9)

    def build(span):
        lo, hi = span
        hits = tree.query_ball_point(center_vec[lo:hi], search)
        rows = []
        for k, cand in enumerate(hits):
            i = lo + k
            cand = np.sort(np.asarray(cand, dtype=np.int64))
            d = work.radius_km * np.linalg.norm(work_vec[cand] - center_vec[i], axis=1)
            raw = wendland(d, range_km) * areas[cand]
            keep = raw > 0
            cand, raw = cand[keep], raw[keep]
            if cand.size == 0:
                raise EmptyKernelError(center_lat[i], center_lon[i])
            rows.append((cand, raw / raw.sum()))
        return rows

    rows = [row for part in ordered_map(build, chunks(centers.size, _CENTER_CHUNK), threads) for row in part]
    counts = np.array([r[0].size for r in rows], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return SparseWeightSet(
        centers=centers,
        work=work,
        range_km=range_km,
        indptr=indptr,
        indices=np.concatenate([r[0] for r in rows]),
        weights=np.concatenate([r[1] for r in rows]),
        row_of_center=np.arange(centers.size, dtype=np.int64),
    )


def slice_field(field_values, weights_at_center) -> float:
    """Weighted local mean of one field at one center.

    ``weights_at_center`` is an ``(indices, weights)`` pair. Returns NaN
    when more than half of the weight falls on missing cells; otherwise
    the present cells are renormalized.
    """
    idx, w = weights_at_center
    vals = np.asarray(field_values, dtype=np.float64).reshape(-1)[idx]
    missing = np.isnan(vals)
    m = float(w[missing].sum())
    if m > MISSING_WEIGHT_LIMIT:
        return math.nan
    present = ~missing
    return float(np.dot(vals[present], w[present]) / (1.0 - m))


@dataclasses.dataclass(frozen=True, eq=False)
class SliceMatrix:
    """Slice values, one row per center and one column per timestep (NaN = missing)."""

    values: np.ndarray
    centers: LatLonGrid
    timestamps: tuple = ()

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())


def _slice_block(matrix, block):
    values = block.astype(np.float64).T
    missing = np.isnan(values)
    if not missing.any():
        return np.asarray(matrix @ values)
    filled = np.where(missing, 0.0, values)
    num = np.asarray(matrix @ filled)
    miss_w = np.asarray(matrix @ missing.astype(np.float64))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / (1.0 - miss_w)
    out[miss_w > MISSING_WEIGHT_LIMIT] = np.nan
    return out


def slice_stack(stack: FieldStack, weights: SparseWeightSet, threads=None) -> SliceMatrix:
    if stack.grid != weights.work:
        raise GridMismatchError("stack grid differs from the weight set's work grid")
    matrix = weights.matrix()
    flat = stack.values.reshape(stack.n_times, -1)

    def run(span):
        lo, hi = span
        return _slice_block(matrix, flat[lo:hi])

    blocks = ordered_map(run, chunks(stack.n_times, _TIME_CHUNK), threads)
    unique_rows = np.concatenate(blocks, axis=1)
    return SliceMatrix(
        values=unique_rows[weights.row_of_center],
        centers=weights.centers,
        timestamps=stack.timestamps,
    )
