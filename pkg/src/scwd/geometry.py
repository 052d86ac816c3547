"""Latitude-longitude grids on the Earth-radius sphere.

All distances are chordal (straight-line through the ball), computed from
3-D unit vectors so longitude wraparound never needs special handling.
"""
from __future__ import annotations

import dataclasses
import hashlib
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgumentError, InvalidCoordinateError, UnsupportedGridError

if TYPE_CHECKING:
    from .stack import FieldStack

EARTH_RADIUS_KM = 6371.0

# Tolerance for declaring two source cells equidistant during regridding.
TIE_RTOL = 1e-12
TIE_ATOL = 1e-15
_REGULAR_TOL = 1e-9


def _as_coord_array(values, name):
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise InvalidArgumentError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidCoordinateError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def _constant_step(axis):
    if axis.size < 2:
        return True
    steps = np.diff(axis)
    return bool(np.all(np.abs(steps - steps[0]) <= _REGULAR_TOL))


@dataclasses.dataclass(frozen=True, eq=False)
class LatLonGrid:
    """A rectilinear grid of cell centers, stored row-major as (lat, lon)."""

    lat: np.ndarray
    lon: np.ndarray
    radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self):
        lat = _as_coord_array(self.lat, "lat")
        lon = _as_coord_array(self.lon, "lon")
        if np.any(lat < -90.0) or np.any(lat > 90.0):
            raise InvalidCoordinateError("latitudes must lie in [-90, 90]")
        if np.any(lon < 0.0) or np.any(lon >= 360.0):
            raise InvalidCoordinateError("longitudes must lie in [0, 360)")
        if np.any(np.diff(lat) <= 0):
            raise InvalidCoordinateError("latitudes must be strictly increasing")
        if np.any(np.diff(lon) <= 0):
            raise InvalidCoordinateError("longitudes must be strictly increasing")
        if not self.radius_km > 0:
            raise InvalidArgumentError("radius_km must be positive")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "radius_km", float(self.radius_km))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.lat.size, self.lon.size)

    @property
    def size(self) -> int:
        return self.lat.size * self.lon.size

    @property
    def regular(self) -> bool:
        return _constant_step(self.lat) and _constant_step(self.lon)

    @cached_property
    def unit_vectors(self) -> np.ndarray:
        """(size, 3) unit vectors of the cell centers, row-major."""
        lat2, lon2 = np.meshgrid(self.lat, self.lon, indexing="ij")
        vecs = unit_vector(lat2.ravel(), lon2.ravel())
        vecs.setflags(write=False)
        return vecs

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (lat, lon) of every cell in row-major order."""
        lat2, lon2 = np.meshgrid(self.lat, self.lon, indexing="ij")
        return lat2.ravel(), lon2.ravel()

    def digest(self) -> bytes:
        h = hashlib.sha256()
        h.update(np.float64(self.radius_km).tobytes())
        h.update(np.uint64(self.lat.size).tobytes())
        h.update(self.lat.astype("<f8").tobytes())
        h.update(np.uint64(self.lon.size).tobytes())
        h.update(self.lon.astype("<f8").tobytes())
        return h.digest()

    def __eq__(self, other):
        if not isinstance(other, LatLonGrid):
            return NotImplemented
        return (
            self.radius_km == other.radius_km
            and np.array_equal(self.lat, other.lat)
            and np.array_equal(self.lon, other.lon)
        )

    def __hash__(self):
        return hash(self.digest())

    def __repr__(self):
        return (
            f"LatLonGrid({self.lat.size}x{self.lon.size}, "
            f"lat=[{self.lat[0]:g}..{self.lat[-1]:g}], "
            f"lon=[{self.lon[0]:g}..{self.lon[-1]:g}])"
        )


def unit_vector(lat, lon) -> np.ndarray:
    """Map degrees to points on the unit sphere; result has shape (..., 3).

    cos(latitude) is forced to exactly zero at the poles so every pole
    point maps to the same vector regardless of longitude.
    """
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any(lat < -90.0) or np.any(lat > 90.0) or np.any(~np.isfinite(lat)):
        raise InvalidCoordinateError("latitude outside [-90, 90]")
    phi = np.deg2rad(lat)
    lam = np.deg2rad(lon)
    cos_phi = np.where(np.abs(lat) == 90.0, 0.0, np.cos(phi))
    sin_phi = np.where(lat == 90.0, 1.0, np.where(lat == -90.0, -1.0, np.sin(phi)))
    return np.stack([cos_phi * np.cos(lam), cos_phi * np.sin(lam), sin_phi], axis=-1)


def chordal_distance(a, b, radius_km: float = EARTH_RADIUS_KM) -> float:
    """Straight-line distance in km between two (lat, lon) points in degrees."""
    ua = unit_vector(a[0], a[1])
    ub = unit_vector(b[0], b[1])
    return float(radius_km * np.linalg.norm(ua - ub))


def chordal_distances(point, grid: LatLonGrid) -> np.ndarray:
    """Distances in km from one (lat, lon) point to every cell of ``grid``."""
    u = unit_vector(point[0], point[1])
    return grid.radius_km * np.linalg.norm(grid.unit_vectors - u, axis=1)


def cell_areas(grid: LatLonGrid) -> np.ndarray:
    """Normalized cos-latitude cell areas, row-major, summing to one.

    Only the latitude dependence matters on a regular grid, since the
    lat and lon spacings are common factors removed by normalization.
    """
    if not grid.regular:
        raise UnsupportedGridError("cell areas require a regular grid")
    cos_lat = np.where(np.abs(grid.lat) == 90.0, 0.0, np.cos(np.deg2rad(grid.lat)))
    cos_lat = np.clip(cos_lat, 0.0, None)
    raw = np.repeat(cos_lat, grid.lon.size)
    total = raw.sum()
    if total <= 0:
        raise UnsupportedGridError("grid has zero total area")
    return raw / total


def make_center_grid(n_lat: int = 60, n_lon: int = 120) -> LatLonGrid:
    """Cell-midpoint grid; the default 60x120 never touches the poles."""
    if n_lat < 1 or n_lon < 1:
        raise InvalidArgumentError("center grid needs n_lat >= 1 and n_lon >= 1")
    lat = -90.0 + (np.arange(n_lat) + 0.5) * (180.0 / n_lat)
    lon = (np.arange(n_lon) + 0.5) * (360.0 / n_lon)
    return LatLonGrid(lat, lon)


def make_work_grid(n_lat: int = 361, n_lon: int = 720) -> LatLonGrid:
    """Endpoint-inclusive latitude grid (both poles) with longitudes from 0."""
    if n_lat < 2 or n_lon < 1:
        raise InvalidArgumentError("work grid needs n_lat >= 2 and n_lon >= 1")
    lat = -90.0 + np.arange(n_lat) * (180.0 / (n_lat - 1))
    lat[-1] = 90.0
    lon = np.arange(n_lon) * (360.0 / n_lon)
    return LatLonGrid(lat, lon)


def nearest_source_index(src: LatLonGrid, dst: LatLonGrid) -> np.ndarray:
    """For every dst cell, the row-major index of the chordally nearest src cell.

    Ties (within TIE_RTOL) go to the smallest source index.
    """
    src_vec = src.unit_vectors
    dst_vec = dst.unit_vectors
    if src.size == 1:
        return np.zeros(dst.size, dtype=np.int64)
    tree = cKDTree(src_vec)
    dist, idx = tree.query(dst_vec, k=2)
    out = idx[:, 0].astype(np.int64)
    tied = dist[:, 1] <= dist[:, 0] * (1 + TIE_RTOL) + TIE_ATOL
    for i in np.flatnonzero(tied):
        radius = dist[i, 0] * (1 + TIE_RTOL) + TIE_ATOL
        cand = np.asarray(tree.query_ball_point(dst_vec[i], radius * (1 + 1e-9)))
        d = np.linalg.norm(src_vec[cand] - dst_vec[i], axis=1)
        cutoff = d.min() * (1 + TIE_RTOL) + TIE_ATOL
        out[i] = cand[d <= cutoff].min()
    return out


def regrid_nearest(stack: FieldStack, dst: LatLonGrid) -> FieldStack:
    """Copy each destination cell from its nearest source cell, per timestep.

    Missing values travel with the copied cell. Regridding onto the
    stack's own grid returns the stack unchanged.
    """
    if stack.grid == dst:
        return stack
    idx = nearest_source_index(stack.grid, dst)
    flat = stack.values.reshape(stack.n_times, -1)
    values = flat[:, idx].reshape(stack.n_times, *dst.shape)
    return dataclasses.replace(stack, grid=dst, values=values)
