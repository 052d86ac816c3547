"""Binary file formats, CSV import/export and P6 map images.

Every binary format is little-endian and starts with an 8-byte magic tag
followed by a uint32 version. Field stacks store float32 payloads with
NaN for missing cells; caches store float64. Readers reject malformed
input instead of repairing it. The layouts are documented in README.md.
"""
from __future__ import annotations

import csv
import io as _io
import math
import os
import struct
from pathlib import Path

import numpy as np

from .errors import (
    CacheMismatchError,
    InvalidArgumentError,
    MalformedFileError,
    NotAStackError,
    ScwdError,
    VersionError,
)
from .geometry import LatLonGrid
from .kernel import SparseWeightSet, weights_digest
from .quantiles import QuantileGrid
from .results import LocalWDMap, ScwdParams, SlicedQuantiles
from .stack import FieldStack

STACK_MAGIC = b"SCWDSTK\x00"
WEIGHTS_MAGIC = b"SCWDWGT\x00"
QUANTILES_MAGIC = b"SCWDQNT\x00"
MAP_MAGIC = b"SCWDMAP\x00"
FORMAT_VERSION = 1
MISSING_IS_NAN = 1

MAGICS = {
    STACK_MAGIC: "stack",
    WEIGHTS_MAGIC: "weights",
    QUANTILES_MAGIC: "quantiles",
    MAP_MAGIC: "map",
}


class _Writer:
    def __init__(self):
        self.buf = _io.BytesIO()

    def raw(self, data: bytes):
        self.buf.write(data)

    def u8(self, v):
        self.buf.write(struct.pack("<B", v))

    def u32(self, v):
        self.buf.write(struct.pack("<I", v))

    def u64(self, v):
        self.buf.write(struct.pack("<Q", v))

    def f64(self, v):
        self.buf.write(struct.pack("<d", v))

    def label(self, text: str):
        data = text.encode("utf-8")
        self.u32(len(data))
        self.raw(data)

    def array(self, arr, dtype):
        self.raw(np.ascontiguousarray(arr, dtype=dtype).tobytes())

    def grid(self, grid: LatLonGrid):
        self.u64(grid.lat.size)
        self.u64(grid.lon.size)
        self.array(grid.lat, "<f8")
        self.array(grid.lon, "<f8")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedFileError(
                f"truncated file: wanted {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return struct.unpack("<B", self.take(1))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def label(self) -> str:
        n = self.u32()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFileError(f"label is not UTF-8: {exc}")

    def array(self, count: int, dtype) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        if count > len(self.data):
            raise MalformedFileError(f"implausible element count {count}")
        return np.frombuffer(self.take(count * itemsize), dtype=dtype).astype(np.dtype(dtype).newbyteorder("="))

    def grid(self) -> LatLonGrid:
        n_lat, n_lon = self.u64(), self.u64()
        lat = self.array(n_lat, "<f8")
        lon = self.array(n_lon, "<f8")
        return _grid(lat, lon)

    def finish(self):
        if self.pos != len(self.data):
            raise MalformedFileError(f"{len(self.data) - self.pos} unexpected trailing bytes")


def _grid(lat, lon) -> LatLonGrid:
    try:
        return LatLonGrid(lat, lon)
    except ScwdError as exc:
        raise MalformedFileError(f"invalid grid coordinates: {exc}")


def _header(data: bytes, magic: bytes, what: str) -> _Reader:
    reader = _Reader(data)
    if data[:8] != magic:
        if what == "stack":
            raise NotAStackError("not a field-stack file (bad magic)")
        raise MalformedFileError(f"not a {what} file (bad magic)")
    reader.take(8)
    version = reader.u32()
    if version > FORMAT_VERSION:
        raise VersionError(f"{what} file version {version} is newer than supported {FORMAT_VERSION}")
    if version < 1:
        raise MalformedFileError(f"invalid {what} file version {version}")
    return reader


def _emit(destination, payload: bytes):
    if hasattr(destination, "write"):
        destination.write(payload)
        return
    path = Path(destination)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _slurp(source) -> bytes:
    if hasattr(source, "read"):
        return source.read()
    with open(source, "rb") as fh:
        return fh.read()


def sniff(source) -> str | None:
    """Name of the format in ``source`` ("stack", "weights", ...), or None."""
    with open(source, "rb") as fh:
        return MAGICS.get(fh.read(8))


# -- field stacks ---------------------------------------------------------------

def stack_bytes(stack: FieldStack) -> bytes:
    w = _Writer()
    w.raw(STACK_MAGIC)
    w.u32(FORMAT_VERSION)
    w.u64(stack.n_times)
    w.u64(stack.grid.lat.size)
    w.u64(stack.grid.lon.size)
    w.array(stack.grid.lat, "<f8")
    w.array(stack.grid.lon, "<f8")
    w.label(stack.variable)
    w.label(stack.units)
    w.u8(MISSING_IS_NAN)
    for stamp in stack.timestamps:
        w.label(stamp)
    w.array(stack.values, "<f4")
    return w.buf.getvalue()


def write_stack(stack: FieldStack, destination) -> None:
    _emit(destination, stack_bytes(stack))


def read_stack(source) -> FieldStack:
    r = _header(_slurp(source), STACK_MAGIC, "stack")
    n_times, n_lat, n_lon = r.u64(), r.u64(), r.u64()
    if n_times < 1:
        raise MalformedFileError("stack has no timesteps")
    lat = r.array(n_lat, "<f8")
    lon = r.array(n_lon, "<f8")
    variable = r.label()
    units = r.label()
    flag = r.u8()
    if flag != MISSING_IS_NAN:
        raise MalformedFileError(f"unknown missing-value convention {flag}")
    stamps = tuple(r.label() for _ in range(n_times))
    payload = r.array(n_times * n_lat * n_lon, "<f4")
    r.finish()
    grid = _grid(lat, lon)
    return FieldStack(grid, payload.reshape(n_times, n_lat, n_lon), stamps, variable, units)


# -- CSV ------------------------------------------------------------------------

CSV_COLUMNS = ["time_label", "lat_index", "lon_index", "value"]


def read_csv_fields(source, grid: LatLonGrid, variable: str = "", units: str = "") -> FieldStack:
    """Dense stack from ``time_label,lat_index,lon_index,value`` rows.

    Cells not mentioned, and rows with an empty value, are missing.
    Timesteps appear in order of first occurrence.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8", newline="") as fh:
            text = fh.read()
    rows = list(csv.reader(_io.StringIO(text), quoting=csv.QUOTE_NONE))
    if not rows or [c.strip() for c in rows[0]] != CSV_COLUMNS:
        raise MalformedFileError(f"CSV header must be {','.join(CSV_COLUMNS)}")
    order = {}
    cells = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise MalformedFileError(f"line {lineno}: expected 4 fields, got {len(row)}")
        label, i_lat, i_lon, value = row
        try:
            i_lat, i_lon = int(i_lat), int(i_lon)
            value = float(value) if value.strip() else math.nan
        except ValueError as exc:
            raise MalformedFileError(f"line {lineno}: {exc}")
        if not (0 <= i_lat < grid.lat.size and 0 <= i_lon < grid.lon.size):
            raise MalformedFileError(f"line {lineno}: index ({i_lat}, {i_lon}) outside grid {grid.shape}")
        t = order.setdefault(label, len(order))
        cells.append((t, i_lat, i_lon, value))
    if not order:
        raise MalformedFileError("CSV has no data rows")
    values = np.full((len(order), *grid.shape), np.nan, dtype=np.float32)
    for t, i_lat, i_lon, value in cells:
        values[t, i_lat, i_lon] = value
    return FieldStack(grid, values, tuple(order), variable, units)


def write_csv_fields(stack: FieldStack, destination) -> None:
    out = _io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for t, stamp in enumerate(stack.timestamps):
        for i in range(stack.grid.lat.size):
            for j in range(stack.grid.lon.size):
                v = stack.values[t, i, j]
                text = "" if np.isnan(v) else repr(float(v))
                out.write(f"{stamp},{i},{j},{text}\n")
    data = out.getvalue().encode("utf-8")
    _emit(destination, data)


# -- weight caches ----------------------------------------------------------------

def weights_bytes(weights: SparseWeightSet) -> bytes:
    w = _Writer()
    w.raw(WEIGHTS_MAGIC)
    w.u32(FORMAT_VERSION)
    w.raw(weights.digest())
    w.f64(weights.range_km)
    w.grid(weights.centers)
    w.grid(weights.work)
    w.u64(weights.n_rows)
    w.u64(weights.indices.size)
    w.u64(weights.n_centers)
    w.array(weights.indptr, "<u8")
    w.array(weights.indices, "<u8")
    w.array(weights.weights, "<f8")
    w.array(weights.row_of_center, "<u8")
    return w.buf.getvalue()


def write_weights(weights: SparseWeightSet, destination) -> None:
    _emit(destination, weights_bytes(weights))


def read_weights(source, expect_digest: bytes | None = None) -> SparseWeightSet:
    r = _header(_slurp(source), WEIGHTS_MAGIC, "weights")
    digest = r.take(32)
    if expect_digest is not None and digest != expect_digest:
        raise CacheMismatchError("weight cache was built for different grids or range")
    range_km = r.f64()
    centers = r.grid()
    work = r.grid()
    n_rows, nnz, n_centers = r.u64(), r.u64(), r.u64()
    indptr = r.array(n_rows + 1, "<u8").astype(np.int64)
    indices = r.array(nnz, "<u8").astype(np.int64)
    values = r.array(nnz, "<f8")
    row_of_center = r.array(n_centers, "<u8").astype(np.int64)
    r.finish()
    if weights_digest(centers, work, range_km) != digest:
        raise MalformedFileError("weight cache digest does not match its contents")
    if (
        n_centers != centers.size
        or indptr[0] != 0
        or indptr[-1] != nnz
        or np.any(np.diff(indptr) < 0)
        or (nnz and indices.max() >= work.size)
        or (n_centers and row_of_center.max() >= n_rows)
    ):
        raise MalformedFileError("inconsistent weight cache layout")
    return SparseWeightSet(centers, work, range_km, indptr, indices, values, row_of_center)


# -- sliced-quantile caches ------------------------------------------------------

def quantiles_bytes(sq: SlicedQuantiles) -> bytes:
    p = sq.params
    w = _Writer()
    w.raw(QUANTILES_MAGIC)
    w.u32(FORMAT_VERSION)
    w.raw(sq.digest)
    w.label(sq.name)
    w.f64(p.r)
    w.f64(p.range_km)
    w.grid(p.centers)
    w.grid(p.work)
    w.u64(p.quantiles.count)
    w.array(p.quantiles.levels, "<f8")
    w.u64(sq.n_times)
    w.u64(sq.missing_slices)
    w.array(sq.counts, "<u8")
    w.array(sq.values, "<f8")
    w.u64(sq.global_count)
    w.array(sq.global_values, "<f8")
    return w.buf.getvalue()


def write_quantiles(sq: SlicedQuantiles, destination) -> None:
    _emit(destination, quantiles_bytes(sq))


def read_quantiles(source, expect_digest: bytes | None = None) -> SlicedQuantiles:
    r = _header(_slurp(source), QUANTILES_MAGIC, "quantiles")
    digest = r.take(32)
    if expect_digest is not None and digest != expect_digest:
        raise CacheMismatchError("sliced-quantile cache was built with different parameters")
    name = r.label()
    order = r.f64()
    range_km = r.f64()
    centers = r.grid()
    work = r.grid()
    n_levels = r.u64()
    try:
        params = ScwdParams(
            r=order, range_km=range_km, centers=centers, work=work,
            quantiles=QuantileGrid(r.array(n_levels, "<f8")),
        )
    except ScwdError as exc:
        raise MalformedFileError(f"invalid cache parameters: {exc}")
    n_times = r.u64()
    missing = r.u64()
    counts = r.array(centers.size, "<u8").astype(np.int64)
    values = r.array(centers.size * n_levels, "<f8").reshape(centers.size, n_levels)
    global_count = r.u64()
    global_values = r.array(n_levels, "<f8")
    r.finish()
    if params.slicing_digest() != digest:
        raise MalformedFileError("sliced-quantile cache digest does not match its contents")
    return SlicedQuantiles(params, values, counts, int(missing), int(n_times), global_values, int(global_count), name)


# -- local WD maps ------------------------------------------------------------------

def map_bytes(wd_map: LocalWDMap) -> bytes:
    w = _Writer()
    w.raw(MAP_MAGIC)
    w.u32(FORMAT_VERSION)
    w.f64(wd_map.r)
    w.grid(wd_map.centers)
    w.array(wd_map.values, "<f8")
    return w.buf.getvalue()


def write_map(wd_map: LocalWDMap, destination) -> None:
    _emit(destination, map_bytes(wd_map))


def read_map(source) -> LocalWDMap:
    r = _header(_slurp(source), MAP_MAGIC, "map")
    order = r.f64()
    centers = r.grid()
    values = r.array(centers.size, "<f8")
    r.finish()
    return LocalWDMap(centers, values, order)


# -- images ---------------------------------------------------------------------------

MISSING_RGB = (128, 128, 128)


def ramp_rgb(t):
    """Blue (low) to red (high) ramp for t in [0, 1]; returns uint8 (..., 3)."""
    t = np.asarray(t, dtype=np.float64)
    red = np.rint(255.0 * t)
    blue = np.rint(255.0 * (1.0 - t))
    return np.stack([red, np.zeros_like(t), blue], axis=-1).astype(np.uint8)


def map_image_bytes(wd_map: LocalWDMap, low: float, high: float) -> bytes:
    if not (math.isfinite(low) and math.isfinite(high) and low < high):
        raise InvalidArgumentError(f"color bounds need low < high, got ({low}, {high})")
    grid_vals = wd_map.grid_values()[::-1]  # north row first
    missing = np.isnan(grid_vals)
    t = np.clip((np.where(missing, low, grid_vals) - low) / (high - low), 0.0, 1.0)
    rgb = ramp_rgb(t)
    rgb[missing] = MISSING_RGB
    n_lat, n_lon = wd_map.centers.shape
    return f"P6\n{n_lon} {n_lat}\n255\n".encode("ascii") + rgb.tobytes()


def write_map_image(wd_map: LocalWDMap, destination, low: float, high: float) -> None:
    _emit(destination, map_image_bytes(wd_map, low, high))
