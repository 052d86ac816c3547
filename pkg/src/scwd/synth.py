"""Reproducible synthetic field stacks.

Each timestep is ``base + noise_sd * noise`` where the noise is white
(or Wendland-smoothed and rescaled to unit variance per cell) and drawn
from the counter-based stream ``t`` of :mod:`scwd.rng`. Spherical-cap
perturbations then add a mean offset and scale the noise inside the cap.

Spec files are plain ``key = value`` text::

    grid = 46x90            # NLATxNLON
    grid_type = work        # work (poles included) | center (cell midpoints)
    timesteps = 120
    seed = 7
    base = zonal:28,-20     # constant:C | zonal:EQUATOR,POLE
    noise_sd = 2.5
    smoothing_range_km = 1500
    perturbation = 40,200,1500,3.0,1.5   # lat,lon,radius_km,offset,sd_multiplier
    variable = tas
    units = K

``perturbation`` may be repeated.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from ._parallel import ordered_map
from .errors import ConfigError, InvalidArgumentError, ScwdError
from .geometry import LatLonGrid, chordal_distances, make_center_grid, make_work_grid
from .kernel import check_range, parse_range, wendland
from .rng import normals
from .stack import FieldStack, default_timestamps


@dataclasses.dataclass(frozen=True)
class Perturbation:
    lat: float
    lon: float
    radius_km: float
    offset: float = 0.0
    sd_multiplier: float = 1.0

    def __post_init__(self):
        if not self.sd_multiplier > 0:
            raise InvalidArgumentError("sd multiplier must be positive")
        if not self.radius_km >= 0:
            raise InvalidArgumentError("cap radius must be nonnegative")

    def mask(self, grid: LatLonGrid) -> np.ndarray:
        """Cells whose chordal distance to the cap center is within the radius."""
        return chordal_distances((self.lat, self.lon), grid) <= self.radius_km


@dataclasses.dataclass(frozen=True, eq=False)
class SynthSpec:
    grid: LatLonGrid
    timesteps: int
    seed: int = 0
    base: tuple = ("constant", 0.0)
    noise_sd: float = 1.0
    smoothing_range_km: float | None = None
    perturbations: tuple = ()
    variable: str = "synthetic"
    units: str = ""

    def __post_init__(self):
        if self.timesteps < 1:
            raise InvalidArgumentError("timesteps must be >= 1")
        if not self.noise_sd >= 0:
            raise InvalidArgumentError("noise_sd must be nonnegative")
        kind = self.base[0]
        if kind == "constant" and len(self.base) == 2:
            pass
        elif kind == "zonal" and len(self.base) == 3:
            pass
        else:
            raise InvalidArgumentError(f"unknown base mean {self.base!r}")
        object.__setattr__(self, "perturbations", tuple(self.perturbations))

    def replace(self, **changes) -> SynthSpec:
        return dataclasses.replace(self, **changes)


def base_field(spec: SynthSpec) -> np.ndarray:
    lat = spec.grid.lat
    if spec.base[0] == "constant":
        per_lat = np.full(lat.size, float(spec.base[1]))
    else:
        equator, pole = float(spec.base[1]), float(spec.base[2])
        cos_lat = np.where(np.abs(lat) == 90.0, 0.0, np.cos(np.deg2rad(lat)))
        per_lat = pole + (equator - pole) * cos_lat
    return np.repeat(per_lat, spec.grid.lon.size)


def smoothing_matrix(grid: LatLonGrid, range_km: float) -> sparse.csr_matrix:
    """Wendland kernel rows scaled to unit L2 norm.

    Applied to unit white noise this gives smooth noise with unit variance
    in every cell. Each row contains its own cell, so no row is empty.
    """
    range_km = parse_range(range_km)
    check_range(range_km, grid.radius_km)
    vec = grid.unit_vectors
    tree = cKDTree(vec)
    hits = tree.query_ball_point(vec, range_km / grid.radius_km * (1 + 1e-9))
    indptr, indices, data = [0], [], []
    for i, cand in enumerate(hits):
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        w = wendland(grid.radius_km * np.linalg.norm(vec[cand] - vec[i], axis=1), range_km)
        keep = w > 0
        cand, w = cand[keep], w[keep]
        indices.append(cand)
        data.append(w / np.sqrt(np.dot(w, w)))
        indptr.append(indptr[-1] + cand.size)
    return sparse.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.array(indptr)), shape=(grid.size, grid.size)
    )


def gen_stack(spec: SynthSpec, threads=None) -> FieldStack:
    grid = spec.grid
    n = grid.size
    base = base_field(spec)
    offset = np.zeros(n)
    scale = np.full(n, float(spec.noise_sd))
    for pert in spec.perturbations:
        inside = pert.mask(grid)
        offset[inside] += pert.offset
        scale[inside] *= pert.sd_multiplier

    smoother = None
    if spec.smoothing_range_km and spec.noise_sd > 0:
        smoother = smoothing_matrix(grid, spec.smoothing_range_km)

    def one(t):
        field = base + offset
        if spec.noise_sd > 0:
            z = normals(spec.seed, t, n)
            if smoother is not None:
                z = smoother @ z
            field = field + scale * z
        return field.astype(np.float32)

    values = np.stack(ordered_map(one, range(spec.timesteps), threads))
    return FieldStack(
        grid,
        values.reshape(spec.timesteps, *grid.shape),
        default_timestamps(spec.timesteps),
        spec.variable,
        spec.units,
    )


def shift_stack(stack: FieldStack, c: float) -> FieldStack:
    """Add ``c`` to every present cell (computed in float64, stored float32)."""
    if c == 0:
        return stack
    return stack.with_values((stack.values.astype(np.float64) + c).astype(np.float32))


def scale_stack(stack: FieldStack, alpha: float) -> FieldStack:
    return stack.with_values((stack.values.astype(np.float64) * alpha).astype(np.float32))


# -- text serialization ---------------------------------------------------------------

def _parse_shape(text):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise ConfigError(f"grid must look like NLATxNLON, got {text!r}")


def _floats(text, count, key):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != count:
        raise ConfigError(f"{key} needs {count} comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{key}: not a number in {text!r}")


def parse_synth_spec(text: str) -> SynthSpec:
    fields = {}
    perturbations = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "perturbation":
            perturbations.append(_floats(value, 5, key))
        elif key in fields:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        else:
            fields[key] = value

    known = {"grid", "grid_type", "timesteps", "seed", "base", "noise_sd",
             "smoothing_range_km", "variable", "units"}
    unknown = set(fields) - known
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    for key in ("grid", "timesteps"):
        if key not in fields:
            raise ConfigError(f"missing required key {key!r}")

    try:
        n_lat, n_lon = _parse_shape(fields["grid"])
        grid_type = fields.get("grid_type", "work")
        if grid_type == "work":
            grid = make_work_grid(n_lat, n_lon)
        elif grid_type == "center":
            grid = make_center_grid(n_lat, n_lon)
        else:
            raise ConfigError(f"grid_type must be work or center, got {grid_type!r}")

        base_text = fields.get("base", "constant:0")
        kind, _, args = base_text.partition(":")
        kind = kind.strip()
        if kind == "constant":
            base = ("constant", *_floats(args, 1, "base"))
        elif kind == "zonal":
            base = ("zonal", *_floats(args, 2, "base"))
        else:
            raise ConfigError(f"base must be constant:C or zonal:EQ,POLE, got {base_text!r}")

        smoothing = fields.get("smoothing_range_km")
        return SynthSpec(
            grid=grid,
            timesteps=int(fields["timesteps"]),
            seed=int(fields.get("seed", "0"), 0),
            base=base,
            noise_sd=float(fields.get("noise_sd", "1")),
            smoothing_range_km=float(smoothing) if smoothing else None,
            perturbations=tuple(Perturbation(*p) for p in perturbations),
            variable=fields.get("variable", "synthetic"),
            units=fields.get("units", ""),
        )
    except ConfigError:
        raise
    except (ScwdError, ValueError) as exc:
        raise ConfigError(str(exc))


def format_synth_spec(spec: SynthSpec, grid_type: str = "work") -> str:
    lines = [
        f"grid = {spec.grid.lat.size}x{spec.grid.lon.size}",
        f"grid_type = {grid_type}",
        f"timesteps = {spec.timesteps}",
        f"seed = {spec.seed}",
        "base = " + spec.base[0] + ":" + ",".join(repr(float(v)) for v in spec.base[1:]),
        f"noise_sd = {spec.noise_sd!r}",
    ]
    if spec.smoothing_range_km:
        lines.append(f"smoothing_range_km = {spec.smoothing_range_km!r}")
    for p in spec.perturbations:
        lines.append(f"perturbation = {p.lat!r},{p.lon!r},{p.radius_km!r},{p.offset!r},{p.sd_multiplier!r}")
    lines.append(f"variable = {spec.variable}")
    lines.append(f"units = {spec.units}")
    return "\n".join(lines) + "\n"


def hemispheric_dipole(bias: float, radius_km: float | None = None) -> tuple:
    """Two caps (north +bias, south -bias) covering the hemispheres.

    A cap of chordal radius R*sqrt(2) around a pole is exactly that
    hemisphere, so on an equator-symmetric grid the global mean is unchanged.
    """
    radius = radius_km if radius_km is not None else 6371.0 * math.sqrt(2.0) * (1 - 1e-9)
    return (
        Perturbation(90.0, 0.0, radius, bias, 1.0),
        Perturbation(-90.0, 0.0, radius, -bias, 1.0),
    )
