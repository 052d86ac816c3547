"""Value types shared by the pipeline, the cache files and the CLI."""
from __future__ import annotations

import dataclasses
import hashlib
import math

import numpy as np

from .errors import InvalidArgumentError
from .geometry import LatLonGrid, make_center_grid, make_work_grid
from .kernel import check_range, parse_range
from .quantiles import QuantileGrid, check_order

PAPER_SUM = "paper-sum"
AREA_MEAN = "area-mean"
AGGREGATIONS = (PAPER_SUM, AREA_MEAN)


@dataclasses.dataclass(frozen=True, eq=False)
class ScwdParams:
    r: float = 2.0
    range_km: float = 1000.0
    centers: LatLonGrid = dataclasses.field(default_factory=make_center_grid)
    work: LatLonGrid = dataclasses.field(default_factory=make_work_grid)
    quantiles: QuantileGrid = dataclasses.field(default_factory=QuantileGrid.midpoints)
    aggregation: str = PAPER_SUM
    strict_paper_scaling: bool = False

    def __post_init__(self):
        object.__setattr__(self, "r", check_order(self.r))
        range_km = parse_range(self.range_km)
        check_range(range_km, self.work.radius_km)
        object.__setattr__(self, "range_km", range_km)
        if self.aggregation not in AGGREGATIONS:
            raise InvalidArgumentError(
                f"aggregation must be one of {', '.join(AGGREGATIONS)}, got {self.aggregation!r}"
            )

    @property
    def flat(self) -> bool:
        return math.isinf(self.range_km)

    def replace(self, **changes) -> ScwdParams:
        return dataclasses.replace(self, **changes)

    def slicing_digest(self) -> bytes:
        """Key for cached sliced quantiles: grids, range, order and levels."""
        h = hashlib.sha256(b"scwd-quantiles")
        h.update(self.centers.digest())
        h.update(self.work.digest())
        h.update(np.float64(self.range_km).tobytes())
        h.update(np.float64(self.r).tobytes())
        h.update(np.uint64(self.quantiles.count).tobytes())
        h.update(self.quantiles.levels.astype("<f8").tobytes())
        return h.digest()


@dataclasses.dataclass(frozen=True, eq=False)
class SlicedQuantiles:
    """Per-center quantile functions of one dataset's slices.

    Rows for centers with no usable slice are NaN with count 0. The
    quantiles of the area-weighted global-mean series ride along so the
    global-mean baseline can be computed from the cache alone.
    """

    params: ScwdParams
    values: np.ndarray
    counts: np.ndarray
    missing_slices: int
    n_times: int
    global_values: np.ndarray
    global_count: int
    name: str = ""

    @property
    def digest(self) -> bytes:
        return self.params.slicing_digest()


@dataclasses.dataclass(frozen=True, eq=False)
class LocalWDMap:
    centers: LatLonGrid
    values: np.ndarray
    r: float

    def grid_values(self) -> np.ndarray:
        return self.values.reshape(self.centers.shape)


@dataclasses.dataclass(frozen=True, eq=False)
class DistanceResult:
    scwd: float
    map: LocalWDMap
    params: ScwdParams
    name_a: str = ""
    name_b: str = ""
