from __future__ import annotations

import dataclasses

import numpy as np

from .errors import EmptySampleError, GridMismatchError, InvalidArgumentError
from .geometry import LatLonGrid


@dataclasses.dataclass(frozen=True, eq=False)
class FieldStack:
    """A time-indexed sample of fields on one grid.

    ``values`` is float32 with shape (T, n_lat, n_lon); NaN marks a missing
    cell. Arithmetic on stacks is done in float64 by the consumers.
    """

    grid: LatLonGrid
    values: np.ndarray
    timestamps: tuple = ()
    variable: str = ""
    units: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3:
            raise InvalidArgumentError("stack values must be 3-D (time, lat, lon)")
        if values.shape[1:] != self.grid.shape:
            raise GridMismatchError(
                f"values shape {values.shape[1:]} does not match grid {self.grid.shape}"
            )
        if values.shape[0] < 1:
            raise EmptySampleError("a field stack needs at least one timestep")
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        stamps = tuple(str(t) for t in self.timestamps)
        if not stamps:
            stamps = default_timestamps(values.shape[0])
        if len(stamps) != values.shape[0]:
            raise InvalidArgumentError(
                f"{len(stamps)} timestamps for {values.shape[0]} timesteps"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", stamps)

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    def flat(self) -> np.ndarray:
        """(T, n_cells) float64 copy of the payload."""
        return self.values.reshape(self.n_times, -1).astype(np.float64)

    def with_values(self, values) -> FieldStack:
        return dataclasses.replace(self, values=values)

    def bitwise_equal(self, other: FieldStack) -> bool:
        return (
            self.grid == other.grid
            and self.timestamps == other.timestamps
            and self.variable == other.variable
            and self.units == other.units
            and self.values.tobytes() == other.values.tobytes()
        )


def default_timestamps(n: int) -> tuple:
    return tuple(f"t{i:05d}" for i in range(n))
