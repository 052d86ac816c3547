"""Spherical convolutional Wasserstein distances between samples of gridded fields."""
from .core import aggregate, distance_from_quantiles, gmwd, global_mean_series, local_wd_map, scwd, sliced_quantiles
from .errors import ScwdError
from .geometry import (
    EARTH_RADIUS_KM,
    LatLonGrid,
    cell_areas,
    chordal_distance,
    make_center_grid,
    make_work_grid,
    regrid_nearest,
)
from .kernel import FLAT, SliceMatrix, SparseWeightSet, precompute_weights, slice_field, slice_stack, wendland
from .oracle import dense_oracle_scwd
from .quantiles import QuantileGrid, QuantileVector, empirical_quantiles, gaussian_w2, quantile_wd
from .results import AREA_MEAN, PAPER_SUM, DistanceResult, LocalWDMap, ScwdParams, SlicedQuantiles
from .stack import FieldStack
from .synth import Perturbation, SynthSpec, gen_stack, shift_stack

__version__ = "0.1.0"
