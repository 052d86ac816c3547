import numpy as np
import pytest

from scwd.geometry import make_center_grid, make_work_grid
from scwd.results import ScwdParams
from scwd.stack import FieldStack
from scwd.synth import SynthSpec, gen_stack


@pytest.fixture(scope="session")
def small_work():
    return make_work_grid(9, 16)


@pytest.fixture(scope="session")
def small_centers():
    return make_center_grid(4, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_stack(grid, n_times, rng, loc=0.0, scale=1.0):
    values = rng.normal(loc, scale, size=(n_times, *grid.shape))
    return FieldStack(grid, values)


def smooth_stack(grid, n_times, seed, base=("zonal", 28.0, -20.0), noise_sd=2.0, smoothing=1500.0, **kw):
    spec = SynthSpec(grid, n_times, seed=seed, base=base, noise_sd=noise_sd,
                     smoothing_range_km=smoothing, **kw)
    return gen_stack(spec)


def small_params(work, centers, **kw):
    kw.setdefault("range_km", 2500.0)
    return ScwdParams(centers=centers, work=work, **kw)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
