import numpy as np
import pytest
from scipy.special import ndtri

from scwd.errors import ConfigError, InvalidArgumentError
from scwd.geometry import chordal_distances, make_center_grid, make_work_grid
from scwd.rng import inverse_normal_cdf, normals, raw_stream, uniforms
from scwd.synth import (
    Perturbation,
    SynthSpec,
    format_synth_spec,
    gen_stack,
    parse_synth_spec,
    shift_stack,
)

MASK = 2**64 - 1
M0, M1 = 0xD2E7470EE14C6C93, 0xCA5A826395121157
W0, W1 = 0x9E3779B97F4A7C15, 0xBB67AE8584CAA73B


def philox4x64_10(ctr, key):
    """Textbook Philox4x64 with 10 rounds (pure Python reference)."""
    x0, x1, x2, x3 = ctr
    k0, k1 = key
    for rnd in range(10):
        if rnd:
            k0, k1 = (k0 + W0) & MASK, (k1 + W1) & MASK
        p0, p1 = M0 * x0, M1 * x2
        hi0, lo0 = p0 >> 64, p0 & MASK
        hi1, lo1 = p1 >> 64, p1 & MASK
        x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
    return [x0, x1, x2, x3]


def test_reference_philox_known_answer():
    out = philox4x64_10((0, 0, 0, 0), (0, 0))
    assert out == [0x16554D9ECA36314C, 0xDB20FE9D672D0FDC, 0xD7E772CEE186176B, 0x7E68B68AEC7BA23B]


@pytest.mark.parametrize("seed,stream", [(0, 0), (12345, 0), (7, 3), (2**63 + 5, 17)])
def test_stream_matches_reference(seed, stream):
    got = raw_stream(seed, stream, 8)
    want = []
    for block in (1, 2):
        c = (stream << 128) + block
        ctr = [(c >> (64 * i)) & MASK for i in range(4)]
        want += philox4x64_10(ctr, (seed & MASK, 0))
    assert [int(x) for x in got] == want


def test_uniforms_open_interval():
    u = uniforms(1, 0, 100_000)
    assert u.min() > 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.005


def test_inverse_normal_accuracy():
    p = np.concatenate([
        np.linspace(2.0**-54, 1 - 2.0**-53, 200_001),
        2.0**-53 * np.arange(1, 500),
        1 - 2.0**-53 * np.arange(1, 500),
    ])
    assert np.max(np.abs(inverse_normal_cdf(p) - ndtri(p))) < 1.2e-9


def test_normals_moments():
    z = normals(99, 4, 200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01


class TestGenStack:
    grid = make_work_grid(13, 24)

    def test_constant_no_noise(self):
        s = gen_stack(SynthSpec(self.grid, 3, base=("constant", 4.5), noise_sd=0))
        assert np.all(s.values == np.float32(4.5))

    def test_deterministic(self):
        spec = SynthSpec(self.grid, 6, seed=42, base=("zonal", 30, -10), noise_sd=2, smoothing_range_km=1500)
        assert gen_stack(spec).values.tobytes() == gen_stack(spec).values.tobytes()
        assert gen_stack(spec, threads=4).values.tobytes() == gen_stack(spec).values.tobytes()

    def test_seed_changes_payload(self):
        spec = SynthSpec(self.grid, 2, seed=1)
        a, b = gen_stack(spec), gen_stack(spec.replace(seed=2))
        assert a.values.shape == b.values.shape and a.values.tobytes() != b.values.tobytes()

    def test_cap_offset(self):
        cap = Perturbation(30.0, 90.0, 2000.0, 1.5, 2.0)
        s = gen_stack(SynthSpec(self.grid, 2, base=("constant", 10.0), noise_sd=0, perturbations=(cap,)))
        inside = chordal_distances((30.0, 90.0), self.grid) <= 2000.0
        flat = s.values.reshape(2, -1)
        assert inside.sum() > 0
        assert np.all(flat[:, inside] == np.float32(11.5)) and np.all(flat[:, ~inside] == np.float32(10.0))

    def test_smoothed_noise_has_unit_variance(self):
        grid = make_center_grid(18, 36)
        s = gen_stack(SynthSpec(grid, 400, seed=3, noise_sd=1.0, smoothing_range_km=1500))
        sd = s.values.reshape(400, -1).std(axis=0)
        assert abs(np.median(sd) - 1) < 0.1

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            SynthSpec(self.grid, 0)
        with pytest.raises(InvalidArgumentError):
            Perturbation(0, 0, 100, 1, 0)


class TestShift:
    def test_zero_is_identity(self, rng):
        s = gen_stack(SynthSpec(make_work_grid(5, 8), 3, seed=1))
        assert shift_stack(s, 0.0).values.tobytes() == s.values.tobytes()

    def test_round_trip(self):
        s = gen_stack(SynthSpec(make_work_grid(5, 8), 3, seed=1, base=("constant", 12.0)))
        back = shift_stack(shift_stack(s, 2.5), -2.5)
        assert np.allclose(back.values, s.values, rtol=0, atol=2e-6)

    def test_missing_stays_missing(self):
        s = gen_stack(SynthSpec(make_work_grid(5, 8), 1, seed=1))
        vals = s.values.copy()
        vals[0, 2, 3] = np.nan
        assert np.isnan(shift_stack(s.with_values(vals), 1.0).values[0, 2, 3])


class TestSpecText:
    text = """
    # fixture
    grid = 13x24
    timesteps = 5
    seed = 0x2a
    base = zonal:28,-20
    noise_sd = 2.5
    smoothing_range_km = 1500
    perturbation = 40,200,1500,3.0,1.5
    perturbation = -40,20,800,-1.0,1.0
    variable = tas
    units = K
    """

    def test_parse(self):
        spec = parse_synth_spec(self.text)
        assert spec.grid == make_work_grid(13, 24) and spec.seed == 42
        assert spec.base == ("zonal", 28.0, -20.0) and len(spec.perturbations) == 2
        assert spec.variable == "tas" and spec.units == "K"

    def test_format_round_trip(self):
        spec = parse_synth_spec(self.text)
        again = parse_synth_spec(format_synth_spec(spec))
        assert gen_stack(again).bitwise_equal(gen_stack(spec))

    def test_center_grid_type(self):
        spec = parse_synth_spec("grid = 4x8\ngrid_type = center\ntimesteps = 1\n")
        assert spec.grid == make_center_grid(4, 8)

    @pytest.mark.parametrize("bad", [
        "grid = 4x8\ntimesteps = 0\n",
        "grid = 4x8\n",
        "grid = 4by8\ntimesteps = 2\n",
        "grid = 4x8\ntimesteps = 2\nbase = cubic:1\n",
        "grid = 4x8\ntimesteps = 2\ncolour = red\n",
        "grid = 4x8\ntimesteps = 2\nperturbation = 1,2\n",
        "grid = 4x8\ntimesteps = 2\nnonsense line\n",
    ])
    def test_malformed(self, bad):
        with pytest.raises(ConfigError):
            parse_synth_spec(bad)
