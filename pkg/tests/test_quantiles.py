import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scwd.errors import EmptySampleError, GridMismatchError, InvalidArgumentError
from scwd.quantiles import (
    QuantileGrid,
    empirical_quantiles,
    gaussian_w2,
    quantile_matrix,
    quantile_wd,
)
from scwd.rng import normals

GRID = QuantileGrid.midpoints()


def inverse_ecdf(sample, q):
    """inf{x : #(x_i <= x) / n >= q}, with exact rational comparison."""
    xs = sorted(x for x in sample if not math.isnan(x))
    n = len(xs)
    q = Fraction(q).limit_denominator(10**6)
    for x in xs:
        if Fraction(sum(1 for y in xs if y <= x), n) >= q:
            return x
    return xs[-1]


samples = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40)


class TestGrid:
    def test_default_midpoints(self):
        assert GRID.count == 200
        assert GRID.levels[0] == 0.0025 and GRID.levels[-1] == 0.9975
        assert np.allclose(np.diff(GRID.levels), 0.005, atol=1e-15)

    @pytest.mark.parametrize("levels", [[0.0, 0.5], [0.5, 1.0], [0.6, 0.4], []])
    def test_invalid(self, levels):
        with pytest.raises(InvalidArgumentError):
            QuantileGrid(levels)


class TestEmpiricalQuantiles:
    def test_single_observation(self):
        qv = empirical_quantiles([5.0], GRID)
        assert np.all(qv.values == 5.0) and qv.sample_size == 1

    def test_median_of_four(self):
        assert empirical_quantiles([1, 2, 3, 4], QuantileGrid([0.5])).values[0] == 2

    def test_missing_dropped(self):
        qv = empirical_quantiles([3, 1, np.nan, 2], QuantileGrid([0.9]))
        assert qv.values[0] == 3 and qv.sample_size == 3

    def test_empty(self):
        with pytest.raises(EmptySampleError):
            empirical_quantiles([np.nan, np.nan], GRID)

    @settings(max_examples=150, deadline=None)
    @given(samples)
    def test_matches_inverse_ecdf(self, sample):
        qv = empirical_quantiles(sample, GRID)
        assert np.all(np.diff(qv.values) >= 0)
        for k in range(0, 200, 13):
            assert qv.values[k] == inverse_ecdf(sample, GRID.levels[k])

    def test_matrix_rows_match_scalar(self, rng):
        rows = rng.normal(size=(6, 37))
        rows[1, :5] = np.nan
        rows[4, :] = np.nan
        values, counts = quantile_matrix(rows, GRID)
        assert list(counts) == [37, 32, 37, 37, 0, 37]
        for i in (0, 1, 2, 3, 5):
            assert np.array_equal(values[i], empirical_quantiles(rows[i], GRID).values)
        assert np.all(np.isnan(values[4]))


def qv(sample, grid=GRID):
    return empirical_quantiles(sample, grid)


class TestQuantileWD:
    def test_identity(self, rng):
        a = qv(rng.normal(size=50))
        assert quantile_wd(a, a, 2) == 0.0

    @pytest.mark.parametrize("r", [1, 2, 3.5])
    def test_point_masses(self, r):
        assert quantile_wd(qv([0.0]), qv([2.75]), r) == pytest.approx(2.75, rel=1e-15)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            quantile_wd(qv([0.0]), qv([1.0], QuantileGrid.midpoints(10)))

    def test_order_validated(self):
        with pytest.raises(InvalidArgumentError):
            quantile_wd(qv([0.0]), qv([1.0]), 0.5)

    def test_strict_scaling(self, rng):
        a, b = qv(rng.normal(size=30)), qv(rng.normal(size=30))
        assert quantile_wd(a, b, 2, strict_paper_scaling=True) == pytest.approx(
            quantile_wd(a, b, 2) * math.sqrt(200), rel=1e-13
        )

    def test_gaussian_monte_carlo(self):
        x = normals(11, 0, 100_000)
        y = 3.0 + normals(12, 0, 100_000)
        expected = gaussian_w2(0, 1, 3, 1)
        assert expected == 3.0
        assert abs(quantile_wd(qv(x), qv(y), 2) - expected) <= 0.02

    @settings(max_examples=100, deadline=None)
    @given(samples, samples, samples)
    def test_pseudometric(self, a, b, c):
        qa, qb, qc = qv(a), qv(b), qv(c)
        ab = quantile_wd(qa, qb, 2)
        assert ab == quantile_wd(qb, qa, 2)
        assert quantile_wd(qa, qc, 2) <= ab + quantile_wd(qb, qc, 2) + 1e-12 * (1 + ab)

    @settings(max_examples=100, deadline=None)
    @given(samples, samples, st.floats(0.01, 100))
    def test_positive_homogeneity(self, a, b, alpha):
        base = quantile_wd(qv(a), qv(b), 2)
        scaled = quantile_wd(qv(np.multiply(a, alpha)), qv(np.multiply(b, alpha)), 2)
        assert scaled == pytest.approx(alpha * base, rel=1e-12, abs=1e-12)

    def test_common_translation(self, rng):
        a, b = rng.normal(size=80), rng.normal(1, 2, size=80)
        base = quantile_wd(qv(a), qv(b), 2)
        assert quantile_wd(qv(a + 5.0), qv(b + 5.0), 2) == pytest.approx(base, abs=1e-12)

    def test_point_mass_translation_r1(self):
        assert quantile_wd(qv([1.0]), qv([1.0 + 4.0]), 1) == 4.0

    def test_grid_refinement_is_stable(self):
        x = normals(3, 0, 20_000)
        y = 0.5 + 1.3 * normals(4, 0, 20_000)
        d200 = quantile_wd(qv(x), qv(y), 2)
        g400 = QuantileGrid.midpoints(400)
        d400 = quantile_wd(qv(x, g400), qv(y, g400), 2)
        assert abs(d400 - d200) / d200 < 0.02


class TestGaussianW2:
    def test_values(self):
        assert gaussian_w2(0, 1, 0, 1) == 0
        assert gaussian_w2(0, 1, 3, 1) == 3
        assert gaussian_w2(0, 1, 0, 2) == 1

    def test_negative_sigma(self):
        with pytest.raises(InvalidArgumentError):
            gaussian_w2(0, -1, 0, 1)
