import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxstab.exceptions import ContractError
from maxstab.variogram import (
    Variogram,
    alternating_difference,
    check_n_alternating,
    check_negative_definite,
    eval_variogram,
    gneiting_constant,
    scale_for_box_variance,
    scale_for_target_variance,
)

ALPHAS = np.round(np.arange(0.1, 1.95, 0.1), 1)


class TestVariogram:
    def test_zero_at_origin(self):
        assert eval_variogram(Variogram(1.0), [0.0]) == 0.0

    def test_linear_case(self):
        assert eval_variogram(Variogram(1.0), 2.0) == 2.0

    def test_unit_at_scale(self):
        assert eval_variogram(Variogram(1.3, 1.253), 1.253) == pytest.approx(1.0, abs=1e-14)

    def test_symmetry_exact(self):
        v = Variogram(0.7, 0.818, anisotropy=[[2.0, 0.3], [0.3, 1.0]])
        h = np.array([[0.3, -1.2], [2.0, 0.1]])
        np.testing.assert_array_equal(v(h), v(-h))

    def test_anisotropy_folds_into_metric(self):
        m = np.array([[2.0, 0.0], [0.0, 1.0]])
        v = Variogram(1.0, 1.0, anisotropy=m)
        assert v([1.0, 0.0]) == pytest.approx(2.0)

    @pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(alpha=2.0), dict(alpha=1.0, scale=0.0),
                                        dict(alpha=1.0, anisotropy=[[1.0, 2.0], [0.0, 1.0]]),
                                        dict(alpha=1.0, anisotropy=[[1.0, 1.0], [1.0, 1.0]])])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ContractError):
            Variogram(**kwargs)

    def test_non_finite_displacement(self):
        with pytest.raises(ContractError):
            Variogram(1.0)([np.nan])

    def test_pairwise_exact_zero_diagonal(self):
        pts = np.random.default_rng(0).normal(size=(30, 2))
        g = Variogram(1.3, 0.7).pairwise(pts)
        assert np.all(np.diag(g) == 0)
        np.testing.assert_array_equal(g, g.T)

    def test_psi_matches_variogram(self):
        v = Variogram(0.7, 0.818)
        h = np.array([[0.3, 0.4]])
        assert v.psi(0.25)[()] == pytest.approx(v(h)[0])


class TestAlternatingDifference:
    def test_identity(self):
        assert alternating_difference(lambda t: t, 0.0, [1.0]) == -1.0

    def test_constant(self):
        assert alternating_difference(lambda t: 3.0, 2.0, [1.0, 4.0, 0.5]) == 0.0

    def test_sqrt(self):
        expected = 1 - math.sqrt(2) - math.sqrt(3) + 2
        assert alternating_difference(math.sqrt, 1.0, [1.0, 2.0]) == pytest.approx(expected)
        # sqrt is 2-alternating, so the second difference is nonpositive
        assert expected == pytest.approx(-0.1463, abs=1e-4)

    def test_rejects_negative_shift(self):
        with pytest.raises(ContractError):
            alternating_difference(math.sqrt, 1.0, [-1.0])


class TestAlternatingCheck:
    def test_concave_power(self):
        assert check_n_alternating(Variogram(0.7), 2)[0]

    def test_order_three(self):
        assert check_n_alternating(Variogram(1.9), 3)[0]

    def test_square_fails(self):
        ok, worst = check_n_alternating(None, 2, psi=lambda t: t * t)
        assert not ok and worst > 0

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0, 1.5, 1.9])
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_all_orders(self, alpha, n):
        assert check_n_alternating(Variogram(alpha), n, trials=300)[0]


class TestNegativeDefinite:
    def test_single_zero_weight(self):
        assert check_negative_definite(Variogram(1.0), [[0.5]], [0.0]) == 0.0

    def test_two_points(self):
        assert check_negative_definite(Variogram(1.0), [0.0, 1.0], [1.0, -1.0]) == pytest.approx(-2.0)

    def test_weights_must_sum_to_zero(self):
        with pytest.raises(ContractError):
            check_negative_definite(Variogram(1.0), [0.0, 1.0], [1.0, 1.0])

    def test_random_systems(self):
        rng = np.random.default_rng(1)
        worst = -np.inf
        for _ in range(1000):
            n, d = rng.integers(2, 13), rng.integers(1, 4)
            alpha = rng.uniform(0.05, 1.95)
            w = rng.normal(size=n)
            w -= w.mean()
            pts = rng.uniform(-3, 3, size=(n, d))
            worst = max(worst, check_negative_definite(Variogram(alpha, rng.uniform(0.2, 3)), pts, w))
        assert worst <= 1e-9


# appendix inequalities for psi(t) = t**(alpha/2)

@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 1.95), st.floats(0, 10), st.floats(0, 10), st.floats(0, 1))
def test_two_point_inequality(alpha, a, R, frac):
    psi = lambda t: t ** (alpha / 2)
    x = frac * R
    lhs = psi(a + (R - x) ** 2) + psi(a + (R + x) ** 2)
    rhs = psi(a + R ** 2) + psi(a + 3 * R ** 2)
    assert lhs <= rhs + 1e-10


@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 1.95), st.floats(0, 10), st.floats(0, 10))
def test_three_term_inequality(alpha, a, b):
    psi = lambda t: t ** (alpha / 2)
    assert psi(3 * a + b) - psi(4 * a) / 2 <= psi(a + b) + 1e-10


class TestScales:
    def test_gneiting_values(self):
        assert gneiting_constant(1.0, 1) == pytest.approx(1.0, rel=1e-14)
        assert gneiting_constant(1.0, 2) == pytest.approx(math.pi / 2, rel=1e-14)

    @pytest.mark.parametrize("alpha,sigma2,expected", [
        (0.7, 0.5, 0.818), (0.7, 1.0, 0.304), (0.7, 2.0, 0.113),
        (1.0, 0.5, 1.000), (1.0, 1.0, 0.500), (1.0, 2.0, 0.250),
        (1.3, 0.5, 1.253), (1.3, 1.0, 0.735), (1.3, 2.0, 0.431),
    ])
    def test_table_of_scales(self, alpha, sigma2, expected):
        assert round(scale_for_target_variance(alpha, sigma2), 3) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_round_trip(self, alpha):
        s = scale_for_target_variance(alpha, 0.7)
        assert gneiting_constant(alpha, 1) / 2 * s ** -alpha == pytest.approx(0.7, rel=1e-10)

    def test_box_scale_square(self):
        assert scale_for_box_variance(1.0, 1.0, [1.0, 1.0]) == pytest.approx(math.pi / (2 * math.sqrt(2)))

    def test_box_scale_reduces_to_interval(self):
        assert scale_for_box_variance(0.7, 0.5, [1.0]) == pytest.approx(scale_for_target_variance(0.7, 0.5))

    def test_rejects_bad_variance(self):
        with pytest.raises(ContractError):
            scale_for_target_variance(1.0, 0.0)
