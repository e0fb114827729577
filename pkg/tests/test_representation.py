import numpy as np
import pytest

from maxstab.domain import DiscreteMeasure, Grid, Hyperrectangle, dirac_measure, regular_grid, uniform_vertex_measure
from maxstab.exceptions import ContractError, NumericalError
from maxstab.representation import (
    ConjectureViolation,
    covariance_from_measure,
    critical_alpha,
    factorize,
    k_stationary_covariance,
    lambda_modified_representation,
    matheron_conditions,
    max_variance,
    optimized_representation,
    original_representation,
    solve_min_max_measure,
    stationary_candidate_measure,
)
from maxstab.variogram import Variogram, scale_for_box_variance, scale_for_target_variance

ALPHAS = np.round(np.arange(0.1, 1.95, 0.1), 1)
LINE = regular_grid(Hyperrectangle((1.0,)), 41)
SQUARE = regular_grid(Hyperrectangle((1.0, 1.0)), 11)
SQUARE_CORNERS = 0.41907858848571777  # frozen regression anchor for the 3x3 grid


def variogram_identity_error(rep):
    c = rep.covariance
    d = np.diag(c)
    gam = rep.variogram.pairwise(rep.grid.points)
    return np.abs(d[:, None] + d[None, :] - 2 * c - gam).max()


class TestCovarianceFromMeasure:
    def test_dirac_at_origin(self):
        g = regular_grid(Hyperrectangle((1.0,)), 5)
        rep = covariance_from_measure(Variogram(1.0), g, dirac_measure(g, 2))
        x = g.points[:, 0]
        expected = 0.5 * (np.abs(x)[:, None] + np.abs(x)[None, :] - np.abs(x[:, None] - x[None, :]))
        np.testing.assert_allclose(rep.covariance, expected, atol=1e-15)
        assert rep.covariance[-1, -1] == 1.0
        assert rep.provenance == "original"

    def test_uniform_endpoints_flat_profile(self):
        rep = lambda_modified_representation(Variogram(1.0), LINE)
        np.testing.assert_allclose(rep.variance_profile, 0.5, atol=1e-14)
        assert rep.provenance == "lambda_modified"

    def test_single_point(self):
        g = Grid([[0.0]])
        rep = covariance_from_measure(Variogram(0.5), g, DiscreteMeasure([1.0]))
        assert rep.covariance.tolist() == [[0.0]]

    def test_custom_provenance(self):
        g = regular_grid(Hyperrectangle((1.0,)), 5)
        rep = covariance_from_measure(Variogram(1.0), g, DiscreteMeasure([0.2] * 5))
        assert rep.provenance == "custom_measure"

    def test_misaligned_measure(self):
        with pytest.raises(ContractError):
            covariance_from_measure(Variogram(1.0), LINE, DiscreteMeasure([0.5, 0.5]))

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_variogram_identity_all_paths(self, alpha):
        for grid in (LINE, SQUARE):
            v = Variogram(alpha, scale_for_box_variance(alpha, 0.5, [1.0] * grid.dim))
            for rep in (original_representation(v, grid), lambda_modified_representation(v, grid),
                        k_stationary_covariance(v, grid)):
                assert variogram_identity_error(rep) <= 1e-10
                np.testing.assert_array_equal(rep.covariance, rep.covariance.T)
                lt = rep.factor @ rep.factor.T
                live = np.diag(rep.covariance) > 0
                np.testing.assert_allclose(lt[np.ix_(live, live)],
                                           (rep.covariance + rep.jitter_used * np.eye(grid.n_points))[np.ix_(live, live)],
                                           rtol=1e-8, atol=1e-12)


class TestKStationary:
    def test_linear_case(self):
        rep = k_stationary_covariance(Variogram(1.0), LINE)
        x = LINE.points[:, 0]
        np.testing.assert_allclose(rep.covariance, (1 - np.abs(x[:, None] - x[None, :])) / 2, atol=1e-14)

    def test_square_brownian_sheet(self):
        v = Variogram(1.0, np.pi / (2 * np.sqrt(2)))
        rep = k_stationary_covariance(v, SQUARE)
        np.testing.assert_allclose(rep.variance_profile, 1.0, atol=1e-12)

    def test_table_scale(self):
        rep = k_stationary_covariance(Variogram(0.7, 0.818), LINE)
        np.testing.assert_allclose(rep.variance_profile, 0.5, atol=1e-3)

    def test_radius_too_small(self):
        with pytest.raises(ContractError):
            k_stationary_covariance(Variogram(1.0), LINE, R=0.5)

    def test_anisotropic_rejected(self):
        with pytest.raises(ContractError):
            k_stationary_covariance(Variogram(1.0, anisotropy=[[2.0, 0.0], [0.0, 1.0]]), SQUARE)


class TestMaxVariance:
    def test_original(self):
        value, idx = max_variance(original_representation(Variogram(1.0), LINE))
        assert value == pytest.approx(1.0) and abs(LINE.points[idx, 0]) == 1.0

    def test_lambda(self):
        assert max_variance(lambda_modified_representation(Variogram(1.0), LINE))[0] == pytest.approx(0.5)

    def test_kstat_constant(self):
        rep = k_stationary_covariance(Variogram(1.3, 1.253), LINE)
        assert max_variance(rep)[0] == pytest.approx(rep.covariance[0, 0])

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_modification_never_increases(self, alpha):
        for grid in (LINE, SQUARE):
            v = Variogram(alpha, scale_for_box_variance(alpha, 0.5, [1.0] * grid.dim))
            assert max_variance(lambda_modified_representation(v, grid))[0] <= \
                max_variance(original_representation(v, grid))[0] + 1e-10

    @pytest.mark.parametrize("alpha", [1.0, 1.3, 1.6, 1.9])
    def test_vertex_measure_optimal_for_convex(self, alpha):
        v = Variogram(alpha, scale_for_target_variance(alpha, 0.5))
        grid = regular_grid(Hyperrectangle((1.0,)), 21)
        best = max_variance(lambda_modified_representation(v, grid))[0]
        rng = np.random.default_rng(7)
        for _ in range(200):
            lam = DiscreteMeasure(rng.dirichlet(np.full(grid.n_points, 0.3)))
            assert best <= max_variance(covariance_from_measure(v, grid, lam))[0] + 1e-12


class TestFactorize:
    def test_psd_boundary_uses_little_jitter(self):
        rep = k_stationary_covariance(Variogram(1.9, scale_for_target_variance(1.9, 0.5)),
                                      regular_grid(Hyperrectangle((1.0,)), 501))
        assert rep.jitter_used <= 1e-6 * np.trace(rep.covariance) / 501

    def test_indefinite_fails(self):
        with pytest.raises(NumericalError, match="eigenvalue"):
            factorize(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_pinned_row_exact_zero(self):
        rep = original_representation(Variogram(0.7), LINE)
        assert np.all(rep.factor[20] == 0)


class TestStationaryCandidate:
    def test_three_points(self):
        res = stationary_candidate_measure(Variogram(1.0), Grid([[-1.0], [0.0], [1.0]]))
        np.testing.assert_allclose(res.weights, [0.5, 0.0, 0.5], atol=1e-14)
        np.testing.assert_allclose(res.measure.weights, [0.5, 0.0, 0.5], atol=1e-14)

    @pytest.mark.parametrize("alpha", [0.3, 1.7])
    def test_two_points(self, alpha):
        res = stationary_candidate_measure(Variogram(alpha), Grid([[-0.3], [2.0]]))
        np.testing.assert_allclose(res.measure.weights, [0.5, 0.5])

    def test_random_line_grids_nonnegative(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            pts = np.sort(rng.uniform(-1, 1, rng.integers(3, 30)))
            res = stationary_candidate_measure(Variogram(0.7), Grid(pts))
            assert res.nonnegative

    def test_singular(self):
        with pytest.raises(ContractError):
            stationary_candidate_measure(Variogram(1.0), Grid([[0.0]]))


class TestCriticalAlpha:
    def test_collinear(self):
        assert critical_alpha(Grid([[0.0, 0.0], [1.0, 1.0], [3.0, 3.0]])) == 1.0

    def test_line(self):
        assert critical_alpha(LINE) == 1.0

    def test_square_corners_symmetric(self):
        # by symmetry G e has equal entries, so the candidate is uniform for every alpha
        assert critical_alpha(Grid([[0, 0], [1, 0], [0, 1], [1, 1]])) == 1.0

    def test_three_by_three_anchor(self):
        g = regular_grid(Hyperrectangle((1.0, 1.0)), 3)
        assert critical_alpha(g) == pytest.approx(SQUARE_CORNERS, abs=1e-6)

    def test_fine_square_violates(self):
        with pytest.raises(ConjectureViolation):
            critical_alpha(regular_grid(Hyperrectangle((1.0, 1.0)), 21), alpha_min=0.05)

    def test_tolerance_floor(self):
        with pytest.raises(ContractError):
            critical_alpha(LINE, tol=1e-9)


class TestMinMax:
    def test_convex_vertex_solution(self):
        res = solve_min_max_measure(Variogram(1.3), LINE)
        np.testing.assert_allclose(res.measure.weights[[0, -1]], 0.5, atol=1e-8)
        assert res.gap <= 1e-10

    def test_linear_three_points(self):
        res = solve_min_max_measure(Variogram(1.0), Grid([[-1.0], [0.0], [1.0]]))
        assert res.max_variance == pytest.approx(0.5, abs=1e-10)

    def test_two_points_closed_form(self):
        res = solve_min_max_measure(Variogram(0.5), Grid([[-1.0], [1.0]]))
        np.testing.assert_allclose(res.measure.weights, 0.5)
        assert res.max_variance == pytest.approx(2 ** -1.5, rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.3, 0.7, 1.0, 1.5])
    def test_objective_matches_representation(self, alpha):
        for grid in (LINE, SQUARE):
            v = Variogram(alpha, scale_for_box_variance(alpha, 0.5, [1.0] * grid.dim))
            res = solve_min_max_measure(v, grid)
            rep = optimized_representation(v, grid)
            assert res.max_variance == pytest.approx(max_variance(rep)[0], abs=1e-8)
            assert rep.provenance == "optimized"
            # never worse than the three closed-form constructions
            for other in (lambda_modified_representation(v, grid), k_stationary_covariance(v, grid)):
                assert res.max_variance <= max_variance(other)[0] + 1e-8

    def test_concave_line_is_stationary(self):
        v = Variogram(0.7, scale_for_target_variance(0.7, 0.5))
        res = solve_min_max_measure(v, regular_grid(Hyperrectangle((1.0,)), 101))
        # discrete optimum sits just below the continuum K-stationary value 0.5
        assert 0.49 < res.max_variance <= 0.5


class TestMatheron:
    def test_convex_vertex_measure_holds(self):
        box = Hyperrectangle((1.0,))
        rep = matheron_conditions(Variogram(1.3), LINE, box, uniform_vertex_measure(LINE, box))
        assert rep.holds

    def test_dirac_fails(self):
        box = Hyperrectangle((1.0,))
        rep = matheron_conditions(Variogram(1.3), LINE, box, dirac_measure(LINE, 20))
        assert not rep.holds and rep.mass_off_vertices == 1.0

    def test_square_linear_holds(self):
        box = Hyperrectangle((1.0, 1.0))
        assert matheron_conditions(Variogram(1.0), SQUARE, box, uniform_vertex_measure(SQUARE, box)).holds
