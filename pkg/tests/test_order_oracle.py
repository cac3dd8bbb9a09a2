import numpy as np
import pytest

from conftest import example_11, martingale_spread, random_measure
from cvxorder.errors import DimensionMismatch, GridTooCoarse, InvalidInput
from cvxorder.measure import barycenter, new_discrete
from cvxorder.order_oracle import (
    Grid1D,
    convex_inequality_check,
    forward_projection_grid,
    is_convex_order,
    martingale_residual,
)
from cvxorder.projection import SolverConfig, projection_distance

EXACT = SolverConfig(oracle="lp")


class TestIsConvexOrder:
    def test_symmetric_spread_dominates_dirac(self):
        mu = new_discrete([[0.0, 0.0]], [1.0])
        nu = new_discrete([[-1.0, 0.0], [1.0, 0.0]], [0.5, 0.5])
        res = is_convex_order(mu, nu)
        assert res.in_order and bool(res)
        np.testing.assert_allclose(res.coupling.plan.matrix, [[0.5, 0.5]], atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 10, 100, 1000])
    def test_tilted_spread_never_dominates(self, n):
        mu, nu = example_11(n)
        res = is_convex_order(mu, nu)
        assert not res
        # the least violation is the barycenter shift 1/(2n)
        assert res.violation == pytest.approx(1 / (2 * n), rel=1e-9)
        assert res.coupling is None

    def test_crossed_pairs_are_incomparable(self):
        e1 = new_discrete([[1.0, 0.0], [-1.0, 0.0]], [0.5, 0.5])
        e2 = new_discrete([[0.0, 1.0], [0.0, -1.0]], [0.5, 0.5])
        assert not is_convex_order(e1, e2)
        assert not is_convex_order(e2, e1)

    def test_reflexive(self, rng):
        for d in (1, 2, 3):
            m = random_measure(rng, 7, d)
            assert is_convex_order(m, m)

    def test_transitive_on_chains(self, rng):
        for _ in range(10):
            mu = random_measure(rng, 3, 2)
            nu = martingale_spread(rng, mu, 2)
            rho = martingale_spread(rng, nu, 2)
            assert is_convex_order(mu, nu) and is_convex_order(nu, rho) and is_convex_order(mu, rho)

    def test_true_implies_barycenters_match_and_small_residual(self, rng):
        for _ in range(20):
            mu = random_measure(rng, 4, 2)
            nu = martingale_spread(rng, mu, 3)
            res = is_convex_order(mu, nu)
            assert res
            assert np.abs(barycenter(mu) - barycenter(nu)).max() <= 1e-7
            assert res.coupling.martingale_residual <= res.tol
            assert martingale_residual(res.coupling.plan.matrix, mu, nu) <= res.tol
            assert res.coupling.plan.marginal_error() <= 1e-9

    def test_zero_weight_atoms_ignored(self):
        mu = new_discrete([[0.0], [5.0]], [1.0, 0.0])
        nu = new_discrete([[-1.0], [1.0]], [0.5, 0.5])
        res = is_convex_order(mu, nu)
        assert res
        assert res.coupling.plan.matrix.shape == (2, 2)

    def test_scale_equivariant(self, rng):
        mu = random_measure(rng, 3, 2)
        nu = martingale_spread(rng, mu, 2)
        for c in (1e-3, 1.0, 1e3):
            big_mu = new_discrete(c * mu.points, mu.weights)
            big_nu = new_discrete(c * nu.points, nu.weights)
            assert is_convex_order(big_mu, big_nu)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            is_convex_order(new_discrete([[0.0]], [1.0]), new_discrete([[0.0, 0.0]], [1.0]))


class TestAgreementWithProjection:
    def test_mixed_pairs(self):
        rng = np.random.default_rng(3)
        for trial in range(60):
            d = int(rng.integers(1, 4))
            mu = random_measure(rng, int(rng.integers(1, 9)), d)
            if trial % 2:
                nu = martingale_spread(rng, mu, int(rng.integers(1, 3)))
            else:
                nu = random_measure(rng, int(rng.integers(1, 9)), d, scale=2.0)
            dist = projection_distance(mu, nu, EXACT)
            assert (dist <= 1e-5) == bool(is_convex_order(mu, nu))


class TestConvexCheck:
    def test_no_violation_when_ordered(self, rng):
        mu = random_measure(rng, 4, 2)
        nu = martingale_spread(rng, mu, 3)
        assert is_convex_order(mu, nu)
        report = convex_inequality_check(mu, nu, trials=1000, seed=0)
        assert report.passed and report.trials == 1000

    def test_finds_violation_for_tilted_spread(self):
        mu, nu = example_11(1)
        report = convex_inequality_check(mu, nu, trials=1000, seed=0)
        assert not report.passed
        t, excess, slopes, offsets = report.violations[0]
        phi = lambda p: np.max(p @ slopes.T + offsets, axis=1)  # noqa: E731
        assert phi(mu.points) @ mu.weights - phi(nu.points) @ nu.weights == pytest.approx(excess)
        assert excess > 1e-9

    def test_constant_functions_never_violate(self, rng):
        from cvxorder.order_oracle import _phi_excess

        mu, nu = random_measure(rng, 5, 2), random_measure(rng, 6, 2)
        for b in rng.standard_normal(20):
            assert abs(_phi_excess(mu, nu, np.zeros((5, 2)), np.full(5, b))) <= 1e-15

    def test_seeded(self):
        mu, nu = example_11(1)
        a = convex_inequality_check(mu, nu, trials=200, seed=5)
        b = convex_inequality_check(mu, nu, trials=200, seed=5)
        assert [v[:2] for v in a.violations] == [v[:2] for v in b.violations]

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            convex_inequality_check(new_discrete([[0.0]], [1.0]), new_discrete([[0.0, 0.0]], [1.0]))


class TestForwardGrid:
    def test_grid_validation(self):
        with pytest.raises(InvalidInput):
            Grid1D(1.0, 1.0, 10)
        with pytest.raises(InvalidInput):
            Grid1D(0.0, 1.0, 1)
        g = Grid1D(0.0, 2.0, 5)
        np.testing.assert_array_equal(g.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])
        assert g.spacing == 0.5 and g.span == 2.0

    def test_too_coarse(self):
        mu = new_discrete([[0.0]], [1.0])
        nu = new_discrete([[-1.0], [3.0]], [0.5, 0.5])
        with pytest.raises(GridTooCoarse):
            forward_projection_grid(mu, nu, Grid1D(-1.0, 2.0, 50))
        with pytest.raises(GridTooCoarse):
            forward_projection_grid(mu, nu, Grid1D(0.5, 3.0, 50))

    def test_one_dimensional_only(self):
        d = new_discrete([[0.0, 0.0]], [1.0])
        with pytest.raises(DimensionMismatch):
            forward_projection_grid(d, d, Grid1D(-1.0, 1.0, 5))

    def test_ordered_pair_on_grid_gives_zero(self):
        mu = new_discrete([[0.0]], [1.0])
        nu = new_discrete([[-1.0], [1.0]], [0.5, 0.5])
        assert forward_projection_grid(mu, nu, Grid1D(-2.0, 2.0, 41)) <= 1e-6

    def test_dirac_to_dirac(self):
        mu, nu = new_discrete([[0.0]], [1.0]), new_discrete([[1.0]], [1.0])
        grid = Grid1D.covering(mu, nu, 400)
        forward = forward_projection_grid(mu, nu, grid)
        assert abs(forward - projection_distance(mu, nu, EXACT)) <= grid.spacing
        assert abs(forward - 1.0) <= grid.spacing

    def test_covering_margin(self):
        mu = new_discrete([[0.0]], [1.0])
        nu = new_discrete([[-1.0], [3.0]], [0.5, 0.5])
        g = Grid1D.covering(mu, nu, 10)
        assert (g.lo, g.hi) == (-5.0, 7.0)
        g0 = Grid1D.covering(mu, mu, 10, margin=0.0)
        assert g0.lo < 0.0 < g0.hi
