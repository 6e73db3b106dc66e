import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dense_lp_max, project_capped_simplex
from subpop_lp.actions import TESTING
from subpop_lp.kernel import RectGrid
from subpop_lp.losses import IndicatorLoss
from subpop_lp.lpbuild import ConstraintGrid, SparseLP, build_lp, build_power_row
from subpop_lp.priors import builtin_prior
from subpop_lp.solver import (InfeasibleError, SolverConfig, check_feasible, infeasibility_margin,
                              lagrangian_bound, project_block, refine_exact, solve, subgradient_phase)
from subpop_lp.trial import TrialDesign, n_min


def _tiny(seed: int, with_power: bool):
    """tau = 1, b = 2 (3 x 3 cells) with two FWER points, random objective."""
    rng = np.random.default_rng(seed)
    d = TrialDesign(p1=float(rng.uniform(0.3, 0.7)))
    d = d.with_n(n_min(d))
    s = d.scale()
    grid = RectGrid(1.0, 2.0)
    pts = [(0.0, 0.0), (float(rng.uniform(0.2, 2.0)), 0.0)]
    cg = ConstraintGrid.from_points(s, pts)
    c = rng.normal(size=(*grid.shape, 6))
    lp = build_lp(d, grid, cg, IndicatorLoss(*s.delta_min), builtin_prior("sym", s),
                  objective=(c, 0.0), include_power=False)
    if with_power:
        lp = lp.with_rows([build_power_row(grid, s, float(rng.uniform(0.01, 0.2)))])
    return lp


def _dense(lp):
    """Materialized inequality system: coupling rows plus per-cell sums."""
    A = lp.dense_matrix()
    n_cells = lp.shape[0] * lp.shape[1]
    S = np.kron(np.eye(n_cells), np.ones((1, lp.shape[2])))
    return np.vstack([A, S]), np.r_[lp.rhs_eff, np.ones(n_cells)]


class TestProjection:
    def test_ten_thousand_blocks_against_oracle(self):
        rng = np.random.default_rng(7)
        V = rng.normal(scale=1.5, size=(10_000, 6))
        P = project_block(V)
        ref = np.array([project_capped_simplex(v) for v in V])
        assert np.max(np.abs(P - ref)) <= 1e-9
        assert np.all(P >= 0) and np.all(P.sum(axis=1) <= 1 + 1e-12)

    def test_idempotent_on_ten_thousand_blocks(self):
        rng = np.random.default_rng(8)
        P = project_block(rng.normal(scale=2.0, size=(10_000, 7)))
        assert np.max(np.abs(project_block(P) - P)) <= 1e-14

    def test_non_expansive_on_ten_thousand_pairs(self):
        rng = np.random.default_rng(9)
        X = rng.normal(scale=2.0, size=(10_000, 6))
        Y = rng.normal(scale=2.0, size=(10_000, 6))
        lhs = np.linalg.norm(project_block(X) - project_block(Y), axis=1)
        assert np.all(lhs <= np.linalg.norm(X - Y, axis=1) + 1e-12)

    @given(arrays(np.float64, (5, 6), elements=st.floats(-10, 10)))
    @settings(max_examples=200, deadline=None)
    def test_property_against_oracle(self, V):
        assert np.allclose(project_block(V), [project_capped_simplex(v) for v in V], atol=1e-9)

    def test_feasible_blocks_unchanged(self):
        v = np.array([[0.1, 0.2, 0.3, 0.0]])
        assert np.array_equal(project_block(v), v)

    def test_grid_shaped_input(self):
        m = np.random.default_rng(1).normal(size=(4, 3, 6))
        assert np.allclose(project_block(m).reshape(-1, 6), project_block(m.reshape(-1, 6)))


class TestExactRefinement:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_dense_oracle(self, seed):
        lp = _tiny(seed, with_power=seed % 2 == 1)
        A, b = _dense(lp)
        try:
            ref, _ = dense_lp_max(lp.c.ravel(), A, b)
        except ValueError:
            with pytest.raises(InfeasibleError):
                refine_exact(lp)
            return
        sol = refine_exact(lp)
        assert sol.objective == pytest.approx(ref, abs=1e-9)
        assert sol.max_violation <= 1e-9
        assert sol.gap <= 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_complementary_slackness(self, seed):
        sol = refine_exact(_tiny(100 + seed, with_power=True))
        lp = _tiny(100 + seed, with_power=True)
        assert sol.complementary_slackness(lp) <= 1e-6
        assert np.all(sol.duals >= 0)

    def test_dual_bound_reproduces_objective(self):
        lp = _tiny(3, with_power=False)
        sol = refine_exact(lp)
        assert lagrangian_bound(lp, sol.duals) == pytest.approx(sol.objective, abs=1e-8)

    def test_full_master_agrees_with_column_generation(self):
        lp = _tiny(4, with_power=True)
        a = refine_exact(lp)
        b = refine_exact(lp, config=SolverConfig(refine_method="full"))
        assert a.objective == pytest.approx(b.objective, abs=1e-9)

    def test_no_rows_is_cellwise(self):
        lp = _tiny(5, with_power=False)
        lp = SparseLP(lp.grid, lp.space, lp.c, [])
        sol = refine_exact(lp)
        assert sol.objective == pytest.approx(np.maximum(lp.c.max(axis=2), 0).sum())

    def test_infeasible_power_raises_with_certificate(self):
        lp = _tiny(6, with_power=False)
        s = TrialDesign(p1=0.5).with_n(30.0).scale()
        lp = lp.with_rows([build_power_row(lp.grid, s, 0.999)])
        with pytest.raises(InfeasibleError) as exc:
            refine_exact(lp)
        assert exc.value.certificate["phase_one_value"] > 0


class TestSubgradient:
    def test_iterates_stay_in_blocks_and_lower_the_violation(self):
        lp = _tiny(11, with_power=False)
        X, records = subgradient_phase(lp, SolverConfig(max_iters=200))
        assert np.all(X >= -1e-15) and np.all(X.sum(axis=2) <= 1 + 1e-12)
        assert records
        assert lp.max_violation(X) <= 0.05

    def test_deterministic(self):
        lp = _tiny(12, with_power=True)
        a, _ = subgradient_phase(lp, SolverConfig(max_iters=50, rng_seed=3))
        b, _ = subgradient_phase(lp, SolverConfig(max_iters=50, rng_seed=3))
        assert np.array_equal(a, b)

    def test_warm_start_reaches_same_optimum(self):
        lp = _tiny(13, with_power=True)
        a = solve(lp, SolverConfig(max_iters=100), warm_subgradient=True)
        b = solve(lp, warm_subgradient=False)
        assert a.objective == pytest.approx(b.objective, abs=1e-9)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(step_rule="fast")
        with pytest.raises(ValueError):
            SolverConfig(max_iters=0)


class TestFeasibility:
    def test_feasible_point_returned(self):
        lp = _tiny(21, with_power=True)
        f = check_feasible(lp)
        assert f and lp.max_violation(f.x) <= 1e-9

    def test_infeasible_certificate_margin_positive(self):
        lp = _tiny(22, with_power=False)
        s = TrialDesign(p1=0.5).with_n(30.0).scale()
        lp = lp.with_rows([build_power_row(lp.grid, s, 0.999)])
        f = check_feasible(lp)
        assert not f
        assert f.certificate["phase_one_value"] > 0
        assert infeasibility_margin(lp, f.certificate["y"]) == pytest.approx(f.certificate["margin"])


@pytest.mark.slow
def test_desk_solve_certifies_and_beats_rosenbaum_witness():
    from subpop_lp.procedures import discretize_analytic, rosenbaum
    d = TrialDesign(p1=0.5)
    d = d.with_n(n_min(d))
    s = d.scale()
    grid = RectGrid(0.1, 5.0)
    prior = builtin_prior("sym", s)
    lp = build_lp(d, grid, ConstraintGrid.build(s, 5.0), IndicatorLoss(*s.delta_min), prior, power=0.8)
    sol = solve(lp, warm_subgradient=False)
    assert sol.gap <= 1e-6
    assert sol.complementary_slackness(lp) <= 1e-6
    # the centre-rule discretization overshoots alpha on straddling cells;
    # shrinking it by 10% gives a feasible witness
    witness = 0.9 * discretize_analytic(rosenbaum(s), grid, prior)[0].m
    assert lp.max_violation(witness) == 0.0
    assert sol.objective >= lp.objective(witness) - 1e-9
    assert sol.x.shape == (*grid.shape, TESTING.n_free)
