import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbvpcert.envelope import DelayForm
from fbvpcert.errors import NoConvergence
from fbvpcert.kernel import DirichletNonlocal, Mode, Thermostat
from fbvpcert.measure import GridFunction, PiecewiseLinear, SignedMeasure
from fbvpcert.problem import InitialDatum, build_instance, corollary_instance
from fbvpcert.solver import (
    ConeSeed,
    Discretization,
    Membership,
    SolverConfig,
    Strategy,
    alpha_consistency,
    apply_operator,
    check_cone_membership,
    interp_matrix,
    make_nodes,
    problem_grid,
    seed_levels,
    solve,
    solve_multistart,
)

from .conftest import invariance_instances, random_cone_element


def constant_F(value, r=0.1):
    return DelayForm(lambda t, u, v: value + 0 * u, r)


def dirichlet(F, psi=None, alpha=None):
    return build_instance(DirichletNonlocal(), 0.25, 0.75, F, psi=psi, alpha=alpha)


def smooth_instance():
    """Dirichlet with an atom and a density; Picard converges to a nontrivial solution."""
    F = DelayForm(lambda t, u, v: 1 + 0.5 * np.abs(u) * np.abs(v) + 0 * t, 0.1)
    return dirichlet(F, InitialDatum.bump(0.3, 0.1),
                     SignedMeasure(((0.5, 0.4),), PiecewiseLinear.constant(0.2)))


class TestConfig:
    @pytest.mark.parametrize("kw", [{"grid": 32}, {"tol": 0.0}, {"omega": 0.0}, {"omega": 1.5}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_strategy_from_string(self):
        assert SolverConfig(strategy="newton").strategy is Strategy.NEWTON


class TestGrid:
    def test_required_points_are_nodes(self):
        nodes = make_nodes(0.15, 65, [0.0, 0.25, 0.4375, 0.3333])
        for p in (0.0, 0.25, 0.4375, 0.3333):
            assert np.min(np.abs(nodes - p)) == 0.0
        assert nodes[0] == -0.15 and nodes[-1] == 1.0
        assert np.all(np.diff(nodes) > 0)

    def test_interp_matrix(self):
        nodes = np.array([-0.1, 0.0, 0.5, 1.0])
        W = interp_matrix(nodes, [-0.1, 0.25, 1.0])
        assert np.allclose(W @ np.array([1.0, 0.0, 2.0, 4.0]), [1.0, 1.0, 4.0])

    def test_problem_grid_contains_eta_and_atoms(self):
        P = invariance_instances()["thermostat-signed"]
        nodes = problem_grid(P, 100)
        for p in (0.25, 0.3, 0.2, 0.45):
            assert np.min(np.abs(nodes - p)) <= 1e-14


class TestOperator:
    def test_zero_F_returns_psi(self, rng):
        P = corollary_instance()
        P = build_instance(P.kernel, P.a, P.b, constant_F(0.0, 0.15), psi=P.psi,
                           alpha=SignedMeasure(((0.4, 0.3),)))
        u = GridFunction.uniform(0.15, 129, lambda t: np.sin(5 * t))
        Fu = apply_operator(P, u)
        # alpha[u] term survives: F u = psi + gamma alpha[u]
        expected = P.psi(u.nodes) + P.kernel.gamma(u.nodes) * 0.3 * u(0.4)
        assert np.allclose(Fu.values, expected, atol=1e-14)

    def test_zero_F_zero_alpha(self):
        P = build_instance(Thermostat(0.25, 0.25), 0.25, 7 / 16, constant_F(0.0, 0.15),
                           psi=InitialDatum.bump(0.5, 0.15))
        u = GridFunction.uniform(0.15, 129, lambda t: 1 + t)
        assert np.allclose(apply_operator(P, u).values, P.psi(u.nodes), atol=0)

    def test_constant_load_dirichlet(self):
        P = dirichlet(constant_F(1.0))
        u = GridFunction.uniform(0.1, 257, lambda t: np.cos(t))
        Fu = apply_operator(P, u)
        t = u.nodes
        assert np.allclose(Fu.values, np.where(t > 0, t * (1 - t) / 2, 0.0), atol=1e-14)

    def test_trivial_extension_fixed_for_product(self):
        P = corollary_instance(0.5)
        nodes = problem_grid(P, 257)
        u = GridFunction(nodes, P.psi(nodes))
        assert np.array_equal(apply_operator(P, u).values, u.values)


class TestMembership:
    def setup_method(self):
        self.P = corollary_instance()
        self.nodes = problem_grid(self.P, 257)
        self.psi = self.P.psi(self.nodes)
        self.gam = self.P.kernel.gamma(self.nodes)

    def test_psi_extension(self):
        v = check_cone_membership(self.P, GridFunction(self.nodes, self.psi))
        assert v.kind is Membership.IN_K_PSI
        assert v.margins["min"] == 0.0

    def test_gamma_direction(self):
        assert check_cone_membership(self.P, GridFunction(self.nodes, self.psi + self.gam)).inside

    def test_negative_gamma(self):
        v = check_cone_membership(self.P, GridFunction(self.nodes, self.psi - self.gam))
        assert v.kind is Membership.OUTSIDE and v.margins["min"] < 0

    def test_history_must_match(self):
        u = self.psi + self.gam
        u[self.nodes < -0.05] += 1e-12
        assert not check_cone_membership(self.P, GridFunction(self.nodes, u)).inside

    def test_positive_mode_clause(self):
        P = invariance_instances()["dirichlet-positive"]
        nodes = problem_grid(P, 129)
        v = P.kernel.gamma(nodes) - 0.02 * np.sin(np.pi * np.clip(nodes, 0, 1) * 8) ** 2
        v[nodes > 0.9] = -1e-3
        verdict = check_cone_membership(P, GridFunction(nodes, P.psi(nodes) + v))
        assert "nonneg" in verdict.margins and not verdict.inside


@pytest.mark.parametrize("name", sorted(invariance_instances()))
@given(seed=st.integers(0, 2**32 - 1))
def test_cone_invariance(name, seed):
    P = invariance_instances()[name]
    nodes = problem_grid(P, 129)
    u = random_cone_element(P, nodes, np.random.default_rng(seed))
    out = check_cone_membership(P, apply_operator(P, u), slack=1e-9)
    assert out.inside, out.margins


@given(seed=st.integers(0, 2**32 - 1), rho=st.floats(0.05, 3.0))
def test_nesting(seed, rho):
    P = invariance_instances()["thermostat-signed"]
    nodes = problem_grid(P, 129)
    u = random_cone_element(P, nodes, np.random.default_rng(seed), radius=3.0)
    v = u.with_values(u.values - P.psi(nodes))
    norm, low = v.norm(), v.min_on(P.a, P.b)
    if norm < rho:
        assert low < rho
    if low < rho:
        assert norm < rho / P.c


class TestSolve:
    def test_affine_oracle(self):
        rep = solve(dirichlet(constant_F(1.0)), SolverConfig(grid=257))
        t = rep.u.nodes
        assert rep.iterations == 1
        assert np.max(np.abs(rep.u.values - np.where(t > 0, t * (1 - t) / 2, 0))) < 1e-14
        assert rep.converged and not rep.is_trivial and rep.cone.inside

    def test_zero_F_trivial(self):
        P = dirichlet(constant_F(0.0), InitialDatum.bump(0.3, 0.1))
        rep = solve(P, SolverConfig(grid=129))
        assert rep.is_trivial and rep.residual == 0.0

    @pytest.mark.parametrize("strategy", list(Strategy))
    def test_strategies_agree(self, strategy):
        P = smooth_instance()
        rep = solve(P, SolverConfig(grid=129, strategy=strategy))
        ref = solve(P, SolverConfig(grid=129, strategy=Strategy.NEWTON))
        assert np.max(np.abs(rep.u.values - ref.u.values)) < 1e-9

    def test_nontrivial_report(self):
        P = smooth_instance()
        rep = solve(P, SolverConfig(grid=257))
        assert rep.residual < 1e-10
        assert rep.cone.kind is Membership.IN_POSITIVE_CONE
        assert rep.alpha_gap < 1e-9
        # residual is recomputed from the returned u
        assert rep.residual == np.max(np.abs(Discretization(P, 257).residual(rep.u.values)))

    def test_norm_split(self):
        P = smooth_instance()
        rep = solve(P, SolverConfig(grid=257))
        u = rep.u
        hist = np.max(np.abs(u.values[u.nodes <= 0]))
        assert rep.norm_split == (P.psi_norm, pytest.approx(u.norm(0.0, 1.0), abs=0))
        assert u.norm() == max(hist, rep.norm_split[1])
        assert rep.norm == max(P.psi_norm, rep.norm_split[1])

    def test_grid_refinement_order(self):
        P = smooth_instance()
        errs = []
        for n in (129, 257):
            u = solve(P, SolverConfig(grid=n)).u
            fine = np.unique(np.concatenate([u.nodes, (u.nodes[1:] + u.nodes[:-1]) / 2]))
            errs.append(np.max(np.abs(Discretization(P, nodes=fine).residual(u(fine)))))
        assert np.log2(errs[0] / errs[1]) >= 1.8

    def test_alpha_identity_unit_atom(self):
        P = dirichlet(constant_F(1.0), alpha=SignedMeasure(((0.5, 1.0),)))
        rep = solve(P, SolverConfig(grid=257))
        # closed form: alpha[u] = int K_A / (1 - alpha[gamma]) = (1/8) / (1/2)
        assert rep.u(0.5) == pytest.approx(0.125 + 0.5 * 0.25, abs=1e-13)
        assert alpha_consistency(P, rep.u) < 1e-8

    def test_alpha_consistency_zero_measure(self):
        P = dirichlet(constant_F(1.0))
        u = GridFunction.uniform(0.1, 65, np.cos)
        assert alpha_consistency(P, u) == 0.0

    def test_alpha_consistency_reports_non_fixed_points(self):
        P = dirichlet(constant_F(1.0), alpha=SignedMeasure(((0.5, 1.0),)))
        u = GridFunction.uniform(0.1, 65, lambda t: np.clip(t, 0, None))
        assert alpha_consistency(P, u) > 1e-3

    def test_no_convergence_carries_report(self):
        P = smooth_instance()
        cfg = SolverConfig(grid=65, max_iter=2, strategy=Strategy.PICARD)
        with pytest.raises(NoConvergence) as info:
            solve(P, cfg)
        rep = info.value.report
        assert rep is not None and not rep.converged and rep.residual > cfg.tol
        assert rep.iterations == 2

    def test_csv(self):
        rep = solve(dirichlet(constant_F(1.0)), SolverConfig(grid=65))
        lines = rep.to_csv().splitlines()
        assert lines[0].startswith("# residual=") and "cone=InPositiveCone" in lines[0]
        assert "norm_psi=0 " in lines[0]
        assert float(lines[0].split("norm_v=")[1]) == pytest.approx(rep.u.norm(0.0, 1.0), rel=1e-11)
        assert lines[1] == "t,u"
        t, u = (float(x) for x in lines[-1].split(","))
        assert (t, u) == (1.0, 0.0)
        assert len(lines) == 2 + rep.u.nodes.size


class TestMultistart:
    def test_seed_levels(self):
        assert seed_levels([1.0, 100.0]) == [1.0, 10.0, 100.0]
        assert seed_levels([0.0, 4.0]) == [4.0]

    def test_zero_F_only_trivial(self):
        P = dirichlet(constant_F(0.0), InitialDatum.bump(0.3, 0.1))
        res = solve_multistart(P, SolverConfig(grid=65), [1.0, 10.0])
        assert res.reports and not res.nontrivial
        assert res.best.is_trivial

    def test_finds_corollary_solution_small_grid(self):
        P = corollary_instance(0.5)
        res = solve_multistart(P, SolverConfig(grid=257), seed_levels([0.6, 500.0]))
        best = res.best
        assert best is not None and not best.is_trivial and best.cone.inside
        assert best.norm > 1 and best.u.min_on(P.a, P.b) > 0
        assert len(res.distinct()) >= 2  # the trivial extension is found too

    def test_annulus(self):
        rep = solve(dirichlet(constant_F(1.0)), SolverConfig(grid=65))
        assert rep.annulus([0.1, 1.0]) == (0.1, 1.0)
        assert rep.annulus([1.0]) == (None, 1.0)


def test_positive_mode_solution_nonnegative():
    P = build_instance(Thermostat(1, 0.5, Mode.NON_NEGATIVE), 0.25, 0.75,
                       DelayForm(lambda t, u, v: 0.5 * np.abs(u) * (1 + np.abs(v)), 0.1),
                       psi=InitialDatum.bump(0.1, 0.1),
                       alpha=SignedMeasure(((0.5, 0.2),), PiecewiseLinear.constant(0.1)))
    res = solve_multistart(P, SolverConfig(grid=129), [1.0, 10.0])
    assert res.best is not None
    assert np.min(res.best.u.values - P.psi(res.best.u.nodes)) >= -1e-12
