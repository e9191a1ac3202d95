from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from fbvpcert.errors import IntervalInvalid, ModeUnsupported
from fbvpcert.kernel import (
    ConeData,
    CustomKernel,
    DirichletNonlocal,
    Mode,
    Thermostat,
    cone_constants,
    eval_gamma,
    eval_k,
    greens_residual,
    heaviside,
    phi_bound,
    validate_bounds,
)
from fbvpcert.measure import PiecewiseLinear

from .conftest import gentle_piecewise_linear

q = Fraction


def test_heaviside_values():
    assert heaviside(0) == 1
    assert heaviside(-0.1) == 0
    assert heaviside(2.5) == 1
    assert np.array_equal(heaviside(np.array([-1.0, 0.0, 1.0])), [0.0, 1.0, 1.0])


@given(st.sampled_from([0.0, 1.0]))
def test_heaviside_idempotent_on_01(x):
    assert heaviside(heaviside(x)) == heaviside(x)


class TestEvaluation:
    def test_thermostat_corner(self):
        assert eval_k(Thermostat(0.25, 0.25), 1.0, 1.0) == pytest.approx(0.5)

    def test_dirichlet_diagonal(self):
        assert eval_k(DirichletNonlocal(), 0.5, 0.5) == pytest.approx(0.25)

    def test_closed_form_pieces(self):
        fam = Thermostat(0.25, 0.25)
        # s < eta: beta t/(b+e) + t(eta-s)/(b+e) - (t-s)
        assert fam.k(0.8, 0.1) == pytest.approx(0.4 + 0.8 * 0.15 / 0.5 - 0.7)
        assert fam.k(0.2, 0.6) == pytest.approx(0.1)

    def test_gamma(self):
        assert eval_gamma(Thermostat(0.25, 0.25), 1.0) == pytest.approx(2.0)
        assert eval_gamma(DirichletNonlocal(), 0.3) == pytest.approx(0.3)
        for fam in (Thermostat(0.25, 0.25), DirichletNonlocal()):
            assert eval_gamma(fam, -0.15) == 0.0

    @given(st.floats(-1.0, 0.0), st.floats(0.0, 1.0), st.floats(0.05, 2.0), st.floats(0.01, 0.99))
    def test_zero_for_nonpositive_t(self, t, s, beta, eta):
        for fam in (Thermostat(beta, eta), DirichletNonlocal()):
            assert eval_k(fam, t, s) == 0.0
            assert eval_gamma(fam, t) == 0.0

    def test_sign_change_when_total_below_one(self):
        fam = Thermostat(0.25, 0.25)
        t, s = np.meshgrid(np.linspace(0, 1, 101), np.linspace(0, 1, 101), indexing="ij")
        K = fam.k(t, s)
        assert K.min() < 0
        assert K[t <= 0.49].min() >= 0.0

    @given(st.floats(0.05, 0.9), st.floats(0.05, 0.9))
    def test_nonnegative_below_total(self, beta, eta):
        fam = Thermostat(beta, eta)
        b = 0.99 * min(beta + eta, 1.0)
        t, s = np.meshgrid(np.linspace(0, b, 41), np.linspace(0, 1, 41), indexing="ij")
        assert fam.k(t, s).min() >= -1e-15


class TestPhi:
    def test_thermostat_sign_changing(self):
        assert phi_bound(Thermostat(0.25, 0.25))(0.4) == pytest.approx(0.4)

    def test_thermostat_small_total(self):
        assert phi_bound(Thermostat(0.1, 0.2))(0.5) == pytest.approx((1 - 0.3) / 0.3 * 0.5)

    def test_dirichlet(self):
        assert phi_bound(DirichletNonlocal())(0.5) == pytest.approx(0.25)

    def test_thermostat_nonnegative_branch(self):
        phi = phi_bound(Thermostat(1.0, 0.5, Mode.NON_NEGATIVE))
        assert phi(0.25) == pytest.approx(5 / 24)
        assert phi(0.75) == pytest.approx(0.75 / 1.5)

    def test_nonnegative_requires_total_one(self):
        with pytest.raises(ModeUnsupported):
            phi_bound(Thermostat(0.25, 0.25, Mode.NON_NEGATIVE))


class TestConeConstants:
    def test_corollary_exact(self):
        cone = cone_constants(Thermostat(q(1, 4), q(1, 4)), q(1, 4), q(7, 16))
        assert (cone.c1, cone.c2, cone.c) == (q(1, 8), q(1, 4), q(1, 8))

    def test_dirichlet(self):
        cone = cone_constants(DirichletNonlocal(), q(1, 4), q(3, 4))
        assert cone.c == q(1, 4)

    def test_nonnegative_thermostat(self):
        cone = cone_constants(Thermostat(q(1), q(1, 2), Mode.NON_NEGATIVE), q(1, 4), q(3, 4))
        assert cone.c1 == q(1, 4)
        cone = cone_constants(Thermostat(q(1), q(1, 2), Mode.NON_NEGATIVE), q(1, 2), q(9, 10))
        assert cone.c1 == q(2, 5)

    def test_small_total_formula(self):
        fam = Thermostat(q(1, 10), q(1, 5))
        cone = cone_constants(fam, q(1, 10), q(1, 5))
        assert cone.c1 == min(q(1, 10) * q(1, 10) / q(7, 10), (q(3, 10) - q(1, 5)) / q(7, 10))

    @pytest.mark.parametrize("b", [0.6, 0.5])
    def test_b_beyond_total(self, b):
        with pytest.raises(IntervalInvalid, match="beta"):
            cone_constants(Thermostat(0.25, 0.25), 0.25, b)

    def test_bad_interval(self):
        with pytest.raises(IntervalInvalid):
            cone_constants(DirichletNonlocal(), 0.5, 0.25)
        with pytest.raises(IntervalInvalid):
            cone_constants(DirichletNonlocal(), 0.25, 1.0)

    def test_custom_kernel_uses_user_constants(self):
        fam = CustomKernel(lambda t, s: t * (1 - s) - (t - s) * (t >= s), lambda t: t,
                           lambda s: s * (1 - s), 0.2, lambda a, b: a)
        cone = cone_constants(fam, 0.25, 0.75)
        assert (cone.c1, cone.c2, cone.c) == (0.2, 0.25, 0.2)


class TestBounds:
    def test_corollary_passes(self):
        fam = Thermostat(0.25, 0.25)
        assert validate_bounds(fam, cone_constants(fam, 0.25, 7 / 16), 257).passed

    def test_dirichlet_passes(self):
        fam = DirichletNonlocal()
        assert validate_bounds(fam, cone_constants(fam, 0.25, 0.75), 257).passed

    def test_inflated_c1_fails(self):
        fam = DirichletNonlocal()
        base = cone_constants(fam, 0.25, 0.75)
        bad = ConeData(base.a, base.b, 1.0, base.c2, base.c, base.phi)
        rep = validate_bounds(fam, bad, 257)
        assert not rep.passed and rep.lower_margin < 0

    @given(st.floats(0.05, 0.9), st.floats(0.05, 0.9), st.floats(0.05, 0.45), st.floats(0.1, 0.9))
    def test_thermostat_sign_changing_bounds_hold(self, beta, eta, a, frac):
        fam = Thermostat(beta, eta)
        top = min(beta + eta, 1.0)
        if a >= 0.95 * top:
            return
        b = a + frac * (0.95 * top - a)
        assert validate_bounds(fam, cone_constants(fam, a, b), 97).passed

    @given(st.floats(0.5, 2.0), st.floats(0.05, 0.95), st.floats(0.05, 0.45), st.floats(0.1, 0.9))
    def test_thermostat_nonnegative_bounds_hold(self, beta, eta, a, frac):
        if beta + eta < 1:
            return
        fam = Thermostat(beta, eta, Mode.NON_NEGATIVE)
        b = a + frac * (0.95 - a)
        assert validate_bounds(fam, cone_constants(fam, a, b), 97).passed

    @given(st.floats(0.05, 0.45), st.floats(0.5, 0.95))
    def test_gamma_lower_bound(self, a, b):
        for fam in (Thermostat(0.7, 0.4), DirichletNonlocal()):
            t = np.linspace(a, b, 51)
            gnorm = np.max(fam.gamma(np.linspace(0, 1, 1001)))
            assert np.all(fam.gamma(t) >= a * gnorm - 1e-15)


class TestGreens:
    def test_dirichlet_constant_load(self):
        res = greens_residual(DirichletNonlocal(), PiecewiseLinear.constant(1.0), 1025)
        assert res.interior < 1e-4
        assert np.allclose(res.u, res.nodes * (1 - res.nodes) / 2, atol=1e-13)

    def test_thermostat_zero_load(self):
        res = greens_residual(Thermostat(0.25, 0.25), lambda s: 0.0 * np.asarray(s), 257)
        assert res.interior == 0.0 and all(v == 0.0 for v in res.bc.values())

    def test_thermostat_linear_load_bc(self):
        res = greens_residual(Thermostat(0.25, 0.25), lambda s: np.asarray(s, dtype=float), 257)
        assert max(abs(v) for v in res.bc.values()) < 1e-8

    def test_thermostat_u_against_quad(self):
        fam = Thermostat(0.3, 0.4)
        y = lambda s: np.cos(3 * s)  # noqa: E731
        res = greens_residual(fam, y, 33)
        for i in (5, 17, 30):
            t = res.nodes[i]
            ref = quad(lambda s: fam.k(t, s) * y(s), 0, 1, points=[t, 0.4])[0]
            assert res.u[i] == pytest.approx(ref, abs=1e-12)

    @pytest.mark.parametrize("fam", [Thermostat(0.25, 0.25), DirichletNonlocal()], ids=["thermostat", "dirichlet"])
    def test_second_order_convergence(self, fam):
        y = lambda s: np.cos(3 * np.asarray(s, dtype=float))  # noqa: E731
        coarse = greens_residual(fam, y, 513).interior
        fine = greens_residual(fam, y, 1025).interior
        assert np.log2(coarse / fine) >= 1.9

    def test_random_loads_small_grid(self, rng):
        for _ in range(3):
            y = gentle_piecewise_linear(rng)
            for fam in (Thermostat(0.25, 0.25), DirichletNonlocal()):
                res = greens_residual(fam, y, 257)
                assert res.interior < 4e-3
                assert max(abs(v) for v in res.bc.values()) < 1e-8
