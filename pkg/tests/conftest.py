from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fbvpcert.envelope import DelayForm
from fbvpcert.kernel import DirichletNonlocal, Mode, Thermostat
from fbvpcert.measure import GridFunction, PiecewiseLinear, SignedMeasure
from fbvpcert.problem import InitialDatum, build_instance
from fbvpcert.solver import check_cone_membership, problem_grid

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

settings.register_profile(
    "repo",
    max_examples=30,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def gentle_piecewise_linear(rng, max_slope=1.5, pieces=(2, 7)):
    """Random continuous piecewise-linear function on [0, 1] with bounded slopes."""
    m = int(rng.integers(*pieces))
    inner = np.sort(rng.uniform(0.02, 0.98, m - 1))
    bp = np.concatenate([[0.0], inner, [1.0]])
    slopes = rng.uniform(-max_slope, max_slope, m)
    vals = rng.uniform(-1, 1) + np.concatenate([[0.0], np.cumsum(slopes * np.diff(bp))])
    return PiecewiseLinear(tuple(bp), tuple(vals))


def invariance_instances():
    """Two families in each mode, all satisfying the standing hypotheses."""
    F = DelayForm(lambda t, u, v: (1 + t) * np.abs(u) + v * v, 0.1)
    psi = InitialDatum.bump(0.3, 0.1)
    cases = {
        "thermostat-signed": (Thermostat(0.25, 0.25), 0.2, 0.45, SignedMeasure(((0.3, 0.5),))),
        "dirichlet-signed": (DirichletNonlocal(Mode.SIGN_CHANGING), 0.25, 0.75,
                             SignedMeasure(((0.5, 0.4),), PiecewiseLinear.constant(0.2))),
        "thermostat-positive": (Thermostat(1, 0.5, Mode.NON_NEGATIVE), 0.25, 0.75,
                                SignedMeasure(((0.5, 0.2),), PiecewiseLinear.constant(0.1))),
        "dirichlet-positive": (DirichletNonlocal(Mode.NON_NEGATIVE), 0.25, 0.75,
                               SignedMeasure(((0.6, 0.3),))),
    }
    return {name: build_instance(fam, a, b, F, psi=psi, alpha=al, name=name)
            for name, (fam, a, b, al) in cases.items()}


def random_cone_element(P, nodes, rng, radius=2.0, tries=1000):
    """``psi + v`` with ``v`` in the cone and ``||v|| <= radius`` (rejection sampling)."""
    psi = np.asarray(P.psi(nodes), dtype=float)
    gam = np.asarray(P.kernel.gamma(nodes), dtype=float)
    gam = gam / np.max(np.abs(gam))
    s = np.clip(nodes, 0.0, None)
    for _ in range(tries):
        k = np.arange(1, 6)
        coef = rng.normal(0, 1, k.size) / k**2
        wiggle = np.sin(np.pi * np.outer(s, k)) @ coef
        v = gam + rng.uniform(0.05, 0.6) * wiggle
        v *= rng.uniform(0.01, 1.0) * radius / np.max(np.abs(v))
        v[nodes <= 0.0] = 0.0
        u = GridFunction(nodes, psi + v)
        if check_cone_membership(P, u, slack=0.0).inside:
            return u
    raise RuntimeError("could not sample a cone element")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
