"""The assembled integral equation

    u(t) = psi(t) + int_0^1 k(t,s) g(s) F(s, u_s) ds + gamma(t) alpha[u],  t in [-r, 1].
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import quadrature
from .envelope import DelayForm, EnvelopeForm
from .kernel import ConeData, KernelFamily, Mode, Thermostat, cone_constants
from .measure import PiecewiseLinear, SignedMeasure, kernel_moment


@dataclass(frozen=True, eq=False)
class InitialDatum:
    """The history ``psi`` on ``[-r, 0]``; extended by zero on ``(0, 1]``."""

    fun: Callable
    r: float
    norm: float
    label: str = "custom"
    breakpoints: tuple = ()

    @classmethod
    def zero(cls, r):
        return cls(lambda t: np.zeros_like(np.asarray(t, dtype=float)), r, 0.0, "zero")

    @classmethod
    def bump(cls, h, r):
        """``h sin(pi t / r)^2`` on ``[-r, 0]``; vanishes at both ends."""

        def fun(t):
            return h * np.sin(np.pi * np.asarray(t, dtype=float) / r) ** 2

        return cls(fun, r, abs(float(h)), f"bump({h})")

    @classmethod
    def from_samples(cls, ts, values, r):
        ts = np.asarray(ts, dtype=float)
        values = np.asarray(values, dtype=float)
        if ts[0] > -r + 1e-12 or ts[-1] < -1e-12:
            raise ValueError("psi samples must cover [-r, 0]")
        return cls(
            lambda t: np.interp(t, ts, values), r, float(np.max(np.abs(values))), "samples",
            tuple(ts.tolist()),
        )

    def __call__(self, t):
        """The extension: ``psi`` on ``[-r, 0]``, zero on ``(0, 1]``."""
        t = np.asarray(t, dtype=float)
        out = np.where(t <= 0.0, self.fun(np.clip(t, -self.r, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def at_zero(self):
        return float(self.fun(np.array([0.0]))[0])


@dataclass(eq=False)
class ProblemInstance:
    kernel: KernelFamily
    cone: ConeData
    F: DelayForm | EnvelopeForm
    psi: InitialDatum
    g: Callable = field(default_factory=lambda: PiecewiseLinear.constant(1.0))
    alpha: SignedMeasure = field(default_factory=SignedMeasure.zero)
    mode: Mode | None = None
    name: str = ""

    def __post_init__(self):
        if self.mode is None:
            self.mode = self.kernel.mode
        self.mode = Mode(self.mode)
        if abs(self.psi.r - self.F.r) > 1e-15:
            raise ValueError(f"psi is defined on [-{self.psi.r}, 0] but the delay is {self.F.r}")

    @property
    def r(self):
        return float(self.F.r)

    @property
    def a(self):
        return float(self.cone.a)

    @property
    def b(self):
        return float(self.cone.b)

    @property
    def c(self):
        return float(self.cone.c)

    @property
    def psi_norm(self):
        return float(self.psi.norm)

    def g_breakpoints(self):
        return list(getattr(self.g, "breakpoints", ()))

    @functools.cached_property
    def alpha_gamma(self):
        fam = self.kernel
        return self.alpha.apply(fam.gamma, breakpoints=[0.0])

    @functools.cached_property
    def KA(self):
        return kernel_moment(self.alpha, self.kernel)

    def moment_breakpoints(self):
        pts = list(self.alpha.breakpoints()) + self.g_breakpoints()
        for loc in self.alpha.atom_locations:
            pts.extend(self.kernel.s_kinks(loc))
        if isinstance(self.kernel, Thermostat):
            pts.append(float(self.kernel.eta))
        return pts

    def KA_integral(self, lo=0.0, hi=1.0, tol=1e-12):
        """``int_lo^hi K_A(s) g(s) ds`` (memoized)."""
        if self.alpha.is_zero or hi <= lo:
            return 0.0
        cache = self.__dict__.setdefault("_moment_cache", {})
        key = (lo, hi, tol)
        if key not in cache:
            KA, g = self.KA, self.g
            cache[key] = quadrature.integrate(
                lambda s: KA(s) * g(s), lo, hi, self.moment_breakpoints(), tol=tol
            )
        return cache[key]


def build_instance(kernel, a, b, F, psi=None, g=None, alpha=None, name=""):
    """Assemble a problem, computing the cone constants from the kernel family."""
    cone = cone_constants(kernel, a, b)
    if psi is None:
        psi = InitialDatum.zero(F.r)
    return ProblemInstance(
        kernel=kernel,
        cone=cone,
        F=F,
        psi=psi,
        g=PiecewiseLinear.constant(1.0) if g is None else g,
        alpha=SignedMeasure.zero() if alpha is None else alpha,
        name=name,
    )


def power_delay(lam, p, r):
    """``f(t, u, v) = lam |u|^(p-1) |v|``."""

    def f(t, u, v):
        return lam * np.abs(u) ** (p - 1) * np.abs(v)

    return DelayForm(f, r)


def corollary_instance(lam=0.5, p=2, r=0.15, psi=None):
    """Thermostat with beta = eta = 1/4 on [1/4, 7/16], g = 1, alpha = 0."""
    fam = Thermostat(0.25, 0.25)
    psi = InitialDatum.bump(0.5, r) if psi is None else psi
    return build_instance(fam, 0.25, 7 / 16, power_delay(lam, p, r), psi=psi,
                          name=f"thermostat-corollary(lam={lam}, p={p}, r={r})")
