"""Green's kernels, gamma functions, envelopes and cone constants.

Two built-in boundary value problems are provided:

* :class:`Thermostat` -- ``-u'' = y`` with ``u(0) = 0`` and
  ``beta u'(1) + u(eta) = alpha[u]``;
* :class:`DirichletNonlocal` -- ``u'' + y = 0`` with ``u(0) = 0`` and
  ``u(1) = alpha[u]``.

A :class:`CustomKernel` wraps user-supplied ``k``, ``gamma``, ``Phi`` and
cone constants; those are checked by :func:`validate_bounds`, never derived.

All kernels follow the extension convention ``k(t, s) = 0`` and
``gamma(t) = 0`` for ``t <= 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import quadrature
from .errors import IntervalInvalid, ModeUnsupported


class Mode(str, enum.Enum):
    SIGN_CHANGING = "sign_changing"
    NON_NEGATIVE = "non_negative"


def heaviside(tau):
    """Unit step with ``H(0) = 1``."""
    out = np.where(np.asarray(tau) >= 0, 1.0, 0.0)
    return float(out) if out.ndim == 0 else out


H = heaviside


class KernelFamily:
    """Interface shared by the kernel families.

    Subclasses provide ``k``, ``terms``, ``gamma``, ``phi``, ``c1``,
    ``s_kinks`` and ``check_interval``; ``dk_dt`` and ``bc_residuals`` are
    only needed by :func:`greens_residual`.
    """

    mode: Mode = Mode.SIGN_CHANGING
    name = "kernel"

    def k(self, t, s):
        raise NotImplementedError

    def terms(self, t, s):
        """Additive pieces of ``k`` as written in closed form."""
        return [self.k(t, s)]

    def gamma(self, t):
        raise NotImplementedError

    def phi(self, s):
        raise NotImplementedError

    def c1(self, a, b):
        raise NotImplementedError

    def c2(self, a, b):
        return a

    def check_interval(self, a, b):
        if not 0 < a < b:
            raise IntervalInvalid(f"need 0 < a < b, got a={a}, b={b}")
        if b > 1:
            raise IntervalInvalid(f"need b <= 1, got b={b}")

    def s_kinks(self, t):
        """Locations in ``s`` where ``k(t, .)`` is not smooth."""
        return [t]

    def t_kinks(self, s):
        """Locations in ``t`` where ``k(., s)`` is not smooth."""
        return [s]

    def gamma_norm(self):
        ts = np.linspace(0.0, 1.0, 4097)
        return float(np.max(np.abs(self.gamma(ts))))


@dataclass(frozen=True)
class Thermostat(KernelFamily):
    """Heated bar with a nonlocal controller at ``eta``.

    For ``0 < beta + eta < 1`` the kernel changes sign, but it is
    non-negative for ``0 <= t <= b < beta + eta``.
    """

    beta: float
    eta: float
    mode: Mode = Mode.SIGN_CHANGING

    name = "thermostat"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def total(self):
        return self.beta + self.eta

    def terms(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        be = float(self.total)
        ht = H(t)
        return [
            float(self.beta) * t / be * ht,
            t / be * (float(self.eta) - s) * H(float(self.eta) - s) * ht,
            -(t - s) * H(t - s) * ht,
        ]

    def k(self, t, s):
        a, b, c = self.terms(t, s)
        return a + b + c

    def dk_dt(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        be = float(self.total)
        eta = float(self.eta)
        return (float(self.beta) / be + (eta - s) * H(eta - s) / be - H(t - s)) * H(t)

    def gamma(self, t):
        t = np.asarray(t, dtype=float)
        return t / float(self.total) * H(t)

    def gamma_norm(self):
        return 1.0 / float(self.total)

    def s_kinks(self, t):
        return [t, float(self.eta)]

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        be = float(self.total)
        if self.mode is Mode.NON_NEGATIVE:
            self._require_non_negative()
            return np.where(s >= float(self.eta), float(self.beta) / be * s, s * (1.0 - s / be))
        if be >= 0.5:
            return s * 1.0
        return (1.0 - be) / be * s

    def _require_non_negative(self):
        if self.total < 1:
            raise ModeUnsupported(
                f"non-negative thermostat needs beta + eta >= 1, got {float(self.total)}"
            )

    def check_interval(self, a, b):
        super().check_interval(a, b)
        if self.mode is Mode.NON_NEGATIVE:
            self._require_non_negative()
            if not b < 1:
                raise IntervalInvalid(f"need b < 1 for the non-negative thermostat, got b={b}")
        elif not b < self.total:
            raise IntervalInvalid(f"need b < beta + eta = {self.total}, got b={b}")

    def c1(self, a, b):
        be = self.total
        if self.mode is Mode.NON_NEGATIVE:
            return min(a, 1 - b / be)
        denom = be if be >= 0.5 else 1 - be
        return min(a * self.beta / denom, (be - b) / denom)

    def bc_residuals(self, y, y_breakpoints=()):
        eta = float(self.eta)
        u0 = _apply_kernel(self.k, self, 0.0, y, y_breakpoints)
        du1 = _apply_kernel(self.dk_dt, self, 1.0, y, y_breakpoints)
        ueta = _apply_kernel(self.k, self, eta, y, y_breakpoints)
        return {"u(0)": abs(u0), "beta*u'(1)+u(eta)": abs(float(self.beta) * du1 + ueta)}


@dataclass(frozen=True)
class DirichletNonlocal(KernelFamily):
    """``u'' + y = 0``, ``u(0) = 0``, ``u(1) = alpha[u]``; kernel is non-negative."""

    mode: Mode = Mode.NON_NEGATIVE

    name = "dirichlet"

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))

    def terms(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        ht = H(t)
        return [t * (1.0 - s) * ht, -(t - s) * H(t - s) * ht]

    def k(self, t, s):
        a, b = self.terms(t, s)
        return a + b

    def dk_dt(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return ((1.0 - s) - H(t - s)) * H(t)

    def gamma(self, t):
        t = np.asarray(t, dtype=float)
        return t * H(t)

    def gamma_norm(self):
        return 1.0

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        return s * (1.0 - s)

    def check_interval(self, a, b):
        super().check_interval(a, b)
        if not b < 1:
            raise IntervalInvalid(f"need b < 1 for the Dirichlet kernel, got b={b}")

    def c1(self, a, b):
        return min(a, 1 - b)

    def bc_residuals(self, y, y_breakpoints=()):
        return {
            "u(0)": abs(_apply_kernel(self.k, self, 0.0, y, y_breakpoints)),
            "u(1)": abs(_apply_kernel(self.k, self, 1.0, y, y_breakpoints)),
        }


@dataclass(frozen=True)
class CustomKernel(KernelFamily):
    """User-supplied kernel data; ``c1`` and ``c2`` may be numbers or
    callables of ``(a, b)``."""

    k_fun: Callable
    gamma_fun: Callable
    phi_fun: Callable
    c1_value: object
    c2_value: object
    mode: Mode = Mode.SIGN_CHANGING
    kinks: tuple = ()

    name = "custom"

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))

    def k(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return np.asarray(self.k_fun(t, s), dtype=float) * H(t) + 0.0 * s

    def gamma(self, t):
        t = np.asarray(t, dtype=float)
        return np.asarray(self.gamma_fun(t), dtype=float) * H(t) + 0.0 * t

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        return np.asarray(self.phi_fun(s), dtype=float) + 0.0 * s

    def c1(self, a, b):
        return self.c1_value(a, b) if callable(self.c1_value) else self.c1_value

    def c2(self, a, b):
        return self.c2_value(a, b) if callable(self.c2_value) else self.c2_value

    def s_kinks(self, t):
        return [t, *self.kinks]


@dataclass(frozen=True)
class ConeData:
    a: object
    b: object
    c1: object
    c2: object
    c: object
    phi: Callable

    def __post_init__(self):
        if not 0 < self.a < self.b <= 1:
            raise IntervalInvalid(f"need 0 < a < b <= 1, got [{self.a}, {self.b}]")
        for name in ("c1", "c2", "c"):
            val = getattr(self, name)
            if not 0 < val <= 1:
                raise IntervalInvalid(f"{name} = {val} is not in (0, 1]")


def eval_k(fam: KernelFamily, t, s):
    return fam.k(t, s)


def eval_gamma(fam: KernelFamily, t):
    return fam.gamma(t)


def phi_bound(fam: KernelFamily) -> Callable:
    """The envelope ``Phi`` of the family in its mode."""
    if isinstance(fam, Thermostat) and fam.mode is Mode.NON_NEGATIVE:
        fam._require_non_negative()
    return fam.phi


def cone_constants(fam: KernelFamily, a, b) -> ConeData:
    """``c1`` from the family formula, ``c2`` and ``c = min(c1, c2)``.

    Exact rational inputs (``fractions.Fraction``) give exact outputs.
    """
    fam.check_interval(a, b)
    c1 = fam.c1(a, b)
    c2 = fam.c2(a, b)
    return ConeData(a=a, b=b, c1=c1, c2=c2, c=min(c1, c2), phi=phi_bound(fam))


class BoundsReport(NamedTuple):
    passed: bool
    upper_margin: float
    upper_at: tuple
    lower_margin: float
    lower_at: tuple


def validate_bounds(fam: KernelFamily, cone: ConeData, grid: int = 257, tol: float = 1e-12):
    """Grid scan of ``|k| <= Phi`` on [0,1]^2 and ``k >= c1 Phi`` on [a,b] x [0,1].

    In non-negative mode the upper bound is checked on ``k`` itself and
    ``k >= 0`` is folded into the upper margin.
    """
    if grid < 2:
        raise ValueError("grid must be >= 2")
    s = np.linspace(0.0, 1.0, grid)
    t = np.linspace(0.0, 1.0, grid)
    T, S = np.meshgrid(t, s, indexing="ij")
    K = fam.k(T, S)
    Phi = np.broadcast_to(cone.phi(s), K.shape)
    if fam.mode is Mode.NON_NEGATIVE:
        upper = np.minimum(Phi - K, K)
    else:
        upper = Phi - np.abs(K)
    iu = np.unravel_index(np.argmin(upper), upper.shape)

    ta = np.linspace(float(cone.a), float(cone.b), grid)
    Ta, Sa = np.meshgrid(ta, s, indexing="ij")
    lower = fam.k(Ta, Sa) - float(cone.c1) * np.broadcast_to(cone.phi(s), Ta.shape)
    il = np.unravel_index(np.argmin(lower), lower.shape)
    up, lo = float(upper[iu]), float(lower[il])
    return BoundsReport(
        passed=bool(up >= -tol and lo >= -tol),
        upper_margin=up,
        upper_at=(float(T[iu]), float(S[iu])),
        lower_margin=lo,
        lower_at=(float(Ta[il]), float(Sa[il])),
    )


def _apply_kernel(kfun, fam, t, y, y_breakpoints=()):
    pts = list(fam.s_kinks(t)) + list(y_breakpoints)
    return quadrature.integrate(lambda s: kfun(t, s) * y(s), 0.0, 1.0, pts, tol=1e-14)


class GreensResidual(NamedTuple):
    interior: float
    bc: dict
    nodes: np.ndarray
    u: np.ndarray


def greens_residual(fam: KernelFamily, y: Callable, grid: int = 1025, y_breakpoints=()):
    """Check that ``u = int k(., s) y(s) ds`` solves the homogeneous BVP.

    Returns the max interior residual ``|-u'' - y|`` by central differences
    on a uniform grid of ``[0, 1]`` and the boundary-condition residuals,
    where derivatives in the boundary conditions use ``dk/dt`` exactly.
    """
    if not hasattr(fam, "bc_residuals"):
        raise TypeError(f"no boundary conditions known for {fam.name} kernels")
    if y_breakpoints == () and hasattr(y, "breakpoints"):
        y_breakpoints = y.breakpoints
    nodes = np.linspace(0.0, 1.0, grid)
    u = np.array([_apply_kernel(fam.k, fam, t, y, y_breakpoints) for t in nodes])
    h = nodes[1] - nodes[0]
    d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    interior = float(np.max(np.abs(-d2 - y(nodes[1:-1]))))
    return GreensResidual(interior, fam.bc_residuals(y, y_breakpoints), nodes, u)
