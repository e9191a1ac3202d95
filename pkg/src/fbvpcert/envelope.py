"""The nonlinearity ``F(t, phi)`` and its growth numbers.

For a delay equation ``F(t, phi) = f(t, phi(0), phi(-r))`` the sup/inf over
history segments reduce to sup/inf of ``f`` over boxes in ``(t, u, v)``,
which is what the grid scans below estimate. Those estimates are not
rigorous enclosures; the ``safety`` factors let callers inflate the sup
(``>= 1``) or deflate the inf (``<= 1``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import CInvalid, NegativeValue, RhoNonpositive
from .measure import GridFunction

GRID = 65
REFINE = 4


def _vectorize(f):
    """Call ``f`` on arrays, falling back to elementwise evaluation."""

    def g(t, u, v):
        t, u, v = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (t, u, v)))
        try:
            out = np.asarray(f(t, u, v), dtype=float)
            if out.shape == t.shape:
                return out
            return np.broadcast_to(out, t.shape).copy()
        except (TypeError, ValueError):
            return np.vectorize(lambda a, b, c: float(f(a, b, c)))(t, u, v)

    return g


@dataclass(frozen=True)
class DelayForm:
    """``F(t, phi) = f(t, phi(0), phi(-r))`` with ``f >= 0``."""

    f: Callable
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"delay r must be positive, got {self.r}")
        object.__setattr__(self, "_fv", _vectorize(self.f))

    def values(self, t, u, v):
        return self._fv(t, u, v)


@dataclass(frozen=True)
class EnvelopeForm:
    """User-certified growth numbers plus an optional pointwise evaluator.

    ``sup_env(rho, lower)`` and ``inf_env(rho, c, a, b)`` return the growth
    numbers directly; ``evaluator(t, segment)`` is needed only for solving.
    """

    sup_env: Callable
    inf_env: Callable
    r: float
    evaluator: Callable | None = None

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"delay r must be positive, got {self.r}")

    @classmethod
    def from_table(cls, rhos: Sequence[float], sups, infs, r, evaluator=None):
        """Tabulated ``(rho, sup, inf)`` rows, interpolated linearly in ``log rho``.

        Outside the tabulated range there is no certified value, so lookups
        raise ``ValueError``.
        """
        rhos = np.asarray(rhos, dtype=float)
        order = np.argsort(rhos)
        logr = np.log(rhos[order])
        sups = np.asarray(sups, dtype=float)[order]
        infs = np.asarray(infs, dtype=float)[order]

        def lookup(table, rho):
            x = np.log(rho)
            if x < logr[0] - 1e-12 or x > logr[-1] + 1e-12:
                raise ValueError(f"rho={rho} outside tabulated range [{rhos.min()}, {rhos.max()}]")
            return float(np.interp(x, logr, table))

        return cls(
            sup_env=lambda rho, lower=None: lookup(sups, rho),
            inf_env=lambda rho, c=None, a=None, b=None: lookup(infs, rho),
            r=r,
            evaluator=evaluator,
        )


Nonlinearity = DelayForm | EnvelopeForm


@dataclass(frozen=True)
class HistorySegment:
    """``u_t(theta) = u(t + theta)`` for ``theta`` in ``[-r, 0]``."""

    u: GridFunction
    t: float
    r: float

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.u(self.t + theta)

    @property
    def domain(self):
        return (-self.r, 0.0)

    def norm(self):
        return self.u.norm(self.t - self.r, self.t)


def sup_number(F, rho, lower=None, t_grid=GRID, uv_grid=GRID, safety=1.0):
    """``sup { F(t, phi) / rho : t in [0,1], lower <= phi <= rho }``.

    ``lower`` is ``-rho`` (default, sign-changing histories) or ``0``
    (non-negative histories).
    """
    if not rho > 0:
        raise RhoNonpositive(f"rho must be positive, got {rho}")
    lower = -rho if lower is None else lower
    if isinstance(F, EnvelopeForm):
        return float(F.sup_env(rho, lower))
    val = _grid_extreme(F, rho, (0.0, lower, lower), (1.0, rho, rho), t_grid, uv_grid, "max")
    return safety * val


def _grid_extreme(F, rho, lows, highs, t_grid, uv_grid, which):
    """Grid extreme of ``F / rho`` over a box, refined once around the optimizer."""
    axes = [
        np.linspace(lows[0], highs[0], t_grid),
        np.linspace(lows[1], highs[1], uv_grid),
        np.linspace(lows[2], highs[2], uv_grid),
    ]
    fun = lambda t, u, v: F.values(t, u, v) / rho  # noqa: E731
    vals = fun(*np.meshgrid(*axes, indexing="ij"))
    pick = np.argmax if which == "max" else np.argmin
    idx = np.unravel_index(pick(vals), vals.shape)
    best = float(vals[idx])
    fine = []
    for ax, i, lo, hi in zip(axes, idx, lows, highs):
        h = ax[1] - ax[0] if ax.size > 1 else 0.0
        fine.append(np.clip(np.linspace(ax[i] - h, ax[i] + h, 2 * REFINE + 1), lo, hi))
    local = fun(*np.meshgrid(*fine, indexing="ij"))
    cand = float(local.max() if which == "max" else local.min())
    return max(best, cand) if which == "max" else min(best, cand)


def inf_number(F, rho, c, a, b, t_grid=GRID, uv_grid=GRID, safety=1.0):
    """``inf { F(t, phi) / rho : t in [a,b], rho <= phi <= rho/c }``.

    The same value serves the non-negative-history variant, since the box
    already lies in ``[0, inf)``.
    """
    if not rho > 0:
        raise RhoNonpositive(f"rho must be positive, got {rho}")
    if not 0 < c <= 1:
        raise CInvalid(f"c must lie in (0, 1], got {c}")
    if isinstance(F, EnvelopeForm):
        return float(F.inf_env(rho, c, a, b))
    top = rho / float(c)
    val = _grid_extreme(F, rho, (float(a), rho, rho), (float(b), top, top), t_grid, uv_grid, "min")
    return safety * val


def evaluate(F, t, seg: HistorySegment):
    """``F(t, u_t)``; raises :class:`NegativeValue` on a negative result."""
    if isinstance(F, EnvelopeForm):
        if F.evaluator is None:
            raise TypeError("this envelope nonlinearity has no pointwise evaluator")
        val = float(F.evaluator(t, seg))
    else:
        val = float(F.values(t, seg(0.0), seg(-seg.r)))
    if val < 0:
        raise NegativeValue(f"F({t}, .) = {val} < 0")
    return val
