"""Signed Stieltjes measures on [0, 1] and piecewise-linear carriers.

A :class:`SignedMeasure` is a finite sum of point masses plus a
piecewise-linear density, which covers both multi-point functionals
``sum_j a_j u(eta_j)`` and integral functionals ``int phi(s) u(s) ds``
while keeping the total variation exactly computable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import quadrature

APPLY_TOL = 1e-10


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function, zero outside its breakpoints."""

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.shape != vals.shape or bp.size < 1:
            raise ValueError("breakpoints and values must be 1-d and of equal length")
        if bp.size > 1 and np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", tuple(bp.tolist()))
        object.__setattr__(self, "values", tuple(vals.tolist()))

    @classmethod
    def constant(cls, value, lo=0.0, hi=1.0):
        return cls((lo, hi), (value, value))

    @property
    def support(self):
        return self.breakpoints[0], self.breakpoints[-1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        bp = np.asarray(self.breakpoints)
        out = np.interp(x, bp, np.asarray(self.values))
        return np.where((x < bp[0]) | (x > bp[-1]), 0.0, out)

    def abs_integral(self):
        """Exact integral of |f|, splitting segments at sign changes."""
        bp = np.asarray(self.breakpoints)
        v = np.asarray(self.values)
        total = 0.0
        for x0, x1, y0, y1 in zip(bp[:-1], bp[1:], v[:-1], v[1:]):
            h = x1 - x0
            if y0 * y1 >= 0:
                total += 0.5 * h * (abs(y0) + abs(y1))
            else:
                # triangles on either side of the root
                total += 0.5 * h * (y0 * y0 + y1 * y1) / (abs(y0) + abs(y1))
        return total

    def integral(self):
        bp = np.asarray(self.breakpoints)
        v = np.asarray(self.values)
        return float(np.sum(0.5 * np.diff(bp) * (v[:-1] + v[1:])))

    def min_value(self):
        return min(self.values)


@dataclass(frozen=True)
class SignedMeasure:
    """Atoms ``(location, weight)`` plus an optional piecewise-linear density."""

    atoms: tuple = ()
    density: PiecewiseLinear | None = None

    def __post_init__(self):
        atoms = tuple((float(loc), float(w)) for loc, w in self.atoms)
        for loc, _ in atoms:
            if not 0.0 <= loc <= 1.0:
                raise ValueError(f"atom location {loc} outside [0, 1]")
        if self.density is not None:
            lo, hi = self.density.support
            if lo < 0.0 or hi > 1.0:
                raise ValueError("density breakpoints must lie in [0, 1]")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def zero(cls):
        return cls()

    @property
    def is_zero(self):
        return all(w == 0.0 for _, w in self.atoms) and (
            self.density is None or not any(self.density.values)
        )

    @property
    def atom_locations(self):
        return [loc for loc, _ in self.atoms]

    def breakpoints(self):
        pts = list(self.atom_locations)
        if self.density is not None:
            pts.extend(self.density.breakpoints)
        return sorted(set(pts))

    def total_variation(self):
        return total_variation(self)

    def apply(self, u, breakpoints=()):
        return apply(self, u, breakpoints)


def total_variation(A: SignedMeasure) -> float:
    tv = sum(abs(w) for _, w in A.atoms)
    if A.density is not None:
        tv += A.density.abs_integral()
    return float(tv)


def apply(A: SignedMeasure, u: Callable, breakpoints=()) -> float:
    """``alpha[u] = sum_j w_j u(eta_j) + int phi(s) u(s) ds``.

    ``breakpoints`` lists kinks of ``u`` so the density part can be split
    there (grid nodes for a piecewise-linear ``u``).
    """
    total = 0.0
    if A.atoms:
        locs = np.array([loc for loc, _ in A.atoms])
        ws = np.array([w for _, w in A.atoms])
        total += float(np.dot(ws, np.asarray(u(locs), dtype=float)))
    if A.density is not None:
        lo, hi = A.density.support
        dens = A.density
        pts = list(dens.breakpoints) + list(np.asarray(breakpoints, dtype=float).ravel())
        total += quadrature.integrate(
            lambda s: dens(s) * np.asarray(u(s), dtype=float), lo, hi, pts, tol=APPLY_TOL
        )
    return total


def _kernel_callables(kernel):
    """(k, t-kinks) from a kernel family or a bare ``k(t, s)`` callable."""
    if hasattr(kernel, "k") and hasattr(kernel, "t_kinks"):
        return kernel.k, kernel.t_kinks
    return kernel, lambda s: [s]


def kernel_moment(A: SignedMeasure, kernel) -> Callable:
    """Return ``s -> int_0^1 k(t, s) dA(t)`` (vectorized in ``s``).

    Atoms are summed exactly. The density part uses 16-point Gauss-Legendre
    on every density segment, further split at the kernel's kinks in ``t``
    (always ``t = s``), which is exact for kernels that are polynomial of
    moderate degree between kinks.
    """
    k, t_kinks = _kernel_callables(kernel)
    atoms = A.atoms
    dens = A.density
    x, w = quadrature.gauss_legendre(quadrature.DEFAULT_ORDER)

    def moment(s):
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        out = np.zeros_like(flat)
        for loc, weight in atoms:
            out += weight * k(loc, flat)
        if dens is not None:
            bp = np.asarray(dens.breakpoints)
            for j, sj in enumerate(flat):
                kinks = [z for z in t_kinks(sj)]
                edges = quadrature.merge_breaks(bp[0], bp[-1], list(bp) + kinks)
                lo, hi = edges[:-1, None], edges[1:, None]
                half = 0.5 * (hi - lo)
                tt = lo + half * (x + 1.0)
                out[j] += float(np.sum(dens(tt) * k(tt, sj) * half * w))
        return out.reshape(s.shape) if s.ndim else float(out[0])

    return moment


class PositivityResult(NamedTuple):
    ok: bool
    worst_s: float
    worst_value: float


def check_positivity(KA: Callable, samples: int = 4097, tol: float = 1e-12) -> PositivityResult:
    """Sampled check of ``KA(s) >= -tol`` on [0, 1].

    The minimizing sample is refined by a bounded scalar search on its two
    neighbouring cells, as is every cell where the sampled sign flips.
    Violations on sets smaller than the sample spacing can still be missed.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    s = np.linspace(0.0, 1.0, samples)
    vals = np.asarray(KA(s), dtype=float)
    i = int(np.argmin(vals))
    best_s, best_v = float(s[i]), float(vals[i])
    cells = {max(i - 1, 0)}
    flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    cells.update(int(j) for j in flips[:32])
    for j in sorted(cells):
        lo, hi = s[j], s[min(j + 2, samples - 1)]
        if hi <= lo:
            continue
        res = minimize_scalar(lambda z: float(KA(z)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        if res.fun < best_v:
            best_s, best_v = float(res.x), float(res.fun)
    return PositivityResult(best_v >= -tol, best_s, best_v)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a continuous function on ``[-r, 1]``; linear in between."""

    nodes: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape:
            raise ValueError("nodes and values must be 1-d arrays of equal length")
        if nodes.size < 3:
            raise ValueError("a grid function needs at least 3 nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, r, n, fun=None):
        nodes = np.linspace(-r, 1.0, n)
        vals = np.zeros(n) if fun is None else np.asarray(fun(nodes), dtype=float)
        return cls(nodes, vals)

    @classmethod
    def sample(cls, nodes, fun):
        nodes = np.asarray(nodes, dtype=float)
        return cls(nodes, np.asarray(fun(nodes), dtype=float) + np.zeros_like(nodes))

    @property
    def left(self):
        return float(self.nodes[0])

    @property
    def right(self):
        return float(self.nodes[-1])

    def __call__(self, t):
        return np.interp(t, self.nodes, self.values)

    def with_values(self, values):
        return GridFunction(self.nodes, values)

    def norm(self, lo=None, hi=None):
        """Sup norm over the nodes in ``[lo, hi]`` (exact for the interpolant)."""
        mask = np.ones(self.nodes.size, dtype=bool)
        if lo is not None:
            mask &= self.nodes >= lo
        if hi is not None:
            mask &= self.nodes <= hi
        vals = list(np.abs(self.values[mask]))
        for end in (lo, hi):
            if end is not None and self.left <= end <= self.right:
                vals.append(abs(float(self(end))))
        return float(max(vals)) if vals else 0.0

    def min_on(self, lo, hi):
        mask = (self.nodes >= lo) & (self.nodes <= hi)
        vals = list(self.values[mask]) + [float(self(lo)), float(self(hi))]
        return float(min(vals))
