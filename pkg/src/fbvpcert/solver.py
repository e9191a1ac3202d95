"""Discretize and solve ``u = psi + int_0^1 k g F(s, u_s) ds + gamma alpha[u]`` on ``[-r, 1]``.

The unknown is a grid function (linear between nodes). The s-integral is
collocated on the nodes themselves (composite trapezoid), with ``0``, ``a``,
``b``, ``eta``, the atoms of the measure and the breakpoints of ``g`` made
into nodes. Because every quadrature point is a node, the kink of
``k(., s_j)`` at ``t = s_j`` sits on the grid; the linear interpolant of
``k(., s_j)`` is then exact and the discrete scheme satisfies
``alpha[u] (1 - alpha[gamma]) = int K_A g F`` to round-off.
"""

from __future__ import annotations

import enum
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from . import quadrature
from .envelope import DelayForm, HistorySegment
from .errors import NegativeValue, NoConvergence
from .kernel import Mode, Thermostat
from .measure import GridFunction
from .problem import ProblemInstance

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2.5e7  # entries of the stored quadrature matrix
SNAP = 0.25  # fraction of h within which a uniform node moves onto a required point


class Strategy(str, enum.Enum):
    PICARD = "picard"
    NEWTON = "newton"
    PICARD_THEN_NEWTON = "picard_then_newton"


@dataclass(frozen=True)
class TrivialExtension:
    label = "trivial"


@dataclass(frozen=True)
class ConeSeed:
    """``psi + level * gamma / ||gamma||``; ``gamma`` lies in the cone."""

    level: float

    @property
    def label(self):
        return f"cone({self.level:.6g})"


@dataclass(frozen=True)
class CustomGuess:
    u: GridFunction
    label = "custom"


@dataclass(frozen=True)
class SolverConfig:
    grid: int = 1025
    omega: float = 1.0
    max_iter: int = 200
    tol: float = 1e-10
    strategy: Strategy = Strategy.PICARD_THEN_NEWTON
    initial: object = field(default_factory=TrivialExtension)
    picard_steps: int = 30

    def __post_init__(self):
        if self.grid < 33:
            raise ValueError(f"grid must have at least 33 nodes, got {self.grid}")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.omega <= 1:
            raise ValueError(f"omega must lie in (0, 1], got {self.omega}")
        object.__setattr__(self, "strategy", Strategy(self.strategy))


# --------------------------------------------------------------------------
# discretization


def make_nodes(r, n, required=()):
    """``n`` uniform nodes on ``[-r, 1]`` with ``required`` points made exact."""
    nodes = np.linspace(-r, 1.0, n)
    h = nodes[1] - nodes[0]
    extra = []
    for p in sorted(set(float(x) for x in required)):
        if not -r < p < 1.0:
            continue
        i = int(np.argmin(np.abs(nodes - p)))
        if abs(nodes[i] - p) <= 1e-14:
            continue
        if abs(nodes[i] - p) < SNAP * h and 0 < i < n - 1:
            nodes[i] = p
        else:
            extra.append(p)
    return np.unique(np.concatenate([nodes, extra]))


def required_nodes(P):
    """Points the grid must contain: kinks of the data and the ends of ``[a, b]``."""
    pts = [0.0, P.a, P.b, *P.alpha.atom_locations, *P.g_breakpoints()]
    if isinstance(P.kernel, Thermostat):
        pts.append(float(P.kernel.eta))
    pts.extend(getattr(P.kernel, "kinks", ()))
    return pts


def problem_grid(P, n):
    """The solver's node set for ``P``: ``n`` uniform nodes plus :func:`required_nodes`."""
    return make_nodes(P.r, n, required_nodes(P))


def interp_matrix(nodes, xs):
    """Sparse ``W`` with ``W @ values = np.interp(xs, nodes, values)``."""
    xs = np.asarray(xs, dtype=float)
    n = nodes.size
    idx = np.clip(np.searchsorted(nodes, xs, side="right") - 1, 0, n - 2)
    lam = (xs - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    lam = np.clip(lam, 0.0, 1.0)
    rows = np.repeat(np.arange(xs.size), 2)
    cols = np.stack([idx, idx + 1], axis=1).ravel()
    vals = np.stack([1.0 - lam, lam], axis=1).ravel()
    return sparse.csr_matrix((vals, (rows, cols)), shape=(xs.size, n))


class Discretization:
    """Everything about ``P`` that does not depend on ``u``, precomputed on one grid."""

    def __init__(self, P: ProblemInstance, n: int = 1025, nodes=None):
        self.P = P
        fam, r = P.kernel, P.r
        if nodes is None:
            nodes = problem_grid(P, n)
        self.nodes = nodes = np.asarray(nodes, dtype=float)
        self.n = nodes.size

        # 0 is always a quadrature point, even on a caller's grid that skips it
        self.s = np.union1d([0.0], nodes[(nodes >= 0.0) & (nodes <= 1.0)])
        h = np.diff(self.s)
        w = np.zeros_like(self.s)
        w[:-1] += h / 2
        w[1:] += h / 2
        self.gw = np.asarray(P.g(self.s), dtype=float) * w

        self.P0 = interp_matrix(nodes, self.s)
        self.Pr = interp_matrix(nodes, self.s - r)
        self.psi = np.asarray(P.psi(nodes), dtype=float)
        self.gamma = np.asarray(fam.gamma(nodes), dtype=float)
        self.arow = self._alpha_row()
        self._Q = self._kernel_block(slice(None)) if self.n * self.s.size <= DENSE_LIMIT else None

    def _kernel_block(self, rows):
        t = self.nodes[rows]
        return self.P.kernel.k(t[:, None], self.s[None, :]) * self.gw[None, :]

    def _row_chunks(self):
        step = max(1, int(DENSE_LIMIT // (4 * self.s.size)))
        for lo in range(0, self.n, step):
            yield slice(lo, min(lo + step, self.n))

    def Q_matvec(self, F):
        if self._Q is not None:
            return self._Q @ F
        return np.concatenate([self._kernel_block(sl) @ F for sl in self._row_chunks()])

    def Q_times(self, D):
        """``Q @ D`` for a sparse ``D`` of shape ``(len(s), n)``, dense result."""
        Dt = D.T.tocsr()
        if self._Q is not None:
            return np.asarray((Dt @ self._Q.T).T)
        return np.vstack([np.asarray((Dt @ self._kernel_block(sl).T).T) for sl in self._row_chunks()])

    def _alpha_row(self):
        """``arow @ u = alpha[interpolant of u]``, exact for the represented measure."""
        A, nodes = self.P.alpha, self.nodes
        row = np.zeros(self.n)
        if A.atoms:
            locs = [loc for loc, _ in A.atoms]
            wts = np.array([w for _, w in A.atoms], dtype=float)
            row += interp_matrix(nodes, locs).T @ wts
        if A.density is not None:
            lo, hi = A.density.support
            lo, hi = max(lo, 0.0), min(hi, 1.0)
            if hi > lo:
                pts = list(nodes[(nodes > lo) & (nodes < hi)]) + list(A.density.breakpoints)
                xs, w = quadrature.composite_rule(quadrature.merge_breaks(lo, hi, pts), 2)
                row += interp_matrix(nodes, xs).T @ (A.density(xs) * w)
        return row

    def wrap(self, values):
        return GridFunction(self.nodes, values)

    # ---- the nonlinearity at the quadrature points

    def nonlinearity(self, u):
        F = self.P.F
        if isinstance(F, DelayForm):
            vals = F.values(self.s, self.P0 @ u, self.Pr @ u)
        else:
            gf = self.wrap(u)
            vals = np.array([float(F.evaluator(s, HistorySegment(gf, s, self.P.r))) for s in self.s])
        if np.any(vals < 0):
            j = int(np.argmin(vals))
            raise NegativeValue(f"F({self.s[j]:.6g}, u_s) = {vals[j]:.3g} < 0")
        return vals

    def apply(self, u):
        """``(F u)`` at the nodes."""
        return self.psi + self.Q_matvec(self.nonlinearity(u)) + self.gamma * (self.arow @ u)

    def residual(self, u):
        return u - self.apply(u)

    def jacobian(self, u):
        """``I - dF/du`` at ``u``."""
        F = self.P.F
        J = np.eye(self.n) - np.outer(self.gamma, self.arow)
        if isinstance(F, DelayForm):
            x0, xr = self.P0 @ u, self.Pr @ u
            base = F.values(self.s, x0, xr)
            h0 = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(x0))
            hr = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(xr))
            fu = (F.values(self.s, x0 + h0, xr) - base) / h0
            fv = (F.values(self.s, x0, xr + hr) - base) / hr
            D = sparse.diags(fu) @ self.P0 + sparse.diags(fv) @ self.Pr
            J -= self.Q_times(D.tocsr())
            return J
        # envelope evaluator: column-wise differences of the integral part
        base = self.Q_matvec(self.nonlinearity(u))
        step = np.sqrt(np.finfo(float).eps) * (1.0 + np.max(np.abs(u)))
        for j in range(self.n):
            e = u.copy()
            e[j] += step
            J[:, j] -= (self.Q_matvec(self.nonlinearity(e)) - base) / step
        return J


# --------------------------------------------------------------------------
# public operations


def apply_operator(P: ProblemInstance, u: GridFunction, disc: Discretization | None = None):
    """``(F u)`` sampled on ``u``'s grid."""
    if disc is None or not np.array_equal(disc.nodes, u.nodes):
        disc = Discretization(P, nodes=u.nodes)
    return u.with_values(disc.apply(u.values))


class Membership(enum.Enum):
    IN_K_PSI = "InKpsi"
    IN_POSITIVE_CONE = "InPositiveCone"
    OUTSIDE = "Outside"


@dataclass
class ConeVerdict:
    kind: Membership
    margins: dict
    slack: float

    @property
    def inside(self):
        return self.kind is not Membership.OUTSIDE

    def to_dict(self):
        return {"verdict": self.kind.value, "slack": self.slack,
                "margins": {k: float(v) for k, v in self.margins.items()}}


def _alpha_of(P, u: GridFunction):
    nodes = u.nodes
    if P.alpha.is_zero:
        return 0.0
    return P.alpha.apply(u, breakpoints=list(nodes[(nodes > 0) & (nodes < 1)]))


def check_cone_membership(P: ProblemInstance, u: GridFunction, slack=1e-9) -> ConeVerdict:
    """Is ``u - psi`` in ``K_0`` (and in ``P`` for the non-negative mode)?"""
    v = u.with_values(u.values - np.asarray(P.psi(u.nodes), dtype=float))
    hist = v.values[v.nodes <= 0.0]
    norm = v.norm()
    margins = {
        "history": -float(np.max(np.abs(hist))) if hist.size else 0.0,
        "min": v.min_on(P.a, P.b) - P.c * norm,
        "alpha": float(_alpha_of(P, v)),
    }
    ok = margins["history"] == 0.0 and margins["min"] >= -slack and margins["alpha"] >= -slack
    positive = P.mode is Mode.NON_NEGATIVE
    if positive:
        margins["nonneg"] = float(np.min(v.values))
        ok = ok and margins["nonneg"] >= -slack
    if not ok:
        kind = Membership.OUTSIDE
    else:
        kind = Membership.IN_POSITIVE_CONE if positive else Membership.IN_K_PSI
    return ConeVerdict(kind, margins, slack)


def alpha_consistency(P: ProblemInstance, u: GridFunction, disc: Discretization | None = None):
    """``|alpha[u](1 - alpha[gamma]) - int_0^1 K_A g F(s, u_s) ds|``; zero at a true fixed point."""
    if P.alpha.is_zero:
        return 0.0
    if disc is None or not np.array_equal(disc.nodes, u.nodes):
        disc = Discretization(P, nodes=u.nodes)
    lhs = _alpha_of(P, u) * (1.0 - P.alpha_gamma)
    rhs = float(np.sum(P.KA(disc.s) * disc.gw * disc.nonlinearity(u.values)))
    return abs(lhs - rhs)


@dataclass
class SolutionReport:
    u: GridFunction
    residual: float
    iterations: int
    cone: ConeVerdict
    norm_split: tuple
    is_trivial: bool
    converged: bool
    seed: str = ""
    strategy: str = ""
    alpha_gap: float = 0.0
    history: list = field(default_factory=list, repr=False)

    @property
    def norm(self):
        return max(self.norm_split)

    def annulus(self, rhos):
        """Consecutive ladder radii bracketing ``||v||_[0,1]`` (``None`` for open ends)."""
        v = self.norm_split[1]
        below = [x for x in sorted(rhos) if x <= v]
        above = [x for x in sorted(rhos) if x > v]
        return (below[-1] if below else None, above[0] if above else None)

    def to_dict(self):
        return {
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "trivial": self.is_trivial,
            "seed": self.seed,
            "strategy": self.strategy,
            "cone": self.cone.to_dict(),
            "norm_psi": self.norm_split[0],
            "norm_v": self.norm_split[1],
            "norm": self.norm,
            "alpha_consistency": self.alpha_gap,
            "grid": int(self.u.nodes.size),
        }

    def to_csv(self):
        buf = io.StringIO()
        buf.write(
            f"# residual={self.residual:.6e} cone={self.cone.kind.value} "
            f"norm_psi={self.norm_split[0]:.12g} norm_v={self.norm_split[1]:.12g}\n"
        )
        buf.write("t,u\n")
        for t, x in zip(self.u.nodes, self.u.values):
            buf.write(f"{t:.17g},{x:.17g}\n")
        return buf.getvalue()


def initial_values(disc: Discretization, guess):
    if isinstance(guess, TrivialExtension):
        return disc.psi.copy()
    if isinstance(guess, ConeSeed):
        gnorm = np.max(np.abs(disc.gamma))
        return disc.psi + guess.level * disc.gamma / gnorm
    if isinstance(guess, CustomGuess):
        return np.asarray(guess.u(disc.nodes), dtype=float)
    raise TypeError(f"unknown initial guess {guess!r}")


def _norm(x):
    return float(np.max(np.abs(x)))


def _picard(disc, u, cfg, steps, trace):
    """Relaxed fixed-point iteration; stops early once it clearly diverges."""
    best = math.inf
    it = 0
    for it in range(1, steps + 1):
        Fu = disc.apply(u)
        res = _norm(u - Fu)
        trace.append(("picard", res))
        if not math.isfinite(res) or res > 1e3 * best:
            break
        best = min(best, res)
        if res < cfg.tol:
            return u, it - 1, True
        u = (1.0 - cfg.omega) * u + cfg.omega * Fu
    return u, it, False


def _newton(disc, u, cfg, steps, trace):
    R = disc.residual(u)
    res = _norm(R)
    it = 0
    while it < steps:
        trace.append(("newton", res))
        if res < cfg.tol or not math.isfinite(res):
            break
        it += 1
        try:
            du = np.linalg.solve(disc.jacobian(u), -R)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam >= 1e-4:
            trial = u + lam * du
            try:
                Rt = disc.residual(trial)
            except NegativeValue:
                Rt = np.full_like(R, np.inf)
            rt = _norm(Rt)
            if rt < (1.0 - 1e-4 * lam) * res:
                break
            lam *= 0.5
        else:
            break
        u, R, res = trial, Rt, rt
    return u, it, res < cfg.tol


def solve(P: ProblemInstance, cfg: SolverConfig = SolverConfig(), disc: Discretization | None = None):
    """Fixed point of the discretized operator, or :class:`NoConvergence` carrying the best report."""
    if disc is None:
        disc = Discretization(P, cfg.grid)
    u = initial_values(disc, cfg.initial)
    trace = []
    iters = 0
    done = False
    with np.errstate(over="ignore", invalid="ignore"):
        if cfg.strategy is Strategy.PICARD:
            u, iters, done = _picard(disc, u, cfg, cfg.max_iter, trace)
        elif cfg.strategy is Strategy.NEWTON:
            u, iters, done = _newton(disc, u, cfg, cfg.max_iter, trace)
        else:
            start = u
            u, iters, done = _picard(disc, u, cfg, min(cfg.picard_steps, cfg.max_iter), trace)
            if not done:
                if not _norm(disc.residual(u)) <= _norm(disc.residual(start)):
                    u = start  # Picard diverged; let Newton start from the seed
                u, more, done = _newton(disc, u, cfg, cfg.max_iter - iters, trace)
                iters += more
    report = make_report(P, disc, u, cfg, iters, trace)
    if not report.converged:
        raise NoConvergence(
            f"no convergence from {report.seed}: residual {report.residual:.3e} after {iters} iterations",
            report=report,
        )
    return report


def make_report(P, disc, u, cfg, iters, trace=()):
    gf = disc.wrap(u)
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            res = _norm(disc.residual(u))
        except NegativeValue:
            res = math.inf
    res = res if math.isfinite(res) else math.inf
    v = u - disc.psi
    vnorm = float(np.max(np.abs(v[disc.nodes >= 0.0]))) if np.all(np.isfinite(v)) else math.inf
    split = (P.psi_norm, vnorm)
    converged = res < cfg.tol
    finite = math.isfinite(vnorm)
    cone = check_cone_membership(P, gf) if finite else ConeVerdict(Membership.OUTSIDE, {}, 1e-9)
    gap = alpha_consistency(P, gf, disc) if converged else float("nan")
    return SolutionReport(
        u=gf, residual=res, iterations=iters, cone=cone, norm_split=split,
        is_trivial=vnorm < 10.0 * cfg.tol, converged=converged,
        seed=cfg.initial.label, strategy=cfg.strategy.value, alpha_gap=gap, history=list(trace),
    )


# --------------------------------------------------------------------------
# multi-start


def seed_levels(rhos):
    """Cone-seed levels: every rung and the geometric midpoint of each gap."""
    rhos = sorted({float(x) for x in rhos if x > 0})
    levels = list(rhos)
    levels += [math.sqrt(x * y) for x, y in zip(rhos[:-1], rhos[1:])]
    return sorted(set(levels))


@dataclass
class MultistartResult:
    reports: list
    failures: list

    @property
    def nontrivial(self):
        return [r for r in self.reports if not r.is_trivial]

    @property
    def best(self):
        """Best nontrivial in-cone solution, else best converged, else ``None``."""
        good = [r for r in self.nontrivial if r.cone.inside]
        pool = good or self.nontrivial or self.reports
        return min(pool, key=lambda r: r.residual) if pool else None

    def distinct(self, rel=1e-6):
        """Converged solutions with pairwise distinct ``||v||``."""
        out = []
        for r in sorted(self.reports, key=lambda r: r.norm_split[1]):
            if not out or abs(r.norm_split[1] - out[-1].norm_split[1]) > rel * max(1.0, r.norm_split[1]):
                out.append(r)
        return out


def solve_multistart(P: ProblemInstance, cfg: SolverConfig = SolverConfig(), levels=(),
                     workers=None) -> MultistartResult:
    """Independent solves from the trivial extension and one cone seed per level."""
    disc = Discretization(P, cfg.grid)
    seeds = [TrivialExtension()] + [ConeSeed(x) for x in levels]
    cfgs = [replace(cfg, initial=s) for s in seeds]

    def run(c):
        try:
            rep = solve(P, c, disc)
        except NoConvergence as exc:
            rep = exc
        # Picard is drawn to attracting fixed points (often the trivial one);
        # from a nontrivial seed, retry with Newton before giving up on it
        retry = isinstance(rep, NoConvergence) or rep.is_trivial
        if retry and c.strategy is Strategy.PICARD_THEN_NEWTON and isinstance(c.initial, ConeSeed):
            alt = replace(c, strategy=Strategy.NEWTON)
            try:
                other = solve(P, alt, disc)
                if isinstance(rep, NoConvergence) or not other.is_trivial:
                    rep = other
            except NoConvergence:
                pass
        return rep

    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(run, cfgs))
    reports = [o for o in outcomes if isinstance(o, SolutionReport)]
    failures = [o for o in outcomes if not isinstance(o, SolutionReport)]
    for f in failures:
        logger.info("%s", f)
    return MultistartResult(reports, failures)
