"""Growth constants, hypothesis checks, index conditions and S-pattern certificates."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import envelope, quadrature
from .envelope import DelayForm
from .errors import AlphaGammaInvalid, DelayTooLarge, RhoTooSmall
from .kernel import Mode, validate_bounds
from .measure import check_positivity
from .problem import ProblemInstance

logger = logging.getLogger(__name__)

T_GRID = 2049
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

INDEX1 = "index1"
INDEX0 = "index0"


# --------------------------------------------------------------------------
# hypotheses


class Check(NamedTuple):
    passed: bool
    value: object
    detail: str
    warning: bool = False


@dataclass
class Diagnostics:
    checks: dict = field(default_factory=dict)

    def add(self, name, passed, value, detail, warning=False):
        self.checks[name] = Check(bool(passed), value, detail, warning)

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks.values())

    def failed(self):
        return [name for name, c in self.checks.items() if not c.passed]

    def to_dict(self):
        return {
            name: {"passed": c.passed, "value": jsonable(c.value), "detail": c.detail,
                   "warning": c.warning}
            for name, c in self.checks.items()
        }


def jsonable(x):
    if isinstance(x, (bool, str)) or x is None:
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    return float(x)


def validate_hypotheses(P: ProblemInstance, samples: int = 4097, bounds_grid: int = 257):
    """Evaluate the standing hypotheses; failures are diagnostics, never raised."""
    diag = Diagnostics()
    fam, cone = P.kernel, P.cone
    positive = P.mode is Mode.NON_NEGATIVE
    prime = "'" if positive else ""

    # psi: vanishing on (0,1] is built into the extension; report psi(0)
    psi0 = abs(P.psi.at_zero)
    ts = np.linspace(-P.r, 0.0, samples)
    psi_min = float(np.min(P.psi.fun(ts)))
    ok = not positive or psi_min >= 0.0
    diag.add(f"C{prime}1", ok, {"psi(0)": psi0, "min psi": psi_min},
             "psi extended by 0 on (0,1]" + ("; psi(0) != 0, extension discontinuous" if psi0 else ""),
             warning=psi0 > 0)

    tt = np.linspace(-P.r, 0.0, 33)
    ss = np.linspace(0.0, 1.0, 33)
    kneg = float(np.max(np.abs(fam.k(tt[:, None], ss[None, :]))))
    diag.add("C2", kneg == 0.0, kneg, "k(t,s) = 0 for t in [-r,0] (sampled)")

    rep = validate_bounds(fam, cone, grid=bounds_grid)
    diag.add(f"C{prime}3", rep.passed, {"upper_margin": rep.upper_margin,
                                       "lower_margin": rep.lower_margin},
             "kernel envelope and lower bound on [a,b] (grid scan)")

    g_min = float(np.min(P.g(np.linspace(0.0, 1.0, samples))))
    phig = quadrature.integrate(lambda s: cone.phi(s) * P.g(s), P.a, P.b,
                                P.g_breakpoints() + list(fam.s_kinks(P.a)), tol=1e-12)
    diag.add("C4", g_min >= 0.0 and phig > 0.0, {"int_a^b Phi g": phig, "min g": g_min},
             "g >= 0 and int_a^b Phi g > 0")

    diag.add(f"C{prime}5", *_sample_nonlinearity(P), warning=False)

    pos = check_positivity(P.KA, samples)
    diag.add("C6", pos.ok, {"Var(A)": P.alpha.total_variation(), "min K_A": pos.worst_value,
                            "at": pos.worst_s}, "K_A(s) >= 0 (sampled + refined)")

    ag = P.alpha_gamma
    gam_t = fam.gamma(np.linspace(-P.r, 0.0, 33))
    grid = np.linspace(0.0, 1.0, samples)
    gam = fam.gamma(grid)
    gnorm = float(np.max(np.abs(gam)))
    inab = (grid >= P.a) & (grid <= P.b)
    c2_ok = bool(np.all(gam[inab] >= float(cone.c2) * gnorm - 1e-12))
    ok = 0.0 <= ag < 1.0 and gnorm > 0 and not np.any(gam_t) and c2_ok
    if positive:
        ok = ok and float(gam.min()) >= 0.0
    diag.add(f"C{prime}7", ok, {"alpha[gamma]": ag, "c2": float(cone.c2)},
             "0 <= alpha[gamma] < 1 and gamma >= c2 ||gamma|| on [a,b]")

    diag.add("C8", P.r < P.b - P.a, {"r": P.r, "b-a": P.b - P.a}, "r < b - a")
    return diag


def _sample_nonlinearity(P, n=17):
    if not isinstance(P.F, DelayForm):
        return True, None, "user-certified envelope; measurability assumed"
    R = 10.0 * max(1.0, P.psi_norm)
    lo = 0.0 if P.mode is Mode.NON_NEGATIVE else -R
    t, u, v = np.meshgrid(np.linspace(0, 1, n), np.linspace(lo, R, n), np.linspace(lo, R, n),
                          indexing="ij")
    vals = P.F.values(t, u, v)
    fmin = float(np.nanmin(vals))
    ok = fmin >= 0.0 and bool(np.all(np.isfinite(vals)))
    return ok, fmin, f"f >= 0 on sampled box |u|,|v| <= {R:g}; Caratheodory conditions assumed"


# --------------------------------------------------------------------------
# growth constants


def _golden_extreme(fun, lo, hi, which, tol):
    sign = 1.0 if which == "max" else -1.0
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = sign * fun(x1), sign * fun(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = sign * fun(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = sign * fun(x1)
    x = 0.5 * (a + b)
    return x, fun(x)


def _extreme_over(fun, lo, hi, n, which, tol):
    """Dense grid then golden-section refinement around the grid optimizer."""
    ts = np.linspace(lo, hi, n)
    vals = np.array([fun(t) for t in ts])
    i = int(np.argmax(vals) if which == "max" else np.argmin(vals))
    best_t, best = float(ts[i]), float(vals[i])
    left, right = ts[max(i - 1, 0)], ts[min(i + 1, n - 1)]
    # endpoints are candidates in their own right
    for end in (lo, hi):
        v = fun(end)
        if (v > best) if which == "max" else (v < best):
            best_t, best = end, v
    t, v = _golden_extreme(fun, left, right, which, tol)
    if (v > best) if which == "max" else (v < best):
        best_t, best = t, v
    return best_t, best


def _kernel_abs_integral(P, t, lo, hi, termwise=False):
    fam, g = P.kernel, P.g
    pts = list(fam.s_kinks(t)) + P.g_breakpoints()
    edges = quadrature.merge_breaks(lo, hi, pts)
    if termwise:
        def term(s, i):
            s = np.asarray(s, dtype=float)
            return np.broadcast_to(fam.terms(t, s)[i], s.shape)

        n_terms = len(fam.terms(t, np.array([0.5])))
        roots = []
        for i in range(n_terms):
            roots += quadrature.sign_change_roots(lambda s, i=i: term(s, i), edges)
        integrand = lambda s: sum(np.abs(term(s, i)) for i in range(n_terms)) * g(s)  # noqa: E731
    else:
        roots = quadrature.sign_change_roots(lambda s: fam.k(t, s), edges)
        integrand = lambda s: np.abs(fam.k(t, s)) * g(s)  # noqa: E731
    return quadrature.integrate(integrand, lo, hi, pts + roots, tol=1e-13)


def _kernel_integral(P, t, lo, hi):
    fam, g = P.kernel, P.g
    pts = list(fam.s_kinks(t)) + P.g_breakpoints()
    return quadrature.integrate(lambda s: fam.k(t, s) * g(s), lo, hi, pts, tol=1e-13)


def _require_alpha_gamma(P):
    ag = P.alpha_gamma
    if not ag < 1.0:
        raise AlphaGammaInvalid(f"alpha[gamma] = {ag} >= 1")
    return ag


class Extremum(NamedTuple):
    value: float
    t: float


def m_reciprocal(P: ProblemInstance, tol=1e-10, t_grid=T_GRID, bound="sharp") -> Extremum:
    """``1/m = sup_t { int |k(t,s)| g(s) ds + |gamma(t)| / (1 - alpha[gamma]) int K_A g }``.

    ``bound="termwise"`` replaces ``|k|`` by the sum of the absolute values
    of the kernel's closed-form terms: a cruder majorant of ``|k|``, so the
    resulting ``m`` is smaller and every index-1 check made with it stays
    valid.
    """
    if bound not in ("sharp", "termwise"):
        raise ValueError(f"unknown bound {bound!r}")
    ag = _require_alpha_gamma(P)
    moment = P.KA_integral(0.0, 1.0) / (1.0 - ag)
    termwise = bound == "termwise"

    def bracket(t):
        return _kernel_abs_integral(P, t, 0.0, 1.0, termwise) + abs(float(P.kernel.gamma(t))) * moment

    t, v = _extreme_over(bracket, 0.0, 1.0, t_grid, "max", tol)
    return Extremum(float(v), float(t))


def compute_m(P: ProblemInstance, tol=1e-10, t_grid=T_GRID, bound="sharp") -> float:
    """``m``; ``inf`` when the bracket vanishes (then index-1 holds vacuously)."""
    cache = P.__dict__.setdefault("_m_cache", {})
    key = (tol, t_grid, bound)
    if key not in cache:
        inv = m_reciprocal(P, tol, t_grid, bound).value
        if inv <= 0.0:
            logger.warning("1/m = %g: degenerate problem, index-1 condition holds vacuously", inv)
            cache[key] = math.inf
        else:
            cache[key] = 1.0 / inv
    return cache[key]


def M_reciprocal(P: ProblemInstance, tol=1e-10, t_grid=T_GRID) -> Extremum:
    """``1/M(a,b) = inf_{t in [a,b]} { int_{a+r}^b k g + gamma(t)/(1-alpha[gamma]) int_{a+r}^b K_A g }``."""
    a, b, r = P.a, P.b, P.r
    if not r < b - a:
        raise DelayTooLarge(f"r = {r} >= b - a = {b - a}")
    ag = _require_alpha_gamma(P)
    lo = a + r
    moment = P.KA_integral(lo, b) / (1.0 - ag)

    def bracket(t):
        return _kernel_integral(P, t, lo, b) + float(P.kernel.gamma(t)) * moment

    t, v = _extreme_over(bracket, a, b, t_grid, "min", tol)
    return Extremum(float(v), float(t))


def compute_M(P: ProblemInstance, tol=1e-10, t_grid=T_GRID) -> float:
    """``M(a,b)``; ``inf`` when ``1/M <= 0`` (index-0 can then never hold)."""
    cache = P.__dict__.setdefault("_M_cache", {})
    key = (tol, t_grid)
    if key not in cache:
        inv = M_reciprocal(P, tol, t_grid).value
        cache[key] = math.inf if inv <= 0.0 else 1.0 / inv
    return cache[key]


# --------------------------------------------------------------------------
# index conditions


@dataclass(frozen=True)
class IndexSettings:
    """Numerical knobs shared by the two index checks."""

    tol: float = 1e-10
    t_grid: int = T_GRID
    m_bound: str = "sharp"
    f_grid: int = envelope.GRID
    sup_safety: float = 1.0
    inf_safety: float = 1.0


DEFAULT_SETTINGS = IndexSettings()


class IndexCheck(NamedTuple):
    holds: bool
    margin: float
    number: float
    constant: float


def check_index1(P: ProblemInstance, rho, settings: IndexSettings = DEFAULT_SETTINGS) -> IndexCheck:
    """``F^(-rho,rho) / m < 1`` (``F^(0,rho)`` in non-negative mode)."""
    if not rho > P.psi_norm:
        raise RhoTooSmall(f"rho = {rho} must exceed ||psi|| = {P.psi_norm}")
    lower = 0.0 if P.mode is Mode.NON_NEGATIVE else -rho
    sup = envelope.sup_number(P.F, rho, lower, settings.f_grid, settings.f_grid,
                              settings.sup_safety)
    m = compute_m(P, settings.tol, settings.t_grid, settings.m_bound)
    ratio = 0.0 if math.isinf(m) else sup / m
    return IndexCheck(ratio < 1.0, 1.0 - ratio, sup, m)


def check_index0(P: ProblemInstance, rho, settings: IndexSettings = DEFAULT_SETTINGS) -> IndexCheck:
    """``F_(rho,rho/c) / M(a,b) > 1``."""
    M = compute_M(P, settings.tol, settings.t_grid)
    inf = envelope.inf_number(P.F, rho, P.c, P.a, P.b, settings.f_grid, settings.f_grid,
                              settings.inf_safety)
    ratio = 0.0 if math.isinf(M) else inf / M
    return IndexCheck(ratio > 1.0, ratio - 1.0, inf, M)


# --------------------------------------------------------------------------
# S-patterns


class Rung(NamedTuple):
    rho: float
    kind: str
    margin: float = float("nan")


# Each position: (kind, gap to the previous rung: "" / "lt" / "lt_c", rho > ||psi||?)
PATTERNS = {
    "S1": ((INDEX0, "", False), (INDEX1, "lt_c", True)),
    "S2": ((INDEX1, "", True), (INDEX0, "lt", False)),
    "S3": ((INDEX0, "", False), (INDEX1, "lt_c", True), (INDEX0, "lt", False)),
    "S4": ((INDEX1, "", True), (INDEX0, "lt", False), (INDEX1, "lt_c", False)),
    "S5": ((INDEX0, "", False), (INDEX1, "lt_c", True), (INDEX0, "lt", False),
           (INDEX1, "lt_c", False)),
    "S6": ((INDEX1, "", True), (INDEX0, "lt", False), (INDEX1, "lt_c", False),
           (INDEX0, "lt", False)),
}
SOLUTIONS = {"S1": 1, "S2": 1, "S3": 2, "S4": 2, "S5": 3, "S6": 3}
# tie-break: patterns without the "same norm as psi" caveat first
SEARCH_ORDER = ("S6", "S5", "S4", "S3", "S2", "S1")
ADVISORY = {"S1", "S3", "S5"}


def _match_one(layout, ladder, psi_norm, c):
    chosen = []
    start = 0
    for kind, gap, above_psi in layout:
        found = None
        for j in range(start, len(ladder)):
            rung = ladder[j]
            if rung.kind != kind:
                continue
            if above_psi and not rung.rho > psi_norm:
                continue
            if chosen:
                prev = chosen[-1].rho
                bound = prev / c if gap == "lt_c" else prev
                if not prev < rung.rho or not bound < rung.rho:
                    continue
            found = j
            break
        if found is None:
            return None
        chosen.append(ladder[found])
        start = found + 1
    return chosen


def match_ladder(ladder, psi_norm, c):
    """Best S-pattern realized by a subsequence of ``ladder`` (greedy, earliest rungs)."""
    ladder = sorted((Rung(*r) for r in ladder), key=lambda r: r.rho)
    for name in SEARCH_ORDER:
        chosen = _match_one(PATTERNS[name], ladder, psi_norm, c)
        if chosen is not None:
            return name, chosen
    return None, []


@dataclass
class Certificate:
    pattern: str | None
    guaranteed_solutions: int
    ladder: list
    mode: Mode
    m: float | None = None
    M: float | None = None
    hypotheses: dict = field(default_factory=dict)
    probes: list = field(default_factory=list)
    advisories: list = field(default_factory=list)

    def to_dict(self):
        return {
            "pattern": self.pattern,
            "solutions": self.guaranteed_solutions,
            "mode": self.mode.value,
            "ladder": [{"rho": jsonable(r.rho), "kind": r.kind, "margin": jsonable(r.margin)}
                       for r in self.ladder],
            "m": jsonable(self.m),
            "M": jsonable(self.M),
            "hypotheses": self.hypotheses,
            "probes": jsonable(self.probes),
            "advisories": list(self.advisories),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def match_pattern(P: ProblemInstance, ladder, settings=DEFAULT_SETTINGS, hypotheses=None,
                  probes=()) -> Certificate:
    """Certificate for a ladder of already-verified rungs."""
    name, chosen = match_ladder(ladder, P.psi_norm, P.c)
    advisories = []
    if name in ADVISORY:
        advisories.append(f"{name}: one solution may have the same norm as psi")
    if P.psi.at_zero != 0.0:
        advisories.append("psi(0) != 0: the zero extension of psi is discontinuous at t = 0")
    if isinstance(P.F, DelayForm):
        advisories.append("growth numbers are grid estimates (non-rigorous)")
    return Certificate(
        pattern=name,
        guaranteed_solutions=SOLUTIONS.get(name, 0),
        ladder=chosen,
        mode=P.mode,
        m=_cached_constant(P, "_m_cache", (settings.tol, settings.t_grid, settings.m_bound)),
        M=_cached_constant(P, "_M_cache", (settings.tol, settings.t_grid)),
        hypotheses={} if hypotheses is None else hypotheses,
        probes=list(probes),
        advisories=advisories,
    )


def _cached_constant(P, attr, key):
    return P.__dict__.get(attr, {}).get(key)


def verify_ladder(P: ProblemInstance, rhos, settings=DEFAULT_SETTINGS):
    """Check both index conditions at each ``rho``; return (rungs, probe records)."""
    rungs, probes = [], []
    c8 = P.r < P.b - P.a
    for rho in sorted(float(x) for x in rhos):
        rec = {"rho": rho}
        if rho > P.psi_norm:
            i1 = check_index1(P, rho, settings)
            rec.update(index1=i1.holds, index1_margin=i1.margin, sup=i1.number)
            if i1.holds:
                rungs.append(Rung(rho, INDEX1, i1.margin))
        if c8:
            i0 = check_index0(P, rho, settings)
            rec.update(index0=i0.holds, index0_margin=i0.margin, inf=i0.number)
            if i0.holds:
                rungs.append(Rung(rho, INDEX0, i0.margin))
        probes.append(rec)
    return rungs, probes


def certify_ladder(P: ProblemInstance, rhos, settings=DEFAULT_SETTINGS, hypotheses=None):
    rungs, probes = verify_ladder(P, rhos, settings)
    return match_pattern(P, rungs, settings, hypotheses, probes)


def auto_ladder(P: ProblemInstance, rho_max, budget=48, settings=DEFAULT_SETTINGS,
                hypotheses=None, anchors=()) -> Certificate:
    """Probe log-spaced radii in ``(||psi||, rho_max]`` and keep the deepest pattern."""
    if budget < 2:
        raise ValueError("budget must be >= 2")
    lo = P.psi_norm if P.psi_norm > 0 else rho_max * 1e-6
    rhos = np.geomspace(lo, rho_max, budget + 1)[1:]
    rhos = sorted(set(rhos.tolist()) | {float(a) for a in anchors if lo < a <= rho_max})
    return certify_ladder(P, rhos, settings, hypotheses)
