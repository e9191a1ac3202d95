"""JSON problem configs.

A config is a JSON object with a ``schema`` version and the problem data::

    {
      "schema": 1,
      "kernel": {"variant": "thermostat", "beta": 0.25, "eta": 0.25, "mode": "sign_changing"},
      "interval": [0.25, 0.4375],
      "g": 1.0,
      "alpha": {"atoms": [[0.5, 0.2]], "density": {"breakpoints": [0, 1], "values": [0.1, 0.1]}},
      "psi": {"family": "bump", "h": 0.5},
      "F": {"form": "delay", "expr": "lam * abs(u) * abs(v)", "params": {"lam": 0.5}, "r": 0.15},
      "certify": {"ladder": [1.0, 900.0], "rho_max": 5000, "budget": 48, "m_bound": "sharp"},
      "solver": {"grid": 1025, "tol": 1e-10, "strategy": "picard_then_newton"}
    }

Rational numbers may be written as strings such as ``"7/16"``; they are
kept exact where the cone constants are computed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .envelope import DelayForm, EnvelopeForm
from .errors import ConfigError
from .expr import compile_expression
from .kernel import CustomKernel, DirichletNonlocal, Mode, Thermostat
from .measure import PiecewiseLinear, SignedMeasure
from .problem import InitialDatum, build_instance
from .solver import SolverConfig, Strategy

SCHEMA_VERSION = 1


def number(x, what="value"):
    """A float, or an exact ``Fraction`` for strings like ``"7/16"``."""
    if isinstance(x, bool):
        raise ConfigError(f"{what}: expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return x
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError:
            pass
    raise ConfigError(f"{what}: expected a number, got {x!r}")


def _floats(xs, what):
    try:
        return [float(number(x, what)) for x in xs]
    except TypeError:
        raise ConfigError(f"{what}: expected a list of numbers") from None


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"missing {key!r} in {where}")
    return d[key]


def parse_kernel(node):
    variant = _require(node, "variant", "kernel")
    mode = node.get("mode")
    try:
        mode = None if mode is None else Mode(mode)
    except ValueError:
        raise ConfigError(f"kernel.mode must be sign_changing or non_negative, got {mode!r}") from None
    if variant == "thermostat":
        beta = number(_require(node, "beta", "kernel"), "kernel.beta")
        eta = number(_require(node, "eta", "kernel"), "kernel.eta")
        return Thermostat(beta, eta, mode or Mode.SIGN_CHANGING)
    if variant == "dirichlet":
        return DirichletNonlocal(mode or Mode.NON_NEGATIVE)
    if variant == "custom":
        k = compile_expression(_require(node, "k", "kernel"), ("t", "s"), node.get("params"))
        gam = compile_expression(_require(node, "gamma", "kernel"), ("t",), node.get("params"))
        phi = compile_expression(_require(node, "phi", "kernel"), ("s",), node.get("params"))
        return CustomKernel(
            k, gam, phi,
            number(_require(node, "c1", "kernel"), "kernel.c1"),
            number(_require(node, "c2", "kernel"), "kernel.c2"),
            mode or Mode.SIGN_CHANGING,
            tuple(_floats(node.get("breakpoints", ()), "kernel.breakpoints")),
        )
    raise ConfigError(f"unknown kernel variant {variant!r}")


def parse_piecewise(node, what):
    if isinstance(node, (int, float, str)):
        return PiecewiseLinear.constant(float(number(node, what)))
    bps = _floats(_require(node, "breakpoints", what), f"{what}.breakpoints")
    vals = _floats(_require(node, "values", what), f"{what}.values")
    try:
        return PiecewiseLinear(tuple(bps), tuple(vals))
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def parse_alpha(node):
    if node is None:
        return SignedMeasure.zero()
    atoms = []
    for item in node.get("atoms", ()):
        if len(item) != 2:
            raise ConfigError("alpha.atoms entries must be [location, weight]")
        atoms.append(tuple(_floats(item, "alpha.atoms")))
    dens = node.get("density")
    density = None if dens is None else parse_piecewise(dens, "alpha.density")
    try:
        return SignedMeasure(tuple(atoms), density)
    except ValueError as exc:
        raise ConfigError(f"alpha: {exc}") from None


def parse_psi(node, r):
    node = node or {"family": "zero"}
    if "samples" in node:
        smp = node["samples"]
        ts = _floats(_require(smp, "t", "psi.samples"), "psi.samples.t")
        vals = _floats(_require(smp, "values", "psi.samples"), "psi.samples.values")
        if len(ts) != len(vals) or len(ts) < 2:
            raise ConfigError("psi.samples needs matching t and values lists of length >= 2")
        try:
            return InitialDatum.from_samples(ts, vals, r)
        except ValueError as exc:
            raise ConfigError(f"psi: {exc}") from None
    family = node.get("family", "zero")
    if family == "zero":
        return InitialDatum.zero(r)
    if family == "bump":
        return InitialDatum.bump(float(number(_require(node, "h", "psi"), "psi.h")), r)
    raise ConfigError(f"unknown psi family {family!r}")


def parse_F(node):
    form = node.get("form", "delay")
    r = float(number(_require(node, "r", "F"), "F.r"))
    if not r > 0:
        raise ConfigError(f"F.r must be positive, got {r}")
    params = node.get("params") or {}
    if form == "delay":
        f = compile_expression(_require(node, "expr", "F"), ("t", "u", "v"), params)
        return DelayForm(f, r)
    if form == "envelope":
        table = _require(node, "table", "F")
        try:
            rhos, sups, infs = zip(*[_floats(row, "F.table") for row in table])
        except ValueError:
            raise ConfigError("F.table rows must be [rho, sup, inf]") from None
        evaluator = None
        if "expr" in node:
            f = compile_expression(node["expr"], ("t", "u", "v"), params)
            evaluator = lambda t, seg: float(f(t, seg(0.0), seg(-r)))  # noqa: E731
        return EnvelopeForm.from_table(rhos, sups, infs, r, evaluator)
    raise ConfigError(f"unknown F form {form!r}")


@dataclass
class CertifySettings:
    ladder: list | None = None
    rho_max: float | None = None
    budget: int = 48
    m_bound: str = "sharp"


@dataclass
class RunConfig:
    problem: object
    certify: CertifySettings = field(default_factory=CertifySettings)
    solver: SolverConfig = field(default_factory=SolverConfig)
    raw: dict = field(default_factory=dict)


def parse_solver(node):
    node = node or {}
    try:
        return SolverConfig(
            grid=int(node.get("grid", 1025)),
            omega=float(node.get("omega", 1.0)),
            max_iter=int(node.get("max_iter", 200)),
            tol=float(node.get("tol", 1e-10)),
            strategy=Strategy(node.get("strategy", "picard_then_newton")),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def parse_certify(node):
    node = node or {}
    ladder = node.get("ladder")
    bound = node.get("m_bound", "sharp")
    if bound not in ("sharp", "termwise"):
        raise ConfigError(f"certify.m_bound must be sharp or termwise, got {bound!r}")
    return CertifySettings(
        ladder=None if ladder is None else _floats(ladder, "certify.ladder"),
        rho_max=None if node.get("rho_max") is None else float(node["rho_max"]),
        budget=int(node.get("budget", 48)),
        m_bound=bound,
    )


def from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    schema = data.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported or missing schema version {schema!r} (expected {SCHEMA_VERSION})")
    kernel = parse_kernel(_require(data, "kernel", "config"))
    interval = _require(data, "interval", "config")
    if not isinstance(interval, list) or len(interval) != 2:
        raise ConfigError("interval must be [a, b]")
    a, b = (number(x, "interval") for x in interval)
    F = parse_F(_require(data, "F", "config"))
    g = parse_piecewise(data.get("g", 1.0), "g")
    alpha = parse_alpha(data.get("alpha"))
    psi = parse_psi(data.get("psi"), F.r)
    try:
        problem = build_instance(kernel, a, b, F, psi=psi, g=g, alpha=alpha,
                                 name=str(data.get("name", "")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(problem, parse_certify(data.get("certify")), parse_solver(data.get("solver")), data)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return from_dict(data)
