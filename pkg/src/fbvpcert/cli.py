"""Command-line front end.

Exit codes: 0 success, 1 negative outcome (no pattern / trivial only /
reproduction mismatch), 2 config error, 3 failed hypothesis or
precondition, 4 solver found nothing.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import certify, quadrature, solver
from .config import load
from .envelope import sup_number
from .errors import AlphaGammaInvalid, ConfigError, DelayTooLarge, FBVPError
from .kernel import DirichletNonlocal, Mode, Thermostat, cone_constants
from .problem import corollary_instance, power_delay

logger = logging.getLogger("fbvpcert")

EXIT_OK, EXIT_NEGATIVE, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_NOCONV = 0, 1, 2, 3, 4


def _dump(obj):
    return json.dumps(certify.jsonable(obj), indent=2, sort_keys=True)


def _emit(text, out=None):
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _settings(args, run):
    return certify.IndexSettings(tol=args.tol or 1e-10, m_bound=run.certify.m_bound)


def _hypothesis_failure(diag):
    names = ", ".join(f"({n})" for n in diag.failed())
    return f"hypothesis check failed: {names}"


def _constant(fun):
    try:
        return fun()
    except (DelayTooLarge, AlphaGammaInvalid) as exc:
        logger.warning("%s", exc)
        return None


def cmd_constants(args):
    run = load(args.config)
    P = run.problem
    st = _settings(args, run)
    s = np.linspace(0.0, 1.0, 9)
    report = {
        "problem": P.name,
        "mode": P.mode.value,
        "interval": [P.a, P.b],
        "phi": dict(zip((f"{x:g}" for x in s), np.asarray(P.cone.phi(s), dtype=float).tolist())),
        "c1": float(P.cone.c1),
        "c2": float(P.cone.c2),
        "c": float(P.cone.c),
        "alpha_gamma": P.alpha_gamma,
        "var_A": P.alpha.total_variation(),
        "m_bound": st.m_bound,
    }
    diag = certify.validate_hypotheses(P)
    report["hypotheses"] = diag.to_dict()
    report["m"] = _constant(lambda: certify.compute_m(P, st.tol, st.t_grid, st.m_bound))
    report["M"] = _constant(lambda: certify.compute_M(P, st.tol, st.t_grid))
    _emit(_dump(report), args.out)
    if not diag.all_passed:
        print(_hypothesis_failure(diag), file=sys.stderr)
        return EXIT_HYPOTHESIS
    return EXIT_OK


def _certificate(P, run, args, settings, diag):
    if run.certify.ladder:
        return certify.certify_ladder(P, run.certify.ladder, settings, diag.to_dict())
    rho_max = args.rho_max or run.certify.rho_max or 1e4 * max(1.0, P.psi_norm)
    return certify.auto_ladder(P, rho_max, run.certify.budget, settings, diag.to_dict())


def cmd_certify(args):
    run = load(args.config)
    P = run.problem
    diag = certify.validate_hypotheses(P)
    if not diag.all_passed:
        _emit(_dump({"pattern": None, "hypotheses": diag.to_dict()}), args.out)
        print(_hypothesis_failure(diag), file=sys.stderr)
        return EXIT_HYPOTHESIS
    cert = _certificate(P, run, args, _settings(args, run), diag)
    _emit(cert.to_json(), args.out)
    return EXIT_OK if cert.pattern else EXIT_NEGATIVE


def cmd_solve(args):
    run = load(args.config)
    P = run.problem
    diag = certify.validate_hypotheses(P)
    if not diag.all_passed and not args.force:
        print(_hypothesis_failure(diag) + " (use --force to solve anyway)", file=sys.stderr)
        return EXIT_HYPOTHESIS
    cfg = run.solver
    if args.grid:
        cfg = replace(cfg, grid=args.grid)
    if args.tol:
        cfg = replace(cfg, tol=args.tol)

    rhos = []
    cert = None
    if diag.all_passed:
        cert = _certificate(P, run, args, _settings(args, run), diag)
        rhos = [r.rho for r in cert.ladder]
    if not rhos:
        top = args.rho_max or run.certify.rho_max or 1e4 * max(1.0, P.psi_norm)
        rhos = np.geomspace(max(P.psi_norm, top * 1e-6), top, 9).tolist()
    result = solver.solve_multistart(P, cfg, solver.seed_levels(rhos))

    best = result.best
    summary = {
        "certificate": None if cert is None else cert.to_dict(),
        "solutions": [r.to_dict() | {"annulus": r.annulus(rhos)} for r in result.distinct()],
        "failures": [
            {"message": str(f), "report": None if f.report is None else f.report.to_dict()}
            for f in result.failures
        ],
        "best": None if best is None else best.to_dict(),
        "seed": args.seed,
    }
    if args.out:
        out = Path(args.out)
        if best is not None:
            out.write_text(best.to_csv())
        out.with_suffix(".json").write_text(_dump(summary) + "\n")
    else:
        print(_dump(summary))

    if not result.reports:
        return EXIT_NOCONV
    if best is not None and not best.is_trivial and best.cone.inside:
        return EXIT_OK
    return EXIT_NEGATIVE


def cmd_validate(args):
    run = load(args.config)
    diag = certify.validate_hypotheses(run.problem)
    _emit(_dump(diag.to_dict()), args.out)
    if not diag.all_passed:
        print(_hypothesis_failure(diag), file=sys.stderr)
        return EXIT_HYPOTHESIS
    return EXIT_OK


# --------------------------------------------------------------------------
# reproduction table


def reproduction_rows(tol=1e-10):
    """``(quantity, published, computed, tolerance)`` for the built-in checks."""
    P = corollary_instance()
    rows = []
    rows.append(("sup_t int_0^1 |k(t,s)| ds, thermostat(1/4,1/4)", 17 / 16,
                 certify.m_reciprocal(P, tol).value, 1e-8))
    rows.append(("sup_t int_0^1 sum_i |k_i(t,s)| ds (termwise majorant)", 17 / 16,
                 certify.m_reciprocal(P, tol, bound="termwise").value, 1e-8))
    q = Fraction
    cone = cone_constants(Thermostat(q(1, 4), q(1, 4)), q(1, 4), q(7, 16))
    rows.append(("c1 corollary", q(1, 8), cone.c1, 0))
    rows.append(("c2 corollary", q(1, 4), cone.c2, 0))
    dcone = cone_constants(DirichletNonlocal(), q(1, 4), q(3, 4))
    rows.append(("c dirichlet [1/4,3/4]", q(1, 4), dcone.c, 0))
    pcone = cone_constants(Thermostat(q(1), q(1, 2), Mode.NON_NEGATIVE), q(1, 4), q(3, 4))
    rows.append(("c1 thermostat(1,1/2) non-negative [1/4,3/4]", q(1, 4), pcone.c1, 0))
    rows.append(("f^(-rho,rho), lam=1, p=2, rho=2", 2.0, sup_number(power_delay(1.0, 2, 0.15), 2.0), 1e-9))
    return rows


def cmd_reproduce(args):
    ctx = quadrature.forced_panels(args.debug_quadrature_panels)
    with ctx:
        rows = reproduction_rows(args.tol or 1e-10)
    ok = True
    width = max(len(r[0]) for r in rows)
    print(f"{'quantity':<{width}}  {'published':>14}  {'computed':>18}  {'|diff|':>10}  status")
    for name, pub, got, tol in rows:
        diff = abs(got - pub)
        passed = diff <= tol
        ok &= passed
        print(f"{name:<{width}}  {float(pub):>14.10g}  {float(got):>18.14g}  {float(diff):>10.3g}  "
              f"{'PASS' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NEGATIVE


# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="fbvpcert", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="problem config (JSON)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--tol", type=float)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("constants", help="cone and growth constants")
    common(p)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("certify", help="existence / multiplicity certificate")
    common(p)
    p.add_argument("--rho-max", type=float)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("solve", help="solve the integral equation")
    common(p)
    p.add_argument("--grid", type=int)
    p.add_argument("--rho-max", type=float)
    p.add_argument("--force", action="store_true", help="solve even if a hypothesis fails")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate", help="check the standing hypotheses")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("reproduce", help="recompute the published constants")
    common(p, config=False)
    p.add_argument("--debug-quadrature-panels", type=int, metavar="N",
                   help="force N equal quadrature panels (degrades accuracy)")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "reproduce" and not Path(args.config).is_file():
        print(f"error: config file {args.config} not found", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FBVPError as exc:
        print(f"precondition failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS


if __name__ == "__main__":
    sys.exit(main())
