"""Command-line front end.

Exit codes: 0 success, 1 validation error (bad flags, config or geometry,
failed audit), 2 numeric failure (quadrature, root bracketing, solve).
Outputs go to ``--out``, else ``$DEGENLAB_OUT``, else ``./degenlab-out``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import classifier as cl
from . import inequalities as ineq
from . import io
from . import metric, solver
from .geometry import DomainError, StructureAuditConfig, audit_structure_conditions, parse_geometry

OUT_ENV = "DEGENLAB_OUT"


class ValidationError(ValueError):
    pass


def _out_dir(args) -> str:
    d = args.out or os.environ.get(OUT_ENV) or "degenlab-out"
    os.makedirs(d, exist_ok=True)
    return d


def _geometry(text):
    try:
        return parse_geometry(text)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _emit(args, name, text):
    path = os.path.join(_out_dir(args), name)
    io.write_atomic(path, text)
    return path


# commands

def cmd_audit(args):
    g = _geometry(args.geometry)
    cfg = StructureAuditConfig(sample_count=args.samples, epsilon=args.epsilon, C=args.C)
    rep = audit_structure_conditions(g, tuple(args.interval), cfg)
    obj = {
        "geometry": g.name, "interval": list(args.interval), "passed": rep.passed,
        "conditions": {str(i): {"passed": c.passed, "witness": c.witness, "detail": c.detail}
                       for i, c in sorted(rep.conditions.items())},
    }
    text = io.write_json(None, obj)
    _emit(args, "audit.json", text)
    sys.stdout.write(text)
    if not rep.passed:
        names = ", ".join(f"condition ({i})" for i in rep.failed())
        print(f"audit failed: {names}", file=sys.stderr)
        return 1
    return 0


def cmd_geodesic(args):
    g = _geometry(args.geometry)
    if args.r is not None:
        prof = metric.rstar_and_height(g, args.x1, args.r)
        obj = {"geometry": g.name, "x1": args.x1, "r": args.r, "lambda": prof.lam,
               "r_star": prof.r_star, "h": prof.h, "regime": prof.regime, "surrogate": prof.surrogate}
    else:
        if args.x_end is None or args.lam is None:
            raise ValidationError("geodesic needs --r, or both --x-end and --lam")
        obj = {"geometry": g.name, "x1": args.x1, "x_end": args.x_end, "lambda": args.lam,
               "radius": metric.geodesic_radius(g, args.x1, args.x_end, args.lam)}
    text = io.write_json(None, obj)
    _emit(args, "geodesic.json", text)
    sys.stdout.write(text)
    return 0


VOLUME_COLUMNS = ("geometry", "n", "x1", "r", "regime", "analytic", "numeric", "ratio")


def cmd_volume(args):
    g = _geometry(args.geometry)
    rows = []
    for r in args.r:
        analytic = metric.ball_volume(g, args.n, args.x1, r)
        numeric = ratio = math.nan
        if args.n == 2:
            o = metric.ball_oracle(g, (args.x1, 0.0), r, args.grid)
            numeric = o.ball_area((args.x1, 0.0), r)
            ratio = numeric / analytic
        rows.append((g.name, args.n, args.x1, r, metric.regime(g, args.x1, r, args.n), analytic, numeric, ratio))
    path = os.path.join(_out_dir(args), "volume.csv")
    io.write_csv(path, VOLUME_COLUMNS, rows)
    with open(path) as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_kernel(args):
    g = _geometry(args.geometry)
    x = (args.x1,) + (0.0,) * (args.n - 1)
    if args.y1 is not None:
        y = (args.y1,) + (0.0,) * (args.n - 2) + (args.y2,)
        obj = {"geometry": g.name, "n": args.n, "x": list(x), "y": list(y), "r": args.r,
               "K": metric.kernel_K(g, args.n, x, y, args.r)}
    else:
        val, ratio = metric.straight_across_integral(g, args.n, x, args.r, args.grid, dual=args.dual)
        obj = {"geometry": g.name, "n": args.n, "x": list(x), "r": args.r, "integral": val,
               "ratio": ratio, "dual": args.dual}
    text = io.write_json(None, obj)
    _emit(args, "kernel.json", text)
    sys.stdout.write(text)
    return 0


_MODES = {"poincare": "max", "vanishing_sobolev": "max", "caccioppoli": "max", "degiorgi": "min"}


def _inequality(args, kind):
    g = _geometry(args.geometry)
    setup = ineq.TrialSetup(g, (args.x1, 0.0), args.r, (args.grid, args.grid))
    factory = solver.RandomSolutionFactory()
    seeds = range(args.seed, args.seed + args.trials)
    reports = ineq.run_trials(kind, [setup], seeds, factory)
    mode = _MODES[kind]
    C = ineq.calibrate(reports, mode)
    summary = {"inequality": kind, "geometry": g.name, "x1": args.x1, "r": args.r,
               "trials": args.trials, "seed": args.seed, "prng": io.PRNG_NAME,
               "calibrated_constant": C, "mode": mode}
    if args.validate:
        val = ineq.run_trials(kind, [setup], range(args.seed + 10 ** 6, args.seed + 10 ** 6 + args.trials), factory)
        bad = ineq.validate(val, C, mode, args.slack)
        summary.update(validation_trials=len(val), violations=len(bad))
        reports = reports + val
    d = _out_dir(args)
    ineq.write_reports_csv(reports, os.path.join(d, f"{kind}.csv"))
    text = io.write_json(os.path.join(d, f"{kind}-summary.json"), summary)
    sys.stdout.write(text)
    return 0


def cmd_solve(args):
    if args.config_obj is not None:
        p = solver.problem_from_config(args.config_obj)
    else:
        g = _geometry(args.geometry)
        p = solver.DegenerateProblem(g, ((args.rect[0], args.rect[1]), (args.rect[2], args.rect[3])),
                                     (args.resolution, args.resolution), args.boundary, args.seed)
    res = solver.solve_problem(p)
    u = res.u
    d = _out_dir(args)
    X1, X2 = u.mesh()
    I, J = np.meshgrid(np.arange(u.shape[0]), np.arange(u.shape[1]), indexing="ij")
    io.write_csv(os.path.join(d, "field.csv"), ("i", "j", "x1", "x2", "u"),
                 zip(I.ravel().tolist(), J.ravel().tolist(), X1.ravel().tolist(), X2.ravel().tolist(),
                     u.values.ravel().tolist()))
    summary = {"geometry": p.geometry.name, "bounds": [list(b) for b in p.bounds], "shape": list(p.shape),
               "boundary": p.boundary if isinstance(p.boundary, str) else "custom", "seed": p.seed,
               "residual": res.residual, "iterations": res.iterations, "energy": res.energy,
               "prng": io.PRNG_NAME}
    sys.stdout.write(io.write_json(os.path.join(d, "solve.json"), summary))
    return 0


def cmd_oscillation(args):
    g = _geometry(args.geometry)
    x = (args.x1, 0.0)
    p = solver.centered_problem(g, x, args.r0, (args.resolution, args.resolution), seed=args.seed)
    lam = None
    if args.with_lambda:
        prof = cl.DeltaProfile(geometry=g)
        lam = lambda r: cl.lambda_at(prof, r)
    rep = solver.oscillation_decay_run(p, x, args.r0, args.levels, lam)
    d = _out_dir(args)
    io.emit_plot_data([(lv.r, lv.osc) for lv in rep.levels], os.path.join(d, "oscillation.dat"), "r osc")
    obj = {"geometry": g.name, "center": list(x), "r0": args.r0, "seed": args.seed,
           "levels": [lv.__dict__ for lv in rep.levels],
           "strictly_decreasing": rep.strictly_decreasing()}
    sys.stdout.write(io.write_json(os.path.join(d, "oscillation.json"), obj))
    return 0


def cmd_classify(args):
    g = _geometry(args.geometry)
    prof = cl.DeltaProfile(C1=args.C1, C2=args.C2, N=args.N, geometry=g)
    rep = cl.classify(g, prof, args.C3, args.r0, args.J, args.X, args.margin, args.rows)
    d = _out_dir(args)
    obj = rep.to_json()
    text = io.write_json(os.path.join(d, "classify.json"), obj)
    cl.validate_report(json.loads(text))
    io.emit_plot_data([(row["j"], row["ln_lambda"]) for row in rep.rows],
                      os.path.join(d, "lambda.dat"), "j ln_lambda")
    sys.stdout.write(text)
    return 0


def cmd_suite(args):
    from .suite import run_suite
    only = set(args.only) if args.only else None
    results = run_suite(only)
    obj = [{"criterion": r.number, "name": r.name, "passed": r.passed, "detail": r.detail,
            "seconds": r.seconds} for r in results]
    io.write_json(os.path.join(_out_dir(args), "suite.json"), obj)
    return 0 if all(r.passed for r in results) else 2


# parser

def _common(p):
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./degenlab-out)")
    p.add_argument("--config", default=None, help="JSON file of option values; unknown keys are rejected")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="degenlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="check the five structure conditions")
    p.add_argument("--geometry", required=True)
    p.add_argument("--interval", type=float, nargs=2, default=[1e-6, 0.4])
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--C", type=float, default=8.0)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("geodesic", help="geodesic radius, or lambda / r* / h for a ball")
    p.add_argument("--geometry", required=True)
    p.add_argument("--x1", type=float, required=True)
    p.add_argument("--x-end", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--r", type=float, default=None)
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("volume", help="analytic and grid-counted ball volume")
    p.add_argument("--geometry", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--x1", type=float, required=True)
    p.add_argument("--r", type=float, nargs="+", required=True)
    p.add_argument("--grid", type=int, default=257)
    p.set_defaults(func=cmd_volume)

    p = sub.add_parser("kernel", help="kernel value or straight-across integral")
    p.add_argument("--geometry", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--x1", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--y1", type=float, default=None)
    p.add_argument("--y2", type=float, default=0.0)
    p.add_argument("--grid", type=int, default=257)
    p.add_argument("--dual", action="store_true")
    p.set_defaults(func=cmd_kernel)

    for name, kind in (("poincare", "poincare"), ("sobolev", "vanishing_sobolev"),
                       ("caccioppoli", "caccioppoli"), ("degiorgi", "degiorgi")):
        p = sub.add_parser(name, help=f"{kind} trials on one control ball")
        p.add_argument("--geometry", required=True)
        p.add_argument("--x1", type=float, default=0.2)
        p.add_argument("--r", type=float, default=2.0 ** -5)
        p.add_argument("--trials", type=int, default=100)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--grid", type=int, default=121)
        p.add_argument("--validate", action="store_true")
        p.add_argument("--slack", type=float, default=0.01)
        p.set_defaults(func=lambda a, k=kind: _inequality(a, k))

    p = sub.add_parser("solve", help="solve div(A grad u) = 0 on a rectangle")
    p.add_argument("--geometry", default=None)
    p.add_argument("--rect", type=float, nargs=4, default=[0.1, 0.4, -0.15, 0.15])
    p.add_argument("--resolution", type=int, default=129)
    p.add_argument("--boundary", default="linear-x1",
                   choices=["linear-x1", "linear-x2", "random-piecewise", "quadratic-saddle"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_solve, problem_config=True)

    p = sub.add_parser("oscillation", help="oscillation decay over dyadic control balls")
    p.add_argument("--geometry", required=True)
    p.add_argument("--x1", type=float, default=0.2)
    p.add_argument("--r0", type=float, default=2.0 ** -5)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=257)
    p.add_argument("--with-lambda", action="store_true")
    p.set_defaults(func=cmd_oscillation)

    p = sub.add_parser("classify", help="summability verdict for a geometry")
    p.add_argument("--geometry", required=True)
    p.add_argument("--C1", type=float, default=1.0)
    p.add_argument("--C2", type=float, default=1.0)
    p.add_argument("--C3", type=float, default=1.0)
    p.add_argument("--N", type=float, default=1.0)
    p.add_argument("--r0", type=float, default=0.1)
    p.add_argument("--J", type=int, default=10 ** 6)
    p.add_argument("--X", type=float, default=1e7)
    p.add_argument("--margin", type=float, default=0.05)
    p.add_argument("--rows", type=int, default=100)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("suite", help="run the acceptance battery")
    p.add_argument("--only", type=int, nargs="*", default=None)
    p.set_defaults(func=cmd_suite)

    for sp in sub.choices.values():
        _common(sp)
    return ap


def _apply_config(parser, sub, args):
    """Fill options from ``--config``; explicit flags win, unknown keys fail."""
    args.config_obj = None
    if not args.config:
        return
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    if getattr(args, "problem_config", False) and "rectangle" in cfg:
        try:
            solver.problem_from_config(cfg)
        except (ValueError, KeyError) as exc:
            raise ValidationError(str(exc)) from None
        args.config_obj = cfg
        return
    allowed = {a.dest for a in sub._actions} - {"help", "config"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    defaults = {a.dest: a.default for a in sub._actions}
    for k, v in cfg.items():
        if getattr(args, k) == defaults[k]:
            setattr(args, k, v)
    missing = [a.dest for a in sub._actions if a.required and getattr(args, a.dest) is None]
    if missing:
        raise ValidationError(f"missing options: {missing}")


def _required_from_config(argv):
    """Let ``--config`` supply required options by relaxing argparse's check."""
    return "--config" in argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    sub_parsers = parser._subparsers._group_actions[0].choices
    relaxed = _required_from_config(argv)
    if relaxed:
        for sp in sub_parsers.values():
            for a in sp._actions:
                if a.required and a.dest != "command":
                    a.required = False
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        _apply_config(parser, sub_parsers[args.command], args)
        if args.command != "solve" and relaxed:
            missing = [a.option_strings[0] for a in sub_parsers[args.command]._actions
                       if getattr(a, "dest", None) == "geometry" and getattr(args, "geometry", None) is None]
            if missing:
                raise ValidationError("missing --geometry")
        if args.command == "solve" and args.config_obj is None and args.geometry is None:
            raise ValidationError("solve needs --geometry or a problem config")
        return args.func(args)
    except (ValidationError, DomainError, ineq.PreconditionError, ineq.BallOutOfGridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, RuntimeError, metric.QuadratureError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
