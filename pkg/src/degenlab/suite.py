"""The desk-scale acceptance battery (criteria 1-11).

Each ``criterion_*`` function returns a :class:`CriterionResult`; the
``suite`` CLI command and ``tests/test_acceptance.py`` both run them.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import classifier as cl
from .geometry import StructureAuditConfig, audit_structure_conditions, constant, parse_geometry
from .inequalities import TrialSetup, calibrate, run_trials, validate
from .metric import (ResolutionWarning, annulus_measures, ball_oracle, ball_volume, height_hstar,
                     straight_across_integral)
from .solver import (HARMONIC_HALVING_BOUND, DegenerateProblem, RandomSolutionFactory,
                     cascade_identity_error, centered_problem, oscillation_decay_run, solve_problem,
                     truncation_cascade)

__all__ = ["CriterionResult", "CRITERIA", "run_suite", "format_line"]

BUILTIN = ("Fks:3,0.5", "Fks:3,0.9", "Fks:0,0.5", "Dsigma:0.5", "finite:1")
VOLUME_GEOMETRIES = ("Fks:3,0.5", "Dsigma:0.5")
SAMPLE_X1 = (0.05, 0.2, 0.4)
COMPARABILITY = 8.0


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)


def _timed(number, name):
    def wrap(fn):
        def run(**kw):
            t0 = time.perf_counter()
            passed, detail, data = fn(**kw)
            return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0, data)
        run.number = number
        run.label = name
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_timed(1, "exact solutions u=x1, u=x2")
def criterion_exact_solutions(shape=(128, 128)):
    worst, slowest, rows = 0.0, 0.0, []
    for name in BUILTIN:
        g = parse_geometry(name)
        for fam in ("linear-x1", "linear-x2"):
            t0 = time.perf_counter()
            res = solve_problem(DegenerateProblem(g, ((0.1, 0.4), (-0.15, 0.15)), shape, fam))
            X1, X2 = res.u.mesh()
            err = float(np.abs(res.u.values - (X1 if fam == "linear-x1" else X2)).max())
            dt = time.perf_counter() - t0
            rows.append((name, fam, err, dt))
            worst, slowest = max(worst, err), max(slowest, dt)
    ok = worst <= 1e-9 and slowest < 5.0
    return ok, f"max error {worst:.2e}, slowest solve {slowest:.2f}s", {"rows": rows}


def _saddle_error(n, exact, boundary):
    g = constant(1.0)
    p = DegenerateProblem(g, ((0.1, 0.9), (-0.4, 0.4)), (n, n), boundary)
    res = solve_problem(p)
    X1, X2 = res.u.mesh()
    return float(np.abs(res.u.values - exact(X1, X2)).max())


@_timed(2, "elliptic O(h^2) regression")
def criterion_elliptic_regression():
    """Literal check on x1^2 - x2^2, which the five-point scheme reproduces
    exactly; the error is rounding and the ratio carries no O(h^2) signal.
    The detail also reports exp(x1) cos(x2) as a non-polynomial control."""
    saddle = lambda X1, X2: X1 ** 2 - X2 ** 2
    e64 = _saddle_error(64, saddle, "quadratic-saddle")
    e128 = _saddle_error(128, saddle, "quadratic-saddle")
    ratio = e64 / e128 if e128 > 0 else math.inf
    expcos = lambda X1, X2: np.exp(X1) * np.cos(X2)
    c64 = _saddle_error(64, expcos, lambda X1, X2, b: expcos(X1, X2))
    c128 = _saddle_error(128, expcos, lambda X1, X2, b: expcos(X1, X2))
    ok = 3.5 <= ratio <= 4.5
    detail = (f"x1^2-x2^2: errors {e64:.2e}/{e128:.2e} ratio {ratio:.3f}; "
              f"control exp(x1)cos(x2): ratio {c64 / c128:.3f}")
    return ok, detail, {"ratio": ratio, "control_ratio": c64 / c128}


@_timed(3, "volume law and regime agreement")
def criterion_volume_law(n_grid=257, exponents=range(3, 10)):
    cells, lo, hi = [], math.inf, 0.0
    for name in VOLUME_GEOMETRIES:
        g = parse_geometry(name)
        for x1 in SAMPLE_X1:
            for k in exponents:
                r = 2.0 ** -k
                o = ball_oracle(g, (x1, 0.0), r, n_grid)
                ratio = o.ball_area((x1, 0.0), r) / ball_volume(g, 2, x1, r)
                cells.append((name, x1, r, ratio))
                lo, hi = min(lo, ratio), max(hi, ratio)
    agree = [a for name in VOLUME_GEOMETRIES for a in threshold_agreement(parse_geometry(name))]
    wide = [a for name in VOLUME_GEOMETRIES
            for a in threshold_agreement(parse_geometry(name), np.linspace(0.05, 0.45, 9))]
    ok = (lo >= 1 / COMPARABILITY and hi <= COMPARABILITY
          and all(1 / COMPARABILITY <= a <= COMPARABILITY for a in agree))
    detail = (f"{len(cells)} cells, ratios in [{lo:.3f}, {hi:.3f}]; threshold branch ratios in "
              f"[{min(agree):.3f}, {max(agree):.3f}] for x1 in [1e-4, 0.05] "
              f"(informative, x1 up to 0.45: min {min(wide):.3f})")
    return ok, detail, {"cells": cells, "agreement": agree}


def threshold_agreement(g, x1s=None) -> list:
    """Small over large branch of the 2D volume formula at r = 1/|F'(x1)|."""
    x1s = np.geomspace(1e-4, 0.05, 20) if x1s is None else x1s
    out = []
    for x1 in x1s:
        r = 1.0 / abs(float(g.dF(x1)))
        if x1 + r >= g.R or g.f(x1 + r) == 0:
            continue
        small = r * r * float(g.f(x1))
        large = float(g.f(x1 + r)) / float(g.dF(x1 + r)) ** 2
        out.append(small / large)
    return out


@_timed(4, "height closed form pi t^2/4")
def criterion_height():
    g = parse_geometry("finite:1")
    errs = [abs(height_hstar(g, 0.0, t) / (math.pi * t * t / 4) - 1) for t in (0.05, 0.1, 0.2)]
    return max(errs) <= 1e-8, f"max relative error {max(errs):.2e}", {"errors": errs}


@_timed(5, "straight-across estimates")
def criterion_straight_across(n_grid=257, exponents=(3, 5, 7)):
    rows, ratios = [], []
    for name in VOLUME_GEOMETRIES:
        g = parse_geometry(name)
        for x1 in SAMPLE_X1:
            for k in exponents:
                r = 2.0 ** -k
                fwd = straight_across_integral(g, 2, (x1, 0.0), r, n_grid)[1]
                dual = (straight_across_integral(g, 2, (x1, 0.0), r, n_grid, dual=True)[1]
                        if x1 - r > 0 else math.nan)
                nd = straight_across_integral(g, 3, (x1, 0.0, 0.0), r)[1]
                rows.append((name, x1, r, fwd, dual, nd))
                ratios += [v for v in (fwd, dual, nd) if not math.isnan(v)]
    ok = all(0.25 <= v <= 4.0 for v in ratios)
    return ok, f"{len(ratios)} ratios in [{min(ratios):.3f}, {max(ratios):.3f}]", {"rows": rows}


@_timed(6, "annulus comparability k=1..6")
def criterion_annulus(r0=2.0 ** -4, k_max=6, n_grid=257):
    g = parse_geometry("Fks:3,0.5")
    ratios, warned = [], 0
    for x1 in SAMPLE_X1:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ResolutionWarning)
            rows = annulus_measures(g, (x1, 0.0), r0, k_max, n_grid)
        warned += len(caught)
        ratios += [row[2] for row in rows[1:]]
    ok = all(1 / COMPARABILITY <= v <= COMPARABILITY for v in ratios)
    return ok, f"{len(ratios)} ratios in [{min(ratios):.3f}, {max(ratios):.3f}], resolution warnings {warned}", \
        {"ratios": ratios}


def inequality_setups():
    F = parse_geometry("Fks:3,0.5")
    D = parse_geometry("Dsigma:0.5")
    return [TrialSetup(F, (0.2, 0.0), 2.0 ** -5), TrialSetup(F, (0.3, 0.0), 2.0 ** -4),
            TrialSetup(D, (0.2, 0.0), 2.0 ** -5)]


@_timed(7, "inequality Monte Carlo")
def criterion_inequalities(trials=500, slack=0.01):
    setups = inequality_setups()
    factory = RandomSolutionFactory()
    cal_seeds = range(trials)
    val_seeds = range(1000, 1000 + trials)
    parts, ok, data = [], True, {}
    for kind, mode in (("poincare", "max"), ("vanishing_sobolev", "max"),
                       ("caccioppoli", "max"), ("degiorgi", "min")):
        cal = run_trials(kind, setups, cal_seeds, factory)
        val = run_trials(kind, setups, val_seeds, factory)
        C = calibrate(cal, mode)
        bad = validate(val, C, mode, slack)
        extra = ""
        if kind == "caccioppoli":
            inter = [r.meta["intermediate"] for r in cal + val]
            inter_ok = all(r.meta["intermediate_ok"] for r in cal + val)
            extra = f", factor-4 step max {max(inter):.3f}"
            ok &= inter_ok
        if kind == "degiorgi":
            n_app = sum(r.applicable for r in val)
            extra = f", applicable {n_app}/{len(val)}"
        ok &= not bad and math.isfinite(C) and C > 0
        parts.append(f"{kind} C={C:.4g} violations={len(bad)}{extra}")
        data[kind] = {"constant": C, "violations": len(bad)}
    return ok, "; ".join(parts), data


@_timed(8, "oscillation decay")
def criterion_oscillation(seeds=range(5), levels=4):
    g = parse_geometry("Fks:3,0.5")
    x, r0 = (0.2, 0.0), 2.0 ** -5
    finals, ok = [], True
    for s in seeds:
        rep = oscillation_decay_run(centered_problem(g, x, r0, seed=s), x, r0, levels)
        finals.append(rep.oscs[-1] / rep.oscs[0])
        ok &= rep.strictly_decreasing() and finals[-1] < 0.9
    flat = []
    for s in seeds:
        xe = (0.5, 0.0)
        rep = oscillation_decay_run(centered_problem(constant(1.0), xe, 2.0 ** -4, seed=s), xe, 2.0 ** -4, levels)
        flat += rep.ratios
    ok &= max(flat) <= HARMONIC_HALVING_BOUND
    return ok, (f"f_(3,0.5) final/initial max {max(finals):.3f}; "
                f"f=1 per-level ratio max {max(flat):.3f} (bound {HARMONIC_HALVING_BOUND})"), \
        {"finals": finals, "flat_ratios": flat}


@_timed(9, "truncation algebra")
def criterion_truncation(fields=20, k_max=20):
    worst, worst_rel = 0.0, 0.0
    for s in range(fields):
        v = np.random.default_rng(s).uniform(-1.0, 1.0, (64, 64))
        ws, err = truncation_cascade(v, k_max, tol=math.inf, return_error=True)
        worst = max(worst, err)
        worst_rel = max(worst_rel, cascade_identity_error(ws))
    return worst <= 1e-12, (f"max |w_(k+1) - (2 w_k - 1)| = {worst:.1e} over {fields} fields, k <= {k_max} "
                            f"(float64 relative {worst_rel:.1e})"), {"max_error": worst}


@_timed(10, "classifier dichotomy")
def criterion_classifier():
    verdicts = {}
    for name in ("Fks:3,0.9", "Fks:0,1.5"):
        rep = cl.classify(parse_geometry(name))
        verdicts[name] = (rep.verdict, rep.stable)
    rep = cl.classify(None, cl.DeltaProfile(C2=0, growth_name="constant delta"))
    verdicts["constant-delta"] = (rep.verdict, rep.stable)
    for name, seq in (("1/j", lambda j: mpmath.log(j)), ("2^-j", lambda j: j * mpmath.log(2))):
        m = cl.SequenceModel(seq, name)
        a, b = cl.summability_verdict(m), cl.summability_verdict(m, J=2 * 10 ** 6)
        verdicts[name] = (a.verdict, a.verdict == b.verdict)
    want = {"Fks:3,0.9": "divergent", "Fks:0,1.5": "convergent", "constant-delta": "divergent",
            "1/j": "divergent", "2^-j": "convergent"}
    ok = all(verdicts[k][0] == v and verdicts[k][1] for k, v in want.items())
    return ok, ", ".join(f"{k} -> {v[0]}" for k, v in verdicts.items()), {"verdicts": verdicts}


@_timed(11, "structure-condition audit")
def criterion_audit():
    cfg = StructureAuditConfig()
    iv = (1e-6, 0.4)
    res = {n: audit_structure_conditions(parse_geometry(n), iv, cfg) for n in
           ("Dsigma:0.5", "Fks:3,0.5", "constant", "finite:1")}
    ok = (res["Dsigma:0.5"].passed and res["Fks:3,0.5"].passed and 1 in res["constant"].failed()
          and res["finite:1"].passed)
    detail = ", ".join(f"{k}: {'pass' if v.passed else 'fails ' + str(v.failed())}" for k, v in res.items())
    return ok, detail, {}


CRITERIA = [criterion_exact_solutions, criterion_elliptic_regression, criterion_volume_law,
            criterion_height, criterion_straight_across, criterion_annulus, criterion_inequalities,
            criterion_oscillation, criterion_truncation, criterion_classifier, criterion_audit]


def format_line(res: CriterionResult) -> str:
    return f"[{'PASS' if res.passed else 'FAIL'}] {res.number:2d} {res.name}: {res.detail} ({res.seconds:.1f}s)"


def run_suite(only=None, echo=print) -> list:
    out = []
    for crit in CRITERIA:
        if only and crit.number not in only:
            continue
        try:
            res = crit()
        except Exception as exc:  # a crash is a failed criterion, reported as such
            res = CriterionResult(crit.number, crit.label, False, f"error: {type(exc).__name__}: {exc}")
        out.append(res)
        if echo is not None:
            echo(format_line(res))
    return out
