"""Discrete fields and trials of the functional inequalities.

A trial measures both sides of one inequality on one field and one
control ball, without the unknown constant; ``implied_constant`` is their
ratio.  Constants are calibrated as extremes over seeded trials and then
validated on fresh seeds (see :func:`calibrate` and :func:`validate`).

Control balls are numeric: node sets ``{d(x, .) <= r}`` of the grid
oracle built on the field's own grid.  Set measures count closed cells
with at least half of their corners in the set; integrals of node
quantities use the node rule (value times cell area).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .geometry import Geometry
from .grid import GridOracle
from .io import write_csv
from .metric import rstar_and_height

__all__ = [
    "DiscreteField", "InequalityReport", "DeGiorgiSets", "PreconditionError",
    "BallOutOfGridError", "a_gradient", "a_gradient_norm", "edge_energy",
    "discrete_residual", "cell_measure", "ball_masks", "poincare_trial",
    "vanishing_sobolev_trial", "caccioppoli_trial", "degiorgi_sets",
    "degiorgi_check", "degiorgi_chain", "random_lattice_field", "TrialSetup",
    "run_trials", "calibrate", "validate", "write_reports_csv",
]


class PreconditionError(ValueError):
    pass


class BallOutOfGridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """Node values ``values[i, j]`` at ``(x1[i], x2[j])`` on a uniform grid."""

    geometry: Geometry | None
    x1: np.ndarray
    x2: np.ndarray
    values: np.ndarray
    coef: object = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.x1), len(self.x2)):
            raise ValueError("values shape does not match the grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def on_grid(cls, g: Geometry | None, bounds, shape, func=None, coef=None) -> "DiscreteField":
        (a1, b1), (a2, b2) = bounds
        x1 = np.linspace(a1, b1, shape[0])
        x2 = np.linspace(a2, b2, shape[1])
        if g is not None and (a1 <= 0 or b1 >= g.R):
            raise ValueError("grid must lie strictly inside (0, R) x R")
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        vals = np.zeros_like(X1) if func is None else np.broadcast_to(func(X1, X2), X1.shape)
        return cls(g, x1, x2, vals, coef)

    def with_values(self, values) -> "DiscreteField":
        out = replace(self, values=values)
        out._cache.update(self._cache)
        return out

    @property
    def shape(self):
        return self.values.shape

    @property
    def h1(self) -> float:
        return float(self.x1[1] - self.x1[0])

    @property
    def h2(self) -> float:
        return float(self.x2[1] - self.x2[0])

    @property
    def bounds(self):
        return ((float(self.x1[0]), float(self.x1[-1])), (float(self.x2[0]), float(self.x2[-1])))

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    def fcol(self) -> np.ndarray:
        if self.coef is not None:
            return np.broadcast_to(np.asarray(self.coef(self.x1), dtype=float), self.x1.shape)
        return np.asarray(self.geometry.f(self.x1), dtype=float)

    def mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def oracle(self) -> GridOracle:
        if "oracle" not in self._cache:
            self._cache["oracle"] = GridOracle(self.geometry, self.bounds, self.shape, self.coef)
        return self._cache["oracle"]

    def distances_from(self, x) -> np.ndarray:
        key = ("dist", float(x[0]), float(x[1]))
        if key not in self._cache:
            self._cache[key] = self.oracle().distances_from(x)
        return self._cache[key]


def a_gradient(w: DiscreteField):
    """(d1 w, f(x1) d2 w) by centred differences, one-sided on the boundary."""
    d1, d2 = np.gradient(w.values, w.x1, w.x2, edge_order=1)
    return d1, d2 * w.fcol()[:, None]


def a_gradient_norm(w: DiscreteField) -> np.ndarray:
    d1, d2 = a_gradient(w)
    return np.hypot(d1, d2)


def edge_energy(w: DiscreteField, values=None, weight=None) -> float:
    """Edge form of the integral of |grad_A v|^2, matching the solver's flux scheme.

    ``weight`` (node array) multiplies each edge term by the mean of its
    end-node weights.
    """
    v = w.values if values is None else values
    f2 = w.fcol() ** 2
    e1 = (np.diff(v, axis=0) / w.h1) ** 2
    e2 = (np.diff(v, axis=1) / w.h2) ** 2 * f2[:, None]
    if weight is not None:
        e1 = e1 * 0.5 * (weight[1:, :] + weight[:-1, :])
        e2 = e2 * 0.5 * (weight[:, 1:] + weight[:, :-1])
    return float((e1.sum() + e2.sum()) * w.cell_area)


def discrete_residual(u: DiscreteField) -> np.ndarray:
    """Interior residual of the five-point flux scheme, scaled by h1^2."""
    v = u.values
    f2 = u.fcol()[1:-1, None] ** 2
    lap1 = v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]
    lap2 = (v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) * f2 * (u.h1 / u.h2) ** 2
    return lap1 + lap2


def cell_measure(w: DiscreteField, mask: np.ndarray) -> float:
    """Area of the closed cells with at least two of four corners in ``mask``."""
    m = mask.astype(np.int8)
    corners = m[:-1, :-1] + m[1:, :-1] + m[:-1, 1:] + m[1:, 1:]
    return float(np.count_nonzero(corners >= 2)) * w.cell_area


def ball_masks(w: DiscreteField, x, r: float):
    """Node masks of B(x, r) and B(x, 2r); raises if 2B reaches the grid edge."""
    dist = w.distances_from(x)
    b1 = dist <= r
    b2 = dist <= 2 * r
    if b2[0, :].any() or b2[-1, :].any() or b2[:, 0].any() or b2[:, -1].any():
        raise BallOutOfGridError("B(x, 2r) is not inside the grid")
    return b1, b2


@dataclass
class InequalityReport:
    inequality: str
    lhs: float
    rhs: float
    implied_constant: float
    applicable: bool = True
    indeterminate: bool = False
    meta: dict = field(default_factory=dict)

    @classmethod
    def make(cls, name, lhs, rhs, applicable=True, meta=None) -> "InequalityReport":
        lhs, rhs = float(lhs), float(rhs)
        if rhs > 0:
            c, ind = lhs / rhs, False
        elif lhs == 0:
            c, ind = math.nan, True
        else:
            c, ind = math.inf, False
        return cls(name, lhs, rhs, c, applicable, ind, dict(meta or {}))


def poincare_trial(w: DiscreteField, x, r: float, meta=None) -> InequalityReport:
    """int_B |w - mean_B w|  versus  r int_{2B} |grad_A w|."""
    b1, b2 = ball_masks(w, x, r)
    vals = w.values[b1]
    lhs = np.abs(vals - vals.mean()).sum() * w.cell_area
    rhs = r * a_gradient_norm(w)[b2].sum() * w.cell_area
    return InequalityReport.make("poincare", lhs, rhs, meta=meta)


def vanishing_sobolev_trial(w: DiscreteField, x, r: float, E: np.ndarray, meta=None) -> InequalityReport:
    """int_B |w|  versus  r int_{2B} |grad_A w| for w vanishing on E, |E| >= |B|/2."""
    b1, b2 = ball_masks(w, x, r)
    E = E & b1
    if np.any(w.values[E] != 0):
        raise PreconditionError("w does not vanish on E")
    if cell_measure(w, E) < 0.5 * cell_measure(w, b1):
        raise PreconditionError("|E| < |B|/2")
    lhs = np.abs(w.values[b1]).sum() * w.cell_area
    rhs = r * a_gradient_norm(w)[b2].sum() * w.cell_area
    return InequalityReport.make("vanishing_sobolev", lhs, rhs, meta=meta)


def caccioppoli_trial(u: DiscreteField, psi: np.ndarray, residual_tol: float = 1e-8,
                      slack: float = 0.05, meta=None) -> InequalityReport:
    """Caccioppoli for a discrete solution u and a cutoff psi (node array).

    lhs = int |grad_A(psi u+)|^2, rhs = (|psi|_inf + |grad_A psi|_inf)^2 int_{supp psi} u+^2.
    ``meta['intermediate']`` holds the ratio of int |psi grad_A u+|^2 to
    int |grad_A psi|^2 u+^2, which should not exceed 4 (1 + slack).
    """
    res = discrete_residual(u)
    scale = max(np.abs(u.values).max(), 1e-300)
    if np.abs(res).max() > residual_tol * scale:
        raise PreconditionError("u is not a discrete solution (residual check)")
    up = np.maximum(u.values, 0.0)
    pw = u.with_values(psi)
    lhs = edge_energy(u, psi * up)
    grad_psi = float(a_gradient_norm(pw).max())
    supp = psi > 0
    rhs = (np.abs(psi).max() + grad_psi) ** 2 * (up[supp] ** 2).sum() * u.cell_area
    inner = edge_energy(u, up, weight=psi ** 2)
    outer = edge_energy(u, psi, weight=up ** 2)
    ratio = inner / outer if outer > 0 else (0.0 if inner == 0 else math.inf)
    rep = InequalityReport.make("caccioppoli", lhs, rhs, meta=meta)
    rep.meta.update(intermediate=ratio, intermediate_ok=bool(ratio <= 4.0 * (1 + slack)))
    return rep


@dataclass
class DeGiorgiSets:
    A: float
    C: float
    D: float
    C0: float
    r: float
    ball: float

    @property
    def lhs(self) -> float:
        return self.C0 * self.D

    @property
    def rhs_without_constant(self) -> float:
        return (self.A * self.C / (self.r * self.ball)) ** 2

    @property
    def applicable(self) -> bool:
        return self.A >= 0.5 * self.ball


def degiorgi_sets(w: DiscreteField, x, r: float) -> DeGiorgiSets:
    b1, b2 = ball_masks(w, x, r)
    v = w.values
    A = cell_measure(w, b1 & (v <= 0))
    C = cell_measure(w, b1 & (v >= 1))
    D = cell_measure(w, b2 & (v > 0) & (v < 1))
    wp = w.with_values(np.maximum(v, 0.0))
    C0 = float((a_gradient_norm(wp)[b2] ** 2).sum() * w.cell_area)
    return DeGiorgiSets(A, C, D, C0, float(r), cell_measure(w, b1))


def degiorgi_check(sets: DeGiorgiSets, meta=None) -> InequalityReport:
    """Implied C1 = C0|D| / (|A||C|/(r|B|))^2; inapplicable unless |A| >= |B|/2."""
    return InequalityReport.make("degiorgi", sets.lhs, sets.rhs_without_constant,
                                 applicable=sets.applicable, meta=meta)


def degiorgi_chain(w: DiscreteField, x, r: float, sobolev_constant: float) -> dict:
    """Numeric values of each link in the proof of the DeGiorgi estimate.

    Links (each should bound the previous one from above):
    |C||A|, |A| int_B wbar, C r|B| int_{2B}|grad_A wbar|, C r|B| sqrt(|D|) |grad_A w+|_{L2(2B)}.
    """
    b1, b2 = ball_masks(w, x, r)
    s = degiorgi_sets(w, x, r)
    wbar = w.with_values(np.clip(w.values, 0.0, 1.0))
    ga = a_gradient_norm(wbar)
    chain = [
        s.C * s.A,
        s.A * wbar.values[b1].sum() * w.cell_area,
        sobolev_constant * r * s.ball * ga[b2].sum() * w.cell_area,
        sobolev_constant * r * s.ball * math.sqrt(s.D * s.C0),
    ]
    ratios = [chain[i] / chain[i + 1] if chain[i + 1] > 0 else math.inf for i in range(3)]
    return {"links": chain, "ratios": ratios, "sets": s}


def random_lattice_field(w: DiscreteField, rng: np.random.Generator, box, lattice: int = 4) -> np.ndarray:
    """Piecewise-linear interpolant of N(0,1) values on a lattice x lattice grid over ``box``."""
    (a1, b1), (a2, b2) = box
    p1 = np.linspace(a1, b1, lattice)
    p2 = np.linspace(a2, b2, lattice)
    interp = RegularGridInterpolator((p1, p2), rng.standard_normal((lattice, lattice)),
                                     bounds_error=False, fill_value=None)
    X1, X2 = w.mesh()
    return interp(np.stack([X1, X2], axis=-1))


# Monte-Carlo harness

@dataclass
class TrialSetup:
    """One control ball B(x, r) with a grid covering B(x, 2r)."""

    geometry: Geometry | None
    x: tuple
    r: float
    shape: tuple = (121, 121)
    coef: object = None
    pad: float = 1.25

    def __post_init__(self):
        x1 = self.x[0]
        h2 = rstar_and_height(self.geometry, x1, 2 * self.r).h if self.coef is None else 2 * self.r
        bounds = ((x1 - 2 * self.r * self.pad, x1 + 2 * self.r * self.pad),
                  (self.x[1] - h2 * self.pad, self.x[1] + h2 * self.pad))
        self.base = DiscreteField.on_grid(self.geometry, bounds, self.shape, coef=self.coef)
        self.b1, self.b2 = ball_masks(self.base, self.x, self.r)
        self.box = bounds

    @property
    def label(self) -> str:
        return self.geometry.name if self.geometry is not None else "custom"

    def field(self, rng) -> DiscreteField:
        return self.base.with_values(random_lattice_field(self.base, rng, self.box))


def _trial(kind: str, setup: TrialSetup, seed: int, solver_factory=None) -> InequalityReport:
    rng = np.random.default_rng(seed)
    w = setup.field(rng)
    meta = dict(geometry=setup.label, x1=setup.x[0], r=setup.r, seed=seed)
    ball = w.values[setup.b1]
    if kind == "poincare":
        return poincare_trial(w, setup.x, setup.r, meta=meta)
    if kind == "vanishing_sobolev":
        q = rng.uniform(0.5, 0.9)
        c = np.quantile(ball, q)
        v = np.maximum(w.values - c, 0.0)
        return vanishing_sobolev_trial(w.with_values(v), setup.x, setup.r, v == 0, meta=meta)
    if kind == "degiorgi":
        q = rng.uniform(0.5, 0.9)
        c = np.quantile(ball, q)
        top = np.quantile(ball, rng.uniform(q + 0.02, 1.0))
        v = (w.values - c) / max(top - c, 1e-12)
        # the 1/2 hypothesis is measured on cells; lift c until it holds
        while True:
            s = degiorgi_sets(w.with_values(v), setup.x, setup.r)
            if s.applicable:
                break
            v = v - 0.05
        return degiorgi_check(s, meta=meta)
    if kind == "caccioppoli":
        if solver_factory is None:
            raise ValueError("caccioppoli trials need a solver")
        u = solver_factory(setup, rng)
        u = u.with_values(u.values - np.quantile(u.values[setup.b1], rng.uniform(0.2, 0.8)))
        d = u.distances_from(setup.x)
        psi = np.clip(2.0 - d / setup.r, 0.0, 1.0)
        return caccioppoli_trial(u, psi, meta=meta)
    raise ValueError(f"unknown inequality {kind!r}")


def run_trials(kind: str, setups, seeds, solver_factory=None) -> list:
    """Trials keyed by seed; seed s uses setup ``setups[s % len(setups)]``."""
    setups = list(setups)
    return [_trial(kind, setups[s % len(setups)], int(s), solver_factory) for s in seeds]


def calibrate(reports, mode: str = "max") -> float:
    """Extreme implied constant over applicable, determinate reports."""
    vals = [r.implied_constant for r in reports
            if r.applicable and not r.indeterminate and math.isfinite(r.implied_constant)]
    if not vals:
        return math.nan
    return max(vals) if mode == "max" else min(vals)


def validate(reports, constant: float, mode: str = "max", slack: float = 0.01) -> list:
    """Reports violating the calibrated constant by more than ``slack``."""
    bad = []
    for r in reports:
        if not r.applicable or r.indeterminate:
            continue
        c = r.implied_constant
        if mode == "max" and c > constant * (1 + slack):
            bad.append(r)
        elif mode == "min" and c < constant * (1 - slack):
            bad.append(r)
    return bad


CSV_COLUMNS = ("inequality", "geometry", "x1", "r", "seed", "lhs", "rhs", "implied_constant", "applicable")


def write_reports_csv(reports, path) -> None:
    rows = ((rep.inequality, rep.meta.get("geometry", ""), rep.meta.get("x1", ""), rep.meta.get("r", ""),
             rep.meta.get("seed", ""), rep.lhs, rep.rhs, rep.implied_constant, int(rep.applicable))
            for rep in reports)
    write_csv(path, CSV_COLUMNS, rows)
