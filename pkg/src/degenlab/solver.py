"""Finite-difference solver for div(A grad u) = 0 with A = diag(1, f(x1)^2).

The five-point flux scheme uses coefficient 1 on horizontal edges and
f(x1)^2 on vertical edges, with x1 taken at the column shared by both
end nodes.  Both u = x1 and u = x2 are exact discrete solutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import Geometry, from_spec, parse_geometry
from .inequalities import DiscreteField, cell_measure, edge_energy
from .metric import BracketError, rstar_and_height

__all__ = [
    "DegenerateProblem", "LinearSystem", "SolveResult", "OscillationLevel", "OscillationReport",
    "DegenerateRowError", "MaximumPrincipleError", "ResolutionError", "HypothesisError",
    "boundary_family", "assemble", "solve", "solve_problem", "truncation_cascade",
    "cascade_identity_error", "oscillation", "oscillation_decay_run", "centered_problem", "RandomSolutionFactory", "HARMONIC_HALVING_BOUND", "problem_from_config",
]

# Harnack constant ((1 + 1/2)/(1 - 1/2))^2 = 9 for B(r/2) in B(r) in the plane
# gives osc(B(r/2)) <= (9 - 1)/(9 + 1) osc(B(r)) for harmonic functions.
HARMONIC_HALVING_BOUND = 0.8


class DegenerateRowError(ArithmeticError):
    pass


class MaximumPrincipleError(ArithmeticError):
    pass


class ResolutionError(ValueError):
    pass


class HypothesisError(ValueError):
    pass


def boundary_family(name: str, seed: int = 0, knots: int = 12):
    """Boundary data g(X1, X2, bounds) by family name."""
    if name == "linear-x1":
        return lambda X1, X2, b: X1
    if name == "linear-x2":
        return lambda X1, X2, b: X2
    if name == "quadratic-saddle":
        return lambda X1, X2, b: X1 ** 2 - X2 ** 2
    if name == "random-piecewise":
        vals = np.random.default_rng(seed).uniform(-1.0, 1.0, 4 * knots)

        def g(X1, X2, b):
            (a1, b1), (a2, b2) = b
            s1 = (X1 - a1) / (b1 - a1)
            s2 = (X2 - a2) / (b2 - a2)
            # perimeter coordinate in [0, 4): bottom, right, top, left
            t = np.select([s2 <= 0, s1 >= 1, s2 >= 1], [s1, 1 + s2, 3 - s1], default=4 - s2)
            return np.interp(t * knots, np.arange(4 * knots + 1), np.append(vals, vals[0]))
        return g
    raise ValueError(f"unknown boundary family {name!r}")


@dataclass
class DegenerateProblem:
    geometry: Geometry | None
    bounds: tuple
    shape: tuple
    boundary: object = "linear-x1"
    seed: int = 0
    coef: object = None

    def __post_init__(self):
        (a1, b1), (a2, b2) = self.bounds
        if not (a1 < b1 and a2 < b2) or min(self.shape) < 3:
            raise ValueError("degenerate rectangle or resolution")
        if self.geometry is not None and (a1 <= 0 or b1 >= self.geometry.R):
            raise ValueError("rectangle must lie inside (0, R) x R")

    def boundary_function(self):
        if callable(self.boundary):
            return self.boundary
        return boundary_family(self.boundary, self.seed)

    def template(self) -> DiscreteField:
        return DiscreteField.on_grid(self.geometry, self.bounds, self.shape, coef=self.coef)


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    template: DiscreteField
    boundary_values: np.ndarray
    interior: np.ndarray


def assemble(p: DegenerateProblem) -> LinearSystem:
    """Five-point flux system on interior nodes; Dirichlet rows eliminated.

    Row (i, j) holds -(h2/h1)(u[i+1] - 2u + u[i-1]) - (h1/h2) f_i^2 (u[j+1] - 2u + u[j-1]),
    which is the flux form scaled by -h1 h2: symmetric positive definite.
    """
    t = p.template()
    n1, n2 = t.shape
    f2 = t.fcol() ** 2
    if np.any(f2[1:-1] < 1e-300):
        raise DegenerateRowError("f(x1)^2 underflows on the rectangle")
    X1, X2 = t.mesh()
    gb = np.asarray(p.boundary_function()(X1, X2, t.bounds), dtype=float)
    gb = np.broadcast_to(gb, t.shape).copy()
    interior = np.zeros(t.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    m1, m2 = n1 - 2, n2 - 2
    idx = np.arange(m1 * m2).reshape(m1, m2)
    ch = t.h2 / t.h1
    cv = (t.h1 / t.h2) * f2[1:-1][:, None] * np.ones((1, m2))
    rows, cols, vals = [idx.ravel()], [idx.ravel()], [(2 * ch + 2 * cv).ravel()]
    rhs = np.zeros((m1, m2))
    # horizontal neighbours
    rows.append(idx[1:, :].ravel()); cols.append(idx[:-1, :].ravel()); vals.append(np.full(idx[1:, :].size, -ch))
    rows.append(idx[:-1, :].ravel()); cols.append(idx[1:, :].ravel()); vals.append(np.full(idx[1:, :].size, -ch))
    # vertical neighbours share the column coefficient
    rows.append(idx[:, 1:].ravel()); cols.append(idx[:, :-1].ravel()); vals.append(-cv[:, 1:].ravel())
    rows.append(idx[:, :-1].ravel()); cols.append(idx[:, 1:].ravel()); vals.append(-cv[:, 1:].ravel())
    rhs[0, :] += ch * gb[0, 1:-1]
    rhs[-1, :] += ch * gb[-1, 1:-1]
    rhs[:, 0] += cv[:, 0] * gb[1:-1, 0]
    rhs[:, -1] += cv[:, -1] * gb[1:-1, -1]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(m1 * m2, m1 * m2))
    return LinearSystem(A, rhs.ravel(), t, gb, interior)


@dataclass
class SolveResult:
    u: DiscreteField
    residual: float
    iterations: int
    energy: float


def solve(system: LinearSystem, rtol: float = 1e-10, check_max_principle: bool = True) -> SolveResult:
    """Sparse direct solve (SuperLU) with residual and maximum-principle checks."""
    A = system.matrix.tocsc()
    x = splu(A).solve(system.rhs)
    bnorm = np.linalg.norm(system.rhs)
    res = np.linalg.norm(A @ x - system.rhs) / (bnorm if bnorm > 0 else 1.0)
    iters = 1
    if res > rtol:
        # one step of iterative refinement
        x = x + splu(A).solve(system.rhs - A @ x)
        res = np.linalg.norm(A @ x - system.rhs) / (bnorm if bnorm > 0 else 1.0)
        iters = 2
        if res > rtol:
            raise ArithmeticError(f"solve did not reach relative residual {rtol}: {res:.3e}")
    u = system.boundary_values.copy()
    u[system.interior] = x
    field_u = system.template.with_values(u)
    if check_max_principle:
        edge = ~system.interior
        lo, hi = system.boundary_values[edge].min(), system.boundary_values[edge].max()
        slack = 1e-9 * max(1.0, abs(lo), abs(hi))
        if u.min() < lo - slack or u.max() > hi + slack:
            raise MaximumPrincipleError("discrete maximum principle violated")
    return SolveResult(field_u, float(res), iters, edge_energy(field_u))


def solve_problem(p: DegenerateProblem, **kw) -> SolveResult:
    return solve(assemble(p), **kw)


def truncation_cascade(v, k_max: int, tol: float = 1e-12, return_error: bool = False):
    """w_k = 2^k (v - (1 - 2^-k)) for k = 0..k_max; checks w_{k+1} = 2 w_k - 1.

    Built in extended precision so the identity holds to ``tol`` in
    absolute terms even where |w_k| ~ 2^k; returned as float64.  With
    ``return_error`` the result is ``(cascade, max identity error)``.
    """
    vals = v.values if isinstance(v, DiscreteField) else np.asarray(v, dtype=float)
    if vals.max() > 1 + 1e-12:
        raise HypothesisError("cascade needs v <= 1")
    ext = vals.astype(np.longdouble)
    one = np.longdouble(1)
    ws = [np.ldexp(ext - (one - np.ldexp(one, -k)), k) for k in range(k_max + 1)]
    worst = 0.0
    for k in range(k_max):
        err = float(np.abs(ws[k + 1] - (2 * ws[k] - 1)).max())
        if err > tol:
            raise ArithmeticError(f"recursion identity fails at k={k}: {err:.3e}")
        worst = max(worst, err)
    out = [w.astype(float) for w in ws]
    if isinstance(v, DiscreteField):
        out = [v.with_values(w) for w in out]
    return (out, worst) if return_error else out


def cascade_identity_error(ws) -> float:
    """max_k max |w_{k+1} - (2 w_k - 1)| over a float64 cascade, relative to max(1, |w_{k+1}|)."""
    arrs = [w.values if isinstance(w, DiscreteField) else np.asarray(w) for w in ws]
    return max((float((np.abs(b - (2 * a - 1)) / np.maximum(1.0, np.abs(b))).max())
                for a, b in zip(arrs, arrs[1:])), default=0.0)


def oscillation(u: DiscreteField, x, r: float, min_nodes: int = 16) -> float:
    """max - min of u over the nodes of the numeric control ball B(x, r)."""
    mask = u.distances_from(x) <= r
    if np.count_nonzero(mask) < min_nodes:
        raise ResolutionError(f"only {np.count_nonzero(mask)} grid nodes inside B(x, {r})")
    vals = u.values[mask]
    return float(vals.max() - vals.min())


@dataclass
class OscillationLevel:
    r: float
    osc: float
    ratio: float
    predicted_cap: float
    half_measure: str
    zero_set_fraction: float


@dataclass
class OscillationReport:
    center: tuple
    levels: list = field(default_factory=list)

    @property
    def oscs(self) -> list:
        return [lv.osc for lv in self.levels]

    @property
    def ratios(self) -> list:
        return [lv.ratio for lv in self.levels[1:]]

    def strictly_decreasing(self) -> bool:
        o = self.oscs
        return all(b < a for a, b in zip(o, o[1:]))


def _normalized(u: DiscreteField, mask) -> np.ndarray:
    vals = u.values[mask]
    sup, inf = vals.max(), vals.min()
    osc = sup - inf
    return 2.0 / osc * (u.values - 0.5 * (sup + inf)) if osc > 0 else np.zeros_like(u.values)


def oscillation_decay_run(p: DegenerateProblem, x, r0: float, levels: int = 4,
                          lambda_provider=None, result: SolveResult | None = None) -> OscillationReport:
    """Oscillation of the solution over B(x, r0 / 2^l), l = 0..levels-1.

    Requires B(x, 3 r0) inside the rectangle.  ``lambda_provider(r)`` gives
    lambda(r) for the reported cap 1 - lambda(r)/2 (not asserted).
    """
    res = solve_problem(p) if result is None else result
    u = res.u
    dist = u.distances_from(x)
    if (dist[0, :] <= 3 * r0).any() or (dist[-1, :] <= 3 * r0).any() \
            or (dist[:, 0] <= 3 * r0).any() or (dist[:, -1] <= 3 * r0).any():
        raise ResolutionError("B(x, 3 r0) is not inside the rectangle")
    rep = OscillationReport(tuple(x))
    prev = None
    for lvl in range(levels):
        r = r0 / 2 ** lvl
        osc = oscillation(u, x, r)
        mask = dist <= r
        v = _normalized(u, mask)
        ball = cell_measure(u, mask)
        neg = cell_measure(u, mask & (v <= 0))
        pos = cell_measure(u, mask & (v >= 0))
        half = "v<=0" if neg >= 0.5 * ball else ("v>=0" if pos >= 0.5 * ball else "neither")
        lam = float(lambda_provider(r)) if lambda_provider is not None else math.nan
        rep.levels.append(OscillationLevel(r, osc, osc / prev if prev else math.nan,
                                           1.0 - lam / 2.0, half, neg / ball if ball else math.nan))
        prev = osc
    return rep


def _ball_height(g, x1, r, coef=None) -> float:
    if coef is not None:
        return r * float(np.max(coef(np.array([x1, x1 + r]))))
    try:
        return rstar_and_height(g, x1, r).h
    except BracketError:
        # f not increasing (e.g. constant): the ball is no taller than r * max f
        return r * float(max(g.f(x1), g.f(x1 + r)))


class RandomSolutionFactory:
    """Discrete solutions with seeded random-piecewise boundary data on a
    fixed grid; the LU factorisation is reused across seeds."""

    def __init__(self):
        self._lu = {}

    def __call__(self, setup, rng) -> DiscreteField:
        key = id(setup)
        p = DegenerateProblem(setup.geometry, setup.box, setup.shape, "random-piecewise",
                              int(rng.integers(2 ** 31)), setup.coef)
        system = assemble(p)
        if key not in self._lu:
            self._lu[key] = (setup, splu(system.matrix.tocsc()))
        lu = self._lu[key][1]
        u = system.boundary_values.copy()
        u[system.interior] = lu.solve(system.rhs)
        return setup.base.with_values(u)


def centered_problem(g: Geometry | None, x, r0: float, shape=(257, 257), boundary="random-piecewise",
                     seed: int = 0, coef=None, pad: float = 1.2) -> DegenerateProblem:
    """Rectangle sized to contain B(x, 3 r0) with margin."""
    half_w = 3 * r0 * pad
    half_h = _ball_height(g, x[0], 3 * r0, coef) * pad
    bounds = ((x[0] - half_w, x[0] + half_w), (x[1] - half_h, x[1] + half_h))
    return DegenerateProblem(g, bounds, shape, boundary, seed, coef)


_PROBLEM_KEYS = {"geometry", "rectangle", "resolution", "boundary", "seed"}


def problem_from_config(cfg: dict) -> DegenerateProblem:
    unknown = set(cfg) - _PROBLEM_KEYS
    if unknown:
        raise ValueError(f"unknown problem keys: {sorted(unknown)}")
    g = cfg["geometry"]
    if isinstance(g, dict):
        g = from_spec(g)
    elif isinstance(g, str):
        g = parse_geometry(g)
    rect = cfg["rectangle"]
    res = cfg.get("resolution", [129, 129])
    if isinstance(res, int):
        res = [res, res]
    return DegenerateProblem(g, ((rect[0], rect[1]), (rect[2], rect[3])), tuple(res),
                             cfg.get("boundary", "linear-x1"), int(cfg.get("seed", 0)))
