"""Analytic control-ball model for the metric ds^2 = dx1^2 + f(x1)^-2 dx2^2.

Geodesics leaving (x1, x2) to the right with constant lam satisfy

    ds/du  = lam / sqrt(lam^2 - f(u)^2),
    dx2/du = f(u)^2 / sqrt(lam^2 - f(u)^2),

and turn vertical where f(u) = lam.  All turning integrals have an inverse
square-root singularity at the upper end, removed by u = b - v^2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from ._quad import ConvergenceError, integrate
from .geometry import DomainError, Geometry
from .grid import GridOracle, oracle_around

__all__ = [
    "QuadratureError",
    "BracketError",
    "ResolutionWarning",
    "BallModel",
    "HeightProfile",
    "Cone",
    "regime",
    "geodesic_radius",
    "turning_radius",
    "turning_offset",
    "solve_lambda",
    "height_hstar",
    "rstar_and_height",
    "ball_volume",
    "cross_section",
    "radius_sequence",
    "control_distance",
    "kernel_K",
    "straight_across_integral",
    "annulus_measures",
    "ball_oracle",
]

RTOL = 1e-12


class QuadratureError(ArithmeticError):
    pass


class BracketError(ArithmeticError):
    pass


class ResolutionWarning(UserWarning):
    pass


_GL8 = np.polynomial.legendre.leggauss(8)


def _delta_F(g: Geometry, b: float, s):
    """F(b - s) - F(b) for s in (0, b]; short gaps integrate -F' instead of
    differencing F."""
    s = np.asarray(s, dtype=float)
    u = b - s
    near = s < 0.1 * b
    out = np.empty_like(s)
    if np.any(near):
        sn = s[near]
        nodes = b - 0.5 * sn[:, None] * (1.0 + _GL8[0])
        out[near] = -0.5 * sn * (g._dF(nodes) @ _GL8[1])
    far = ~near
    if np.any(far):
        uf = u[far]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            val = np.where(uf > 0, g._F(np.where(uf > 0, uf, b)) - float(g._F(np.float64(b))), np.inf)
        out[far] = val
    return out


def _turning_integral(g: Geometry, a: float, b: float, numerator: str, excess: float = 0.0) -> float:
    """Integral over (a, b) of N(u) / sqrt(excess + f(b)^2 - f(u)^2).

    ``numerator`` is "lam" (N = sqrt(excess + f(b)^2), arc length) or
    "f2" (N = f(u)^2, vertical rise).  Evaluated after dividing through by
    f(b)^2, so arc lengths stay finite where f itself underflows.
    """
    if b <= a:
        return 0.0
    fb = float(g.f(b))
    with np.errstate(divide="ignore", over="ignore"):
        q = excess / (fb * fb) if excess > 0 else 0.0
    if math.isinf(q):
        # f is negligible against lam on the whole interval
        return b - a if numerator == "lam" else 0.0
    lam_ratio = math.sqrt(q + 1.0)
    w = math.sqrt(b - a)

    def integrand(v):
        dF = _delta_F(g, b, v * v)
        den = q - np.expm1(-2.0 * dF)
        if np.any(den <= 0):
            raise QuadratureError("non-positive radicand: f not increasing on the interval")
        num = lam_ratio if numerator == "lam" else fb * np.exp(-2.0 * dF)
        return 2.0 * v * num / np.sqrt(den)

    try:
        val = integrate(integrand, 0.0, w, rtol=RTOL)
    except ConvergenceError as exc:
        raise QuadratureError(str(exc)) from None
    return val


def regime(g: Geometry, x1: float, r: float, n: int = 2) -> str:
    """'small' or 'large'; the threshold is 1/|F'(x1)| (n = 2) or 2/|F'(x1)|
    (n >= 3).  Ties go to 'small'."""
    c = 1.0 if n == 2 else 2.0
    return "small" if r * abs(float(g.dF(x1))) <= c else "large"


def geodesic_radius(g: Geometry, x1: float, x_end: float, lam: float) -> float:
    """Arc length of the geodesic with constant ``lam`` from x1 to x_end."""
    if x_end <= x1:
        return 0.0
    if x_end >= g.R:
        raise DomainError("x_end beyond the geometry domain")
    fb = float(g.f(x_end))
    if lam < fb * (1 - 1e-14):
        raise QuadratureError("lam <= f(x_end): the geodesic turns inside the interval")
    if math.isinf(lam):
        return x_end - x1
    return _turning_integral(g, x1, x_end, "lam", max(lam * lam - fb * fb, 0.0))


def height_hstar(g: Geometry, x1: float, t: float) -> float:
    """h*(x1, t): rise of the geodesic from x1 that turns at x1 + t."""
    if t <= 0:
        return 0.0
    if x1 + t >= g.R:
        raise DomainError("x1 + t beyond the geometry domain")
    return _turning_integral(g, x1, x1 + t, "f2")


def turning_radius(g: Geometry, x1: float, t: float) -> float:
    """Arc length from x1 to the turning point x1 + t."""
    if t <= 0:
        return 0.0
    if x1 + t >= g.R:
        raise DomainError("x1 + t beyond the geometry domain")
    return _turning_integral(g, x1, x1 + t, "lam")


def turning_offset(g: Geometry, x1: float, r: float) -> float:
    """r*(x1, r): horizontal offset of the vertical-tangent point of B((x1, 0), r)."""
    if r <= 0:
        return 0.0
    hi = min(r, (g.R - x1) * (1 - 1e-12))
    if hi <= 0:
        raise DomainError("x1 outside the geometry domain")
    if x1 > 0 and float(g.F(x1 + hi)) >= float(g.F(x1)):
        raise BracketError("f is not increasing: no turning geodesic exists")
    if turning_radius(g, x1, hi) < r:
        raise BracketError("ball reaches the edge of the geometry domain")
    lo = hi
    for _ in range(200):
        lo *= 0.25
        if turning_radius(g, x1, lo) < r:
            break
    else:
        raise BracketError("no sign change found for the turning offset")
    return brentq(lambda t: turning_radius(g, x1, t) - r, lo, hi, xtol=1e-300, rtol=4e-15, maxiter=200)


def solve_lambda(g: Geometry, x1: float, r: float) -> float:
    """lam of the turning geodesic of radius r, i.e. f(x1 + r*)."""
    return float(g.f(x1 + turning_offset(g, x1, r)))


@dataclass(frozen=True)
class HeightProfile:
    h: float
    r_star: float
    lam: float
    regime: str
    surrogate: float

    def h_star(self, g: Geometry, x1: float, t: float) -> float:
        return height_hstar(g, x1, t)


@dataclass(frozen=True)
class BallModel:
    center: tuple
    r: float
    n: int
    regime: str

    @classmethod
    def of(cls, g: Geometry, center, r: float, n: int = 2) -> "BallModel":
        return cls(tuple(center), float(r), n, regime(g, center[0], r, n))


def rstar_and_height(g: Geometry, x1: float, r: float) -> HeightProfile:
    """Exact r* and height h = h*(x1, r*), with the regime's asymptotic surrogate."""
    if x1 <= 0 or r <= 0 or x1 + r >= g.R:
        raise DomainError("need x1 > 0, r > 0 and x1 + r < R")
    t = turning_offset(g, x1, r)
    h = height_hstar(g, x1, t)
    reg = regime(g, x1, r)
    if reg == "small":
        sur = r * float(g.f(x1))
    else:
        sur = float(g.f(x1 + r)) / abs(float(g.dF(x1 + r)))
    return HeightProfile(h, t, float(g.f(x1 + t)), reg, sur)


def ball_volume(g: Geometry, n: int, x1, r):
    """Regime formula for |B(x, r)| in n dimensions (vectorised in x1, r)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    x1 = np.asarray(x1, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(x1 <= 0) or np.any(r <= 0) or np.any(x1 + r >= g.R):
        raise DomainError("need x1 > 0, r > 0, x1 + r < R")
    c = 1.0 if n == 2 else 2.0
    dF0 = np.abs(g.dF(x1))
    fe = g.f(x1 + r)
    dFe = np.abs(g.dF(x1 + r))
    small = r ** n * g.f(x1)
    with np.errstate(divide="ignore", over="ignore"):
        large = fe / dFe**n * (r * dFe) ** (n / 2 - 1)
    out = np.where(r * dF0 <= c, small, large)
    return float(out) if out.ndim == 0 else out


def cross_section(g: Geometry, n: int, x1, r):
    """Cross-sectional size s_r of the n-dimensional kernel (n >= 3)."""
    if n < 3:
        raise ValueError("cross_section is defined for n >= 3")
    x1 = np.asarray(x1, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(x1 <= 0) or np.any(r <= 0) or np.any(x1 + r >= g.R):
        raise DomainError("need x1 > 0, r > 0, x1 + r < R")
    dF0 = np.abs(g.dF(x1))
    fe = g.f(x1 + r)
    dFe = np.abs(g.dF(x1 + r))
    lam = np.sqrt(r * dFe)
    small = r ** (n - 1) * g.f(x1)
    large = fe * lam ** (n - 2) / dFe ** (n - 1)
    out = np.where(r * dF0 < 2.0, small, large)
    return float(out) if out.ndim == 0 else out


def radius_sequence(g: Geometry, x1: float, r0: float, k_max: int, n: int = 2) -> list:
    """r_0 = r0, r_{k+1} = r*(x1, r_k) while r_k >= c/|F'(x1)|, else r_k / 2.

    c = 1 in the plane; for n >= 3 the switch follows the n-dimensional
    volume law, c = 2.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    thresh = (1.0 if n == 2 else 2.0) / abs(float(g.dF(x1)))
    rs = [float(r0)]
    for _ in range(k_max):
        rk = rs[-1]
        rs.append(turning_offset(g, x1, rk) if rk >= thresh else 0.5 * rk)
    return rs


# --------------------------------------------------------------------------
# exact 2D distance by shooting

def _monotone_rise(g, a, b, mu):
    """Rise and length of the non-turning geodesic from a to b with lam = f(b)/mu."""
    fb = float(g.f(b))
    excess = fb * fb * (1.0 / (mu * mu) - 1.0)
    return (_turning_integral(g, a, b, "f2", excess), _turning_integral(g, a, b, "lam", excess))


def control_distance(g: Geometry, p, q) -> float:
    """Control distance between two points of the half plane x1 > 0, by
    shooting along the one-parameter family of geodesics."""
    (p1, p2), (q1, q2) = p, q
    if p1 > q1:
        (p1, p2), (q1, q2) = (q1, q2), (p1, p2)
    if p1 <= 0:
        raise DomainError("control_distance needs x1 > 0")
    dx, v = q1 - p1, abs(q2 - p2)
    if v == 0.0:
        return dx
    if dx > 0:
        hmax = height_hstar(g, p1, dx)
        if v <= hmax:
            if v == hmax:
                return turning_radius(g, p1, dx)
            mu = brentq(lambda m: _monotone_rise(g, p1, q1, m)[0] - v, 1e-150, 1.0,
                        xtol=1e-300, rtol=1e-14, maxiter=300)
            return _monotone_rise(g, p1, q1, mu)[1]

    def rise(t):
        lam_excess = float(g.f(p1 + t)) ** 2 - float(g.f(q1)) ** 2
        back = _turning_integral(g, p1, q1, "f2", lam_excess) if dx > 0 else 0.0
        return 2.0 * height_hstar(g, p1, t) - back

    lo = dx
    hi = max(2 * dx, 1e-3 * p1, 1e-300)
    while rise(hi) < v:
        lo, hi = hi, 2 * hi
        if p1 + hi >= g.R:
            raise DomainError("geodesic leaves the geometry domain")
    t = brentq(lambda s: rise(s) - v, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=300)
    lam_excess = float(g.f(p1 + t)) ** 2 - float(g.f(q1)) ** 2
    back = _turning_integral(g, p1, q1, "lam", lam_excess) if dx > 0 else 0.0
    return 2.0 * turning_radius(g, p1, t) - back


# --------------------------------------------------------------------------
# cones and kernels

class Cone:
    """Forward cone Gamma(x, r) and its dual Gamma*(y, r) in 2D."""

    def __init__(self, g: Geometry, x, r: float):
        self.g = g
        self.x = (float(x[0]), float(x[1]))
        self.r = float(r)

    def _member(self, x, y, r):
        g = self.g
        s = y[0] - x[0]
        if not (0.0 <= s <= r):
            return False
        v = abs(y[1] - x[1])
        if v >= height_hstar(g, x[0], s):
            return False
        if turning_radius(g, x[0], s) < r:
            return True
        return control_distance(g, x, y) < r

    def contains(self, y) -> bool:
        """y in Gamma(x, r)."""
        return self._member(self.x, y, self.r)

    @staticmethod
    def dual_contains(g: Geometry, y, x, r: float) -> bool:
        """x in Gamma*(y, r) = {x in B(y,r): y1 - r <= x1 <= y1, |x2 - y2| < h_{x,y}}."""
        s = y[0] - x[0]
        if not (y[0] - r <= x[0] <= y[0]):
            return False
        if abs(x[1] - y[1]) >= height_hstar(g, x[0], s):
            return False
        if turning_radius(g, x[0], s) < r:
            return True
        return control_distance(g, y, x) < r

    def annuli(self, k_max: int = 8) -> list:
        """E(x, r_k) as (y1 interval, lateral bound, regime) for k = 0..k_max."""
        g, x1 = self.g, self.x[0]
        rs = radius_sequence(g, x1, self.r, k_max + 1)
        thresh = 1.0 / abs(float(g.dF(x1)))
        out = []
        for k in range(k_max + 1):
            lo, hi = x1 + rs[k + 1], x1 + rs[k]
            if rs[k] >= thresh:
                out.append(((lo, hi), None, "large"))
            else:
                out.append(((lo, hi), height_hstar(g, x1, turning_offset(g, x1, rs[k])), "small"))
        return out


def kernel_K(g: Geometry, n: int, x, y, r: float, form: str = "exact") -> float:
    """K_r(x, y) = dhat(x,y) / |B(x, d(x,y))| on the cone, 0 off it.

    ``form="simplified"`` returns 1/h_{x,y} on the cone (2D only).
    For n >= 3 the kernel is 1/s_{y1-x1} on the annular cone built from
    the radius sequence.
    """
    if n == 2:
        if not Cone(g, x, r).contains(y):
            return 0.0
        s = y[0] - x[0]
        if form == "simplified":
            return 1.0 / height_hstar(g, x[0], s)
        d = control_distance(g, x, y)
        dhat = min(d, 1.0 / abs(float(g.dF(x[0] + d))))
        return dhat / ball_volume(g, 2, x[0], d)
    s = y[0] - x[0]
    if not (0 < s <= r):
        return 0.0
    rs = radius_sequence(g, x[0], r, 60, n)
    for k in range(len(rs) - 1):
        if rs[k + 1] <= s <= rs[k]:
            lat = math.sqrt(rs[k] ** 2 - rs[k + 1] ** 2)
            h = height_hstar(g, x[0], turning_offset(g, x[0], rs[k]))
            mid = np.asarray(y[1:-1], dtype=float) - np.asarray(x[1:-1], dtype=float)
            if np.linalg.norm(mid) <= lat and abs(y[-1] - x[-1]) < h:
                return 1.0 / cross_section(g, n, x[0], s)
            return 0.0
    return 0.0


def ball_oracle(g: Geometry, center, r: float, n: int = 257, pad: float = 1.15) -> GridOracle:
    """Grid oracle on a rectangle just containing B(center, r)."""
    x1 = center[0]
    h = rstar_and_height(g, x1, r).h
    return oracle_around(g, center, r * 1.02, h * pad, n)


def _straight_2d(g, x, r, n_grid, form="exact"):
    x1 = x[0]
    h = rstar_and_height(g, x1, r).h
    oracle = GridOracle(g, ((x1, x1 + r), (x[1] - 1.1 * h, x[1] + 1.1 * h)),
                        (n_grid, n_grid | 1))
    dist = oracle.distances_from(x)
    X1, X2 = oracle.mesh()
    s = X1 - x1
    hs = np.array([height_hstar(g, x1, si) if si > 0 else 0.0 for si in oracle.x1 - x1])
    in_cone = (np.abs(X2 - x[1]) < hs[:, None]) & (dist < r) & (s > 0)
    d = np.where(in_cone, dist, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        dhat = np.minimum(d, 1.0 / np.abs(g._dF(x1 + np.nan_to_num(d, nan=r / 2))))
        vol = np.where(in_cone, ball_volume(g, 2, x1, np.where(in_cone, d, r / 2)), np.nan)
        if form == "simplified":
            K = np.where(in_cone, 1.0 / np.where(hs > 0, hs, 1.0)[:, None], 0.0)
        else:
            K = np.where(in_cone, dhat / vol, 0.0)
    # endpoint columns carry half weight (trapezoid in x1)
    w = np.ones(oracle.shape[0])
    w[0] = w[-1] = 0.5
    return float(np.sum(K * w[:, None]) * oracle.cell_area)


def _straight_dual_2d(g, y, r, n_grid, form="exact"):
    """Integral over x in Gamma*(y, r) of K_r(x, y) (y fixed, x to the left)."""
    y1 = y[0]
    if y1 - r <= 0:
        raise DomainError("dual cone needs y1 - r > 0")
    h = max(rstar_and_height(g, y1 - r, r).h, rstar_and_height(g, y1 - r / 2, r / 2).h)
    oracle = GridOracle(g, ((y1 - r, y1), (y[1] - 1.1 * h, y[1] + 1.1 * h)), (n_grid, n_grid | 1))
    dist = oracle.distances_from(y)
    X1, X2 = oracle.mesh()
    s = y1 - oracle.x1
    hs = np.array([height_hstar(g, x1, si) if si > 0 else 0.0 for x1, si in zip(oracle.x1, s)])
    in_cone = (np.abs(X2 - y[1]) < hs[:, None]) & (dist < r) & (s[:, None] > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        if form == "simplified":
            K = np.where(in_cone, 1.0 / np.where(hs > 0, hs, 1.0)[:, None], 0.0)
        else:
            d = np.where(in_cone, dist, r / 2)
            dhat = np.minimum(d, 1.0 / np.abs(g._dF(X1 + d)))
            vol = ball_volume(g, 2, X1, d)
            K = np.where(in_cone, dhat / vol, 0.0)
    w = np.ones(oracle.shape[0])
    w[0] = w[-1] = 0.5
    return float(np.sum(K * w[:, None]) * oracle.cell_area)


def _inverse_section_integral(g, n, x1, a, b):
    """Integral of 1/s_t over t in (a, b), split at the regime switch."""
    cut = 2.0 / abs(float(g.dF(x1)))
    pieces = [(a, min(b, cut)), (max(a, cut), b)]
    return sum(integrate(lambda t: 1.0 / cross_section(g, n, x1, t), lo, hi, rtol=1e-10)
               for lo, hi in pieces if hi > lo)


def _straight_nd(g, n, x1, r, k_max=200):
    rs = radius_sequence(g, x1, r, k_max, n)
    total = 0.0
    for k in range(k_max):
        a, b = rs[k + 1], rs[k]
        if b < 1e-9 * r:
            break
        lat = math.sqrt(b * b - a * a) ** (n - 2)
        h = height_hstar(g, x1, turning_offset(g, x1, b))
        inner = _inverse_section_integral(g, n, x1, a, b)
        total += lat * 2.0 * h * inner
    return total


def straight_across_integral(g: Geometry, n: int, x, r: float, n_grid: int = 257,
                             form: str = "exact", dual: bool = False) -> tuple:
    """Integral of K_r(x, .) over the cone; returns (value, value / r).

    n = 2 integrates the exact kernel over the numeric cone (grid oracle
    distances); n >= 3 sums the annular s_r form.  ``form="simplified"``
    uses the 2D kernel 1/h_{x,y}.  ``dual=True`` (2D) treats the point as
    y and integrates K_r(., y) over the dual cone Gamma*(y, r).
    """
    if n == 2:
        val = (_straight_dual_2d if dual else _straight_2d)(g, x, r, n_grid, form)
    else:
        val = _straight_nd(g, n, x[0], r)
    return val, val / r


def annulus_measures(g: Geometry, x, r0: float, k_max: int, n_grid: int = 257) -> list:
    """Measured (|E(x,r_k)|, |B(x,r_k)|, ratio, |E cap B|) for k = 0..k_max.

    |E| is integrated from its defining lateral bound; |B| and |E cap B|
    are counted on a grid oracle resolving B(x, r_k).
    """
    x1 = x[0]
    rs = radius_sequence(g, x1, r0, k_max + 1)
    thresh = 1.0 / abs(float(g.dF(x1)))
    rows = []
    for k in range(k_max + 1):
        rk, rk1 = rs[k], rs[k + 1]
        if rk >= thresh:
            area, _ = quad(lambda s: 2.0 * height_hstar(g, x1, s), rk1, rk, epsrel=1e-9, limit=200)
            lateral = lambda s: np.array([height_hstar(g, x1, si) if si > 0 else 0.0 for si in s])
        else:
            hk = height_hstar(g, x1, turning_offset(g, x1, rk))
            area = 2.0 * hk * (rk - rk1)
            lateral = lambda s, hk=hk: np.full_like(s, hk)
        oracle = ball_oracle(g, x, rk, n_grid)
        if min(rk / oracle.h1, rstar_and_height(g, x1, rk).h / oracle.h2) < 32:
            warnings.warn("grid resolution below 32 cells across the ball", ResolutionWarning)
        dist = oracle.distances_from(x)
        ball = dist <= rk
        X1, X2 = oracle.mesh()
        s = oracle.x1 - x1
        lat = lateral(s)
        inE = (s[:, None] >= rk1) & (s[:, None] < rk) & (np.abs(X2 - x[1]) < lat[:, None])
        b_area = np.count_nonzero(ball) * oracle.cell_area
        eb = np.count_nonzero(ball & inE) * oracle.cell_area
        rows.append((area, b_area, area / b_area, eb))
    return rows
