"""Degeneracy profiles F = -ln f and the structure-condition audit.

A geometry is the function F on (0, R) that fixes the coefficient f(x1)^2
of the degenerate operator.  Built-in families:

* ``power_log(k, sigma)``  F(x) = ln(1/x) * (ln^(k)(c/x))^sigma
* ``inverse_power(sigma)`` F(x) = x^(-sigma)
* ``finite_type(alpha)``   F(x) = alpha * ln(1/x), i.e. f(x) = x^alpha
* ``constant(c)``          F(x) = -ln c (elliptic; fails the audit)

The argument scale ``c`` of the power-log family defaults to the smallest
tower e^e^...^e for which ln^(k)(c/x) >= 1 on all of (0, 1), so that the
family is a valid geometry on (0, 1) and not only near the origin.  Pass
``scale=1.0`` for the unshifted formula.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np

__all__ = [
    "DomainError",
    "Geometry",
    "StructureAuditConfig",
    "ConditionResult",
    "AuditReport",
    "iterated_log",
    "tower",
    "power_log",
    "inverse_power",
    "finite_type",
    "constant",
    "custom",
    "from_spec",
    "parse_geometry",
    "audit_structure_conditions",
]


class DomainError(ValueError):
    """Raised when a profile is evaluated outside its domain."""


def tower(k: int) -> float:
    """Return exp applied k times to 1 (tower(0) = 1, tower(1) = e, ...)."""
    value = 1.0
    for _ in range(k):
        value = math.exp(value)
    return value


def iterated_log(k: int, x: float) -> float:
    """ln applied k times to x; k = 0 returns x.

    Evaluated at 40 digits so that arguments close to a tower value
    (where an intermediate is close to 1) keep full double accuracy.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return float(x)
    with mpmath.workdps(40):
        value = mpmath.mpf(x)
        for i in range(k):
            if value <= 0:
                raise DomainError(f"iterated log: step {i} argument {value} <= 0")
            value = mpmath.log(value)
        return float(value)


def _iterated_log_derivs(k, q, x):
    """l_k = ln^(k)(q) with q = c/x, and its first two x-derivatives."""
    l = q
    dl = -q / x
    d2l = 2.0 * q / x**2
    for _ in range(k):
        if np.any(l <= 0):
            raise DomainError("iterated log of a non-positive argument")
        l, dl, d2l = np.log(l), dl / l, (d2l * l - dl**2) / l**2
    return l, dl, d2l


@dataclass(frozen=True)
class Geometry:
    """A degeneracy profile with evaluators for F, F', F'' on (0, R).

    ``kind`` is one of ``"Fks"``, ``"Dsigma"``, ``"finite"``, ``"constant"``
    or ``"custom"``; ``params`` holds the family parameters.
    """

    kind: str
    params: dict
    R: float
    _F: Callable = field(repr=False, compare=False)
    _dF: Callable = field(repr=False, compare=False)
    _d2F: Callable = field(repr=False, compare=False)
    _f: Callable | None = field(default=None, repr=False, compare=False)
    _log_growth: Callable | None = field(default=None, repr=False, compare=False)

    @property
    def name(self) -> str:
        p = self.params
        if self.kind == "Fks":
            return f"Fks:{p['k']},{p['sigma']:g}"
        if self.kind == "Dsigma":
            return f"Dsigma:{p['sigma']:g}"
        if self.kind == "finite":
            return f"finite:{p['alpha']:g}"
        if self.kind == "constant":
            return f"constant:{p['c']:g}"
        return p.get("name", "custom")

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0) or np.any(x >= self.R):
            raise DomainError(f"{self.name}: x outside (0, {self.R})")
        return x

    def F(self, x):
        return self._F(self._check(x))

    def dF(self, x):
        return self._dF(self._check(x))

    def d2F(self, x):
        return self._d2F(self._check(x))

    def f(self, x):
        """Coefficient f = exp(-F); f(0) = 0 is allowed as a limit value."""
        x = np.asarray(x, dtype=float)
        if self._f is not None:
            return self._f(x)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            safe = np.where(x > 0, x, 0.5 * self.R)
            out = np.exp(-self._F(safe))
        return np.where(x > 0, out, 0.0)

    def eval(self, x: float) -> dict:
        x = float(self._check(x))
        F = float(self._F(x))
        return {"F": F, "dF": float(self._dF(x)), "d2F": float(self._d2F(x)),
                "f": math.exp(-F)}

    def growth(self, r):
        """Default growth map G(r) = F(r) / ln(1/r) used by the classifier."""
        r = self._check(r)
        return self._F(r) / np.log(1.0 / r)

    def log_growth(self, y):
        """ln G at scale y = ln ln(1/r), in mpmath (handles astronomically small r).

        Returns ``mpmath.inf`` once G overflows any representable exponent
        and ``-mpmath.inf`` for G = 0.
        """
        y = mpmath.mpf(y)
        if self._log_growth is not None:
            return self._log_growth(y)
        # custom profiles: only representable radii
        s = mpmath.exp(y)
        if s > 700:
            raise DomainError("custom geometry has no deep log-space growth model")
        r = float(mpmath.exp(-s))
        g = float(self.growth(r))
        return mpmath.log(g) if g > 0 else -mpmath.inf


def _ln_s_plus(y, shift):
    """ln(exp(y) + shift) for mpf y without forming exp(y) when it is huge."""
    if y > 50:
        return y + mpmath.log1p(shift * mpmath.exp(-y)) if y < 1e6 else y
    return mpmath.log(mpmath.exp(y) + shift)


def power_log(k: int, sigma: float, scale: float | None = None, R: float | None = None) -> Geometry:
    """F_{k,sigma}(x) = ln(1/x) * (ln^(k)(scale/x))^sigma."""
    if k < 0 or sigma <= 0:
        raise ValueError("need k >= 0 and sigma > 0")
    c = tower(k) if scale is None else float(scale)
    if R is None:
        R = 1.0 if k == 0 else min(1.0, c / tower(k - 1))

    def parts(x):
        L = np.log(1.0 / x)
        l, dl, d2l = _iterated_log_derivs(k, c / x, x)
        if np.any(l <= 0):
            raise DomainError(f"ln^({k})({c:g}/x) <= 0")
        P = l**sigma
        dP = sigma * l ** (sigma - 1) * dl
        d2P = sigma * (sigma - 1) * l ** (sigma - 2) * dl**2 + sigma * l ** (sigma - 1) * d2l
        return L, P, dP, d2P

    def F(x):
        L, P, _, _ = parts(x)
        return L * P

    def dF(x):
        L, P, dP, _ = parts(x)
        return -P / x + L * dP

    def d2F(x):
        L, P, dP, d2P = parts(x)
        return P / x**2 - 2.0 * dP / x + L * d2P

    lnc = math.log(c)

    def log_growth(y):
        # G = (ln^(k)(c/r))^sigma with ln(1/r) = exp(y)
        if k == 0:
            if y > 1e4:
                return mpmath.inf
            return sigma * (mpmath.exp(y) + lnc)
        v = _ln_s_plus(y, lnc)  # ln ln(c/r)
        for _ in range(k - 1):
            if v <= 0:
                raise DomainError("iterated log of a non-positive argument")
            v = mpmath.log(v)
        return sigma * v

    return Geometry("Fks", {"k": int(k), "sigma": float(sigma), "scale": c}, float(R),
                    F, dF, d2F, None, log_growth)


def inverse_power(sigma: float, R: float = 1.0) -> Geometry:
    """D_sigma(x) = x^(-sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    def log_growth(y):
        if y > 1e4:
            return mpmath.inf
        return sigma * mpmath.exp(y) - y

    return Geometry(
        "Dsigma", {"sigma": float(sigma)}, float(R),
        lambda x: x ** (-sigma),
        lambda x: -sigma * x ** (-sigma - 1),
        lambda x: sigma * (sigma + 1) * x ** (-sigma - 2),
        None, log_growth,
    )


def finite_type(alpha: float, R: float = 1.0) -> Geometry:
    """f(x) = x^alpha, F(x) = alpha * ln(1/x)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    la = mpmath.log(alpha)
    return Geometry(
        "finite", {"alpha": float(alpha)}, float(R),
        lambda x: alpha * np.log(1.0 / x),
        lambda x: -alpha / x,
        lambda x: alpha / x**2,
        lambda x: np.where(np.asarray(x) > 0, np.abs(x) ** alpha, 0.0),
        lambda y: la,
    )


def constant(c: float = 1.0, R: float = 1.0) -> Geometry:
    """f identically c; the elliptic case, excluded by condition (1)."""
    if not 0 < c <= 1:
        raise ValueError("need 0 < c <= 1")
    Fc = -math.log(c)
    return Geometry(
        "constant", {"c": float(c)}, float(R),
        lambda x: np.full_like(x, Fc, dtype=float),
        lambda x: np.zeros_like(x, dtype=float),
        lambda x: np.zeros_like(x, dtype=float),
        lambda x: np.full_like(np.asarray(x, dtype=float), c),
        lambda y: mpmath.log(Fc) - y if Fc > 0 else -mpmath.inf,
    )


def custom(F, dF, d2F, R: float, name: str = "custom", f=None) -> Geometry:
    """Wrap user-supplied evaluators (no symbolic differentiation is done)."""
    return Geometry("custom", {"name": name}, float(R), F, dF, d2F, f, None)


def from_spec(spec: dict) -> Geometry:
    """Build a geometry from a run-config dict such as
    ``{"family": "Fks", "k": 3, "sigma": 0.5}``."""
    family = spec.get("family")
    R = spec.get("R")
    kw = {} if R is None else {"R": float(R)}
    if family == "Fks":
        scale = spec.get("scale")
        return power_log(int(spec["k"]), float(spec["sigma"]),
                         None if scale in (None, "regular") else float(scale), **kw)
    if family == "Dsigma":
        return inverse_power(float(spec["sigma"]), **kw)
    if family == "finite":
        return finite_type(float(spec.get("alpha", 1.0)), **kw)
    if family == "constant":
        return constant(float(spec.get("c", 1.0)), **kw)
    raise ValueError(f"unknown geometry family {family!r}")


def parse_geometry(text: str) -> Geometry:
    """Parse the short form used on the command line: ``Fks:3,0.5``,
    ``Dsigma:0.5``, ``finite:1``, ``constant`` or ``constant:0.5``."""
    family, _, rest = text.partition(":")
    args = [a for a in rest.split(",") if a]
    try:
        if family == "Fks":
            return power_log(int(args[0]), float(args[1]))
        if family == "Dsigma":
            return inverse_power(float(args[0]))
        if family == "finite":
            return finite_type(float(args[0]) if args else 1.0)
        if family == "constant":
            return constant(float(args[0]) if args else 1.0)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"bad geometry {text!r}: {exc}") from None
    raise ValueError(f"unknown geometry family {family!r}")


# --------------------------------------------------------------------------
# structure conditions

@dataclass(frozen=True)
class StructureAuditConfig:
    sample_count: int = 200
    epsilon: float = 0.1
    C: float = 8.0
    tolerance: float = 1e-9
    growth_threshold: float = 1e3
    comparability: float = 8.0

    def __post_init__(self):
        if self.sample_count < 16:
            raise ValueError("sample_count must be >= 16")
        if self.epsilon <= 0 or self.C <= 0:
            raise ValueError("epsilon and C must be positive")


@dataclass(frozen=True)
class ConditionResult:
    passed: bool
    witness: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class AuditReport:
    geometry: str
    interval: tuple
    conditions: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def failed(self) -> list:
        return [k for k, c in self.conditions.items() if not c.passed]


def audit_structure_conditions(g: Geometry, interval, cfg: StructureAuditConfig | None = None) -> AuditReport:
    """Check the five structure conditions on geometric samples of ``interval``.

    Condition (1) cannot be tested as a limit.  It is certified when F grows
    monotonically toward the left end and either F(a) exceeds
    ``cfg.growth_threshold`` or -x F'(x) >= epsilon on all samples, which
    forces F(x) >= F(a) + epsilon * ln(a/x) -> infinity.
    """
    cfg = cfg or StructureAuditConfig()
    a, b = map(float, interval)
    if not (0 < a < b <= g.R):
        raise DomainError(f"interval {interval} not inside (0, {g.R}]")
    b_eff = min(b, g.R * (1 - 1e-12))
    xs = np.geomspace(a, b_eff, cfg.sample_count)
    results = {}
    try:
        F = np.asarray(g.F(xs), dtype=float)
        dF = np.asarray(g.dF(xs), dtype=float)
        d2F = np.asarray(g.d2F(xs), dtype=float)
    except DomainError as exc:
        fail = ConditionResult(False, a, f"evaluation failed: {exc}")
        return AuditReport(g.name, (a, b), {i: fail for i in range(1, 6)})

    tol = cfg.tolerance
    rate = -xs * dF

    # (1) unbounded growth at 0
    drops = np.nonzero(~(F[:-1] > F[1:]))[0]
    monotone = len(drops) == 0
    if not monotone:
        results[1] = ConditionResult(False, float(xs[drops[0]]), "F not increasing toward 0")
    elif F[0] >= cfg.growth_threshold:
        results[1] = ConditionResult(True, a, f"F(a) = {F[0]:.6g} above threshold")
    elif np.all(rate >= cfg.epsilon):
        results[1] = ConditionResult(True, a, "-xF' >= epsilon forces logarithmic blow-up")
    else:
        i = int(np.argmin(rate))
        results[1] = ConditionResult(False, float(xs[i]), "F bounded near 0 on the sampled evidence")

    # (2) F' < 0 < F''
    bad = np.nonzero(~((dF < 0) & (d2F > 0)))[0]
    results[2] = ConditionResult(len(bad) == 0, float(xs[bad[0]]) if len(bad) else None,
                                 "sign of F' or F''" if len(bad) else "")

    # (3) doubling of |F'| over r/2 < x < 2r < R; |F'| is monotone so the ends suffice
    worst, wx = 1.0, None
    for r in xs:
        if 2 * r >= g.R:
            continue
        lo = max(r / 2 * (1 + 1e-12), a / 2)
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.abs(g.dF(np.array([lo, 2 * r]))) / abs(g.dF(r))
        except DomainError:
            continue
        m = max(q.max(), 1 / q.min()) if np.all(q > 0) else np.inf
        if m > worst:
            worst, wx = m, float(r)
    results[3] = ConditionResult(bool(worst <= cfg.C), wx, f"max doubling ratio {worst:.4g}")

    # (4) 1/(-xF') nondecreasing and bounded by 1/epsilon
    with np.errstate(divide="ignore"):
        inv = np.where(rate > 0, 1.0 / rate, np.inf)
    dec = np.nonzero(inv[1:] < inv[:-1] * (1 - tol))[0]
    big = np.nonzero(inv > 1 / cfg.epsilon)[0]
    if len(big):
        results[4] = ConditionResult(False, float(xs[big[0]]), "1/(-xF') exceeds 1/epsilon")
    elif len(dec):
        results[4] = ConditionResult(False, float(xs[dec[0] + 1]), "1/(-xF') decreasing")
    else:
        results[4] = ConditionResult(True, None, f"max 1/(-xF') = {inv.max():.4g}")

    # (5) x F''/(-F') comparable to 1
    with np.errstate(divide="ignore", invalid="ignore"):
        q5 = xs * d2F / -dF
    K = cfg.comparability
    bad5 = np.nonzero(~((q5 >= 1 / K) & (q5 <= K)))[0]
    finite = q5[np.isfinite(q5)]
    span = f"[{finite.min():.4g}, {finite.max():.4g}]" if finite.size else "undefined"
    results[5] = ConditionResult(len(bad5) == 0, float(xs[bad5[0]]) if len(bad5) else None,
                                 f"xF''/(-F') range {span}")
    return AuditReport(g.name, (a, b), results)
