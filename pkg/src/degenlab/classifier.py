"""Continuity prediction from the summability of the oscillation gains.

With A_N(r) = C1 exp(C2 G(r)^(1/N)) and delta(r) = (2 A_N(3r))^-2, the
per-scale gain is lambda_j = 2^-(3 + C3/delta(r_j)^2) on r_j = r0/4^j.
Continuity is predicted when sum lambda_j diverges.

Everything is carried in log space with mpmath.  For the built-in
geometries ln G is available as a function of y = ln ln(1/r), which lets
the tail test run at scales far below the smallest double: the relevant
crossover for F_{3,sigma} sits near ln ln j ~ 10^6.

Verdicts come from Bertrand's exponent B = (ln(1/lambda_j) - ln j)/ln ln j
over a tail: all B <= 1 - margin means divergent (lambda_j dominates
1/(j ln^(1-m) j)), all B >= 1 + margin convergent.  The cruder exponent
L = ln(1/lambda_j)/ln j is reported too and names the method when it
already settles the case.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath

from .geometry import DomainError, Geometry, _ln_s_plus, tower

__all__ = [
    "DeltaProfile", "GainModel", "SequenceModel", "TailVerdict", "ClassificationReport",
    "delta", "ln_delta", "lambda_at", "lambda_sequence", "summability_verdict", "classify",
    "minimal_sigma", "validate_report",
]

mpmath.mp.dps = max(mpmath.mp.dps, 30)

LN2 = mpmath.log(2)
LN3 = mpmath.log(3)
LN4 = mpmath.log(4)
# exp of anything above this is treated as infinite: it already dwarfs any
# tail scale used here and exact evaluation would need astronomical precision
EXP_CAP = 1e5


@dataclass(frozen=True)
class DeltaProfile:
    """Constants of A_N and the growth map.

    ``log_growth`` maps y = ln ln(1/r) to ln G (mpmath); when omitted the
    geometry's default G = F/ln(1/r) is used.  ``growth_name`` is echoed in
    reports.
    """

    C1: float = 1.0
    C2: float = 1.0
    N: float = 1.0
    geometry: Geometry | None = None
    log_growth: object = None
    growth_name: str = "F(r)/ln(1/r)"

    def __post_init__(self):
        if self.C1 <= 0 or self.C2 < 0 or self.N < 1:
            raise ValueError("need C1 > 0, C2 >= 0, N >= 1")
        if self.geometry is None and self.log_growth is None and self.C2 != 0:
            raise ValueError("profile needs a geometry or a growth map")

    def ln_G(self, y):
        if self.C2 == 0:
            return -mpmath.inf
        if self.log_growth is not None:
            return mpmath.mpf(self.log_growth(mpmath.mpf(y)))
        return self.geometry.log_growth(y)

    def ln_A(self, y):
        """ln A_N at the radius whose ln ln(1/.) is y."""
        lg = self.ln_G(y)
        if lg == -mpmath.inf:
            return mpmath.log(self.C1)
        return mpmath.log(self.C1) + self.C2 * _exp(lg / self.N)

    def ln_delta_at(self, y3):
        """ln delta(r) given y3 = ln ln(1/(3r))."""
        return -2 * LN2 - 2 * self.ln_A(y3)

    def constants(self) -> dict:
        return {"C1": self.C1, "C2": self.C2, "N": self.N}


def _exp(z):
    return mpmath.inf if z > EXP_CAP else mpmath.exp(z)


def _y_of(r):
    r = mpmath.mpf(r)
    if not 0 < r < 1:
        raise DomainError("need 0 < r < 1")
    L = mpmath.log(1 / r)
    if L <= 0:
        raise DomainError("need ln(1/r) > 0")
    return mpmath.log(L)


def ln_delta(profile: DeltaProfile, r) -> mpmath.mpf:
    if profile.geometry is not None and 3 * r >= profile.geometry.R:
        raise DomainError("3r outside the geometry's domain")
    return profile.ln_delta_at(_y_of(3 * mpmath.mpf(r)))


def delta(profile: DeltaProfile, r: float) -> float:
    """delta(r) = (2 A_N(3r))^-2."""
    return float(mpmath.exp(ln_delta(profile, r)))


def _ln_ratio_gain(ln_d, C3):
    """q = ln(C3 / delta^2)."""
    return mpmath.log(C3) - 2 * ln_d


def _ln_inv_lambda(q):
    """ln(1/lambda) = (3 + e^q) ln 2."""
    if q == mpmath.inf:
        return mpmath.inf
    return (3 + _exp(q)) * LN2


def lambda_at(profile: DeltaProfile, r: float, C3: float = 1.0) -> float:
    """Gain lambda(r) = 2^-(3 + C3/delta(r)^2) as a float (0.0 on underflow)."""
    ll = -_ln_inv_lambda(_ln_ratio_gain(ln_delta(profile, r), C3))
    return float(mpmath.exp(ll)) if ll > -745 else 0.0


def _lnln_inv_lambda(q):
    if q == mpmath.inf:
        return mpmath.inf
    big = max(q, LN3)
    return mpmath.log(LN2) + big + mpmath.log(mpmath.exp(LN3 - big) + mpmath.exp(q - big))


@dataclass
class GainModel:
    """lambda_j for a profile: j may be given through ln j for deep tails."""

    profile: DeltaProfile
    C3: float = 1.0
    r0: float = 0.1
    deep = True

    def __post_init__(self):
        if self.C3 <= 0 or not 0 < self.r0 < 1:
            raise ValueError("need C3 > 0 and 0 < r0 < 1")
        g = self.profile.geometry
        if g is not None and 3 * self.r0 >= g.R:
            raise DomainError("3 r0 outside the geometry's domain")

    def y3_from_lnj(self, lnj):
        """ln ln(1/(3 r_j)) with ln(1/(3 r_j)) = ln(1/r0) + j ln 4 - ln 3."""
        lnj = mpmath.mpf(lnj)
        c = mpmath.log(1 / mpmath.mpf(self.r0)) - LN3
        if lnj > 2000:
            return lnj + mpmath.log(LN4)
        return mpmath.log(mpmath.exp(lnj) * LN4 + c)

    def ln_delta_j(self, lnj):
        return self.profile.ln_delta_at(self.y3_from_lnj(lnj))

    def lnln_inv_lambda(self, lnj):
        return _lnln_inv_lambda(_ln_ratio_gain(self.ln_delta_j(lnj), self.C3))

    def ln_lambda(self, j: int):
        return -_ln_inv_lambda(_ln_ratio_gain(self.ln_delta_j(mpmath.log(j)), self.C3))


@dataclass
class SequenceModel:
    """A literal sequence given by ln(1/lambda_j) as a function of integer j."""

    ln_inv_lambda: object
    name: str = "sequence"
    deep = False

    def lnln_inv_lambda(self, lnj):
        j = int(mpmath.nint(mpmath.exp(lnj)))
        v = mpmath.mpf(self.ln_inv_lambda(j))
        if v <= 0:
            return -mpmath.inf
        return mpmath.log(v)

    def ln_lambda(self, j: int):
        return -mpmath.mpf(self.ln_inv_lambda(j))


def lambda_sequence(profile: DeltaProfile, C3: float, r0: float, J: int) -> list:
    """[(j, ln lambda_j, lambda_j, underflow)] for j = 1..J.

    ln lambda_j is exact in mpmath; lambda_j is the float value, 0.0 only
    when flagged as underflowing.
    """
    model = GainModel(profile, C3, r0)
    out = []
    for j in range(1, J + 1):
        ll = model.ln_lambda(j)
        val = float(mpmath.exp(ll)) if ll > -745 else 0.0
        out.append((j, ll, val, val == 0.0))
    return out


@dataclass
class TailVerdict:
    verdict: str
    method: str
    tail: tuple
    L_range: tuple
    B_range: tuple
    overflow: bool = False


def _tail_points(model, J, X, samples):
    if model.deep:
        return [mpmath.mpf(X) * (0.5 + 0.5 * i / (samples - 1)) for i in range(samples)], "lnln j"
    js = sorted({int(round(J / 2 + (J / 2) * i / (samples - 1))) for i in range(samples)})
    return [mpmath.log(mpmath.log(j)) for j in js if j >= 3], "j"


def summability_verdict(model, J: int = 10**6, X: float = 1e7, margin: float = 0.05,
                        samples: int = 64) -> TailVerdict:
    """Tail test of sum lambda_j = infinity (see module docstring).

    Literal sequences use j in [J/2, J]; deep models use ln ln j in [X/2, X].
    """
    xs, kind = _tail_points(model, J, X, samples)
    Ls, Bs, overflow = [], [], False
    for x in xs:
        lnj = mpmath.exp(x)
        lli = model.lnln_inv_lambda(lnj)
        if lli == mpmath.inf:
            overflow = True
            Ls.append(mpmath.inf)
            Bs.append(mpmath.inf)
            continue
        if lli == -mpmath.inf:
            Ls.append(mpmath.mpf(0))
            Bs.append(-lnj / x)
            continue
        Ls.append(_exp(lli - x))
        # ln(1/lambda) - ln j = ln j (L - 1)
        Bs.append(lnj * mpmath.expm1(lli - x) / x if lli - x <= EXP_CAP else mpmath.inf)
    lo, hi = 1 - margin, 1 + margin
    Lr = (float(min(Ls)), float(max(Ls)))
    Br = (float(min(Bs)), float(max(Bs)))
    # B decides; L alone can clear 1 + margin for 1/(j ln j) at any finite j
    if max(Bs) <= lo:
        v = "divergent"
        m = "L" if max(Ls) <= lo else "bertrand"
    elif min(Bs) >= hi:
        v = "convergent"
        m = "L" if min(Ls) >= hi else "bertrand"
    else:
        v, m = "inconclusive", "bertrand"
    tail = (kind, float(xs[0]), float(xs[-1])) if kind == "lnln j" else (kind, J // 2, J)
    return TailVerdict(v, m, tail, Lr, Br, overflow)


def minimal_sigma(g: Geometry, y_max: float = 1e6, samples: int = 256) -> float:
    """Smallest sigma with F <= F_{3,sigma} at the sampled scales.

    F <= ln(1/r) (ln^(3)(c/r))^sigma  iff  ln G(r) <= sigma ln ln^(3)(c/r),
    c = tower(3) so that ln^(3)(c/r) > 1 for r < 1.
    """
    lnc = mpmath.log(tower(3))
    ys = [mpmath.mpf(-0.3) + (mpmath.mpf(50.3) * i) / (samples // 2) for i in range(samples // 2 + 1)]
    ys += [mpmath.mpf(50) * (mpmath.mpf(y_max) / 50) ** (mpmath.mpf(i) / (samples // 2)) for i in range(1, samples // 2 + 1)]
    best = -mpmath.inf
    for y in ys:
        lg = g.log_growth(y)
        if lg == -mpmath.inf:
            continue
        if lg == mpmath.inf:
            return math.inf
        # ln ln^(3)(c/r) from ln ln(c/r)
        l4 = mpmath.log(mpmath.log(_ln_s_plus(y, lnc)))
        best = max(best, lg / l4)
    return 0.0 if best == -mpmath.inf else max(0.0, float(best))


@dataclass
class ClassificationReport:
    geometry: str
    constants: dict
    G: str
    r0: float
    rows: list
    partial_sums_log: list
    verdict: str
    tail: TailVerdict
    stable: bool
    sigma_min: float
    hypothesis_holds: bool
    flags: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "geometry": self.geometry,
            "constants": self.constants,
            "G": self.G,
            "rows": self.rows,
            "partial_sums_log": self.partial_sums_log,
            "verdict": self.verdict,
            "r0": self.r0,
            "diagnostics": {
                "method": self.tail.method,
                "tail": list(self.tail.tail),
                "L_range": list(self.tail.L_range),
                "B_range": list(self.tail.B_range),
                "stable_under_doubling": self.stable,
                "sigma_min": self.sigma_min,
                "hypothesis_F_le_F3sigma": self.hypothesis_holds,
                "flags": self.flags,
            },
        }


def classify(g: Geometry | None, profile: DeltaProfile | None = None, C3: float = 1.0,
             r0: float = 0.1, J: int = 10**6, X: float = 1e7, margin: float = 0.05,
             table_rows: int = 100) -> ClassificationReport:
    """Full classification: table, tail verdict (checked under doubling) and sigma audit."""
    profile = DeltaProfile(geometry=g) if profile is None else profile
    model = GainModel(profile, C3, r0)
    first = summability_verdict(model, J, X, margin)
    second = summability_verdict(model, 2 * J, 2 * X, margin)
    stable = first.verdict == second.verdict
    verdict = first.verdict if stable else "inconclusive"
    flags = []
    if first.overflow or second.overflow:
        flags.append("ln(1/lambda) overflowed on the tail; read as convergent")
    rows, sums = [], []
    acc = -mpmath.inf
    for j, ll, _, under in lambda_sequence(profile, C3, r0, table_rows):
        ld = model.ln_delta_j(mpmath.log(j))
        rows.append({"j": j, "r_j": r0 / 4.0 ** j, "ln_delta": float(ld), "ln_lambda": float(ll)})
        acc = ll if acc == -mpmath.inf else max(acc, ll) + mpmath.log1p(mpmath.exp(-abs(acc - ll)))
        sums.append(float(acc))
        if under:
            flags.append(f"lambda_{j} underflows double precision")
    name = g.name if g is not None else profile.growth_name
    if g is not None and g.kind != "custom":
        sig = minimal_sigma(g)
        holds = sig < 1.0
    else:
        sig, holds = math.nan, False
    return ClassificationReport(name, {**profile.constants(), "C3": C3}, profile.growth_name, r0,
                                rows, sums, verdict, first, stable, sig, holds, flags)


_REPORT_KEYS = {"geometry": str, "constants": dict, "G": str, "rows": list,
                "partial_sums_log": list, "verdict": str}


def validate_report(obj: dict) -> None:
    """Schema check of an emitted classification report."""
    for key, typ in _REPORT_KEYS.items():
        if key not in obj or not isinstance(obj[key], typ):
            raise ValueError(f"report field {key!r} missing or not {typ.__name__}")
    if obj["verdict"] not in ("divergent", "convergent", "inconclusive"):
        raise ValueError("bad verdict")
    for row in obj["rows"]:
        if set(row) != {"j", "r_j", "ln_delta", "ln_lambda"}:
            raise ValueError("bad row")
