import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from degenlab.classifier import (ClassificationReport, DeltaProfile, GainModel, SequenceModel, classify,
                                 delta, lambda_at, lambda_sequence, ln_delta, minimal_sigma,
                                 summability_verdict, validate_report)
from degenlab.geometry import constant, finite_type, inverse_power, power_log, tower

mpmath.mp.dps = 50


def _delta_oracle(sigma, k, r):
    """delta(r) for F_{k,sigma} from the definition, independent of log_growth."""
    c = mpmath.mpf(tower(k))
    x = 3 * mpmath.mpf(r)
    v = c / x
    for _ in range(k):
        v = mpmath.log(v)
    G = v ** sigma  # F / ln(1/x)
    return (2 * mpmath.exp(G)) ** -2


def test_constant_profile():
    p = DeltaProfile(C2=0)
    for r in (0.1, 1e-5, 1e-100):
        assert delta(p, r) == pytest.approx(0.25, rel=1e-15)


def test_growth_two():
    p = DeltaProfile(log_growth=lambda y: mpmath.log(2))
    assert delta(p, 1e-3) == pytest.approx(float((2 * mpmath.e ** 2) ** -2), rel=1e-14)
    assert delta(p, 1e-3) == pytest.approx(0.004578, abs=1e-6)


@pytest.mark.parametrize("r", [1e-4, 1e-2, 1e-30])
def test_default_profile_against_definition(r):
    p = DeltaProfile(geometry=power_log(3, 0.5))
    assert delta(p, r) == pytest.approx(float(_delta_oracle(0.5, 3, r)), rel=1e-12)


def test_unit_delta_gain():
    p = DeltaProfile(C1=0.5, C2=0)  # A = 1/2, delta = 1
    assert delta(p, 0.01) == 1.0
    rows = lambda_sequence(p, 1.0, 0.1, 10)
    assert all(val == 0.0625 for _, _, val, _ in rows)
    assert summability_verdict(GainModel(p)).verdict == "divergent"


def test_lambda_sequence_against_composition():
    g = power_log(3, 0.9)
    rows = lambda_sequence(DeltaProfile(geometry=g), 1.0, 0.1, 30)
    for j, ll, _, _ in rows:
        d = _delta_oracle(0.9, 3, mpmath.mpf(0.1) / 4 ** j)
        expected = -(3 + 1 / d**2) * mpmath.log(2)
        assert float(ll) == pytest.approx(float(expected), rel=1e-12)


@given(st.integers(1, 400), st.floats(0.1, 10.0))
def test_log_space_fidelity(j, C3):
    p = DeltaProfile(geometry=power_log(3, 0.5))
    m = GainModel(p, C3, 0.1)
    d = mpmath.exp(m.ln_delta_j(mpmath.log(j)))
    expected = -(3 + C3 / d**2) * mpmath.log(2)
    assert float(m.ln_lambda(j)) == pytest.approx(float(expected), rel=1e-12)


def test_underflow_is_flagged():
    rows = lambda_sequence(DeltaProfile(geometry=power_log(0, 1.5)), 1.0, 0.1, 5)
    assert any(u for *_, u in rows)
    assert all(val == 0.0 for _, _, val, u in rows if u)


def test_lambda_at_matches_sequence():
    p = DeltaProfile(geometry=power_log(3, 0.5))
    for j, ll, val, under in lambda_sequence(p, 1.0, 0.1, 4):
        assert lambda_at(p, 0.1 / 4**j) == pytest.approx(val, rel=1e-12)


# monotonicity

NESTED = [power_log(3, 0.5), power_log(3, 0.9), inverse_power(0.5), power_log(0, 0.5), power_log(0, 1.5)]


@given(st.floats(-12.0, -1.5))
def test_delta_decreases_with_growth(log10_r):
    r = 10.0**log10_r
    ds = [ln_delta(DeltaProfile(geometry=g), r) for g in NESTED]
    assert all(b <= a for a, b in zip(ds, ds[1:]))


def test_verdicts_move_toward_convergence():
    order = {"divergent": 0, "inconclusive": 1, "convergent": 2}
    vs = [summability_verdict(GainModel(DeltaProfile(geometry=g))).verdict for g in NESTED]
    assert all(order[b] >= order[a] for a, b in zip(vs, vs[1:]))
    assert vs[0] == "divergent" and vs[-1] == "convergent"


# literal sequences

@pytest.mark.parametrize("name,ln_inv,verdict", [
    ("1/j", lambda j: mpmath.log(j), "divergent"),
    ("2^-j", lambda j: j * mpmath.log(2), "convergent"),
    ("1/(j ln^2 j)", lambda j: mpmath.log(j) + 2 * mpmath.log(mpmath.log(j)), "convergent"),
    ("1/(j ln j)", lambda j: mpmath.log(j) + mpmath.log(mpmath.log(j)), "inconclusive"),
    ("1/(j ln^0.5 j)", lambda j: mpmath.log(j) + 0.5 * mpmath.log(mpmath.log(j)), "divergent"),
    ("constant", lambda j: mpmath.log(16), "divergent"),
])
def test_sequence_verdicts(name, ln_inv, verdict):
    v = summability_verdict(SequenceModel(ln_inv, name))
    assert v.verdict == verdict
    assert summability_verdict(SequenceModel(ln_inv, name), J=2 * 10**6).verdict == verdict


def test_integral_test_oracle_for_log_squared_series():
    # S(J) = sum_{j=2}^J 1/(j ln^2 j) lies between the integral-test bounds
    # int_2^(J+1) and 1/(2 ln^2 2) + int_2^J of 1/(x ln^2 x) = 1/ln 2 - 1/ln x
    j = np.arange(2, 10**7 + 1, dtype=float)
    partial = np.cumsum(1 / (j * np.log(j) ** 2))
    for J in (10**3, 10**5, 10**7):
        lo = 1 / math.log(2) - 1 / math.log(J + 1)
        hi = 1 / (2 * math.log(2) ** 2) + 1 / math.log(2) - 1 / math.log(J)
        assert lo <= partial[J - 2] <= hi
    # bounded limit: the series converges, as the verdict says
    assert partial[-1] < 1 / (2 * math.log(2) ** 2) + 1 / math.log(2)


# classification

@pytest.mark.parametrize("g,verdict", [(power_log(3, 0.9), "divergent"), (power_log(3, 0.5), "divergent"),
                                       (finite_type(1.0), "divergent"), (power_log(0, 1.5), "convergent"),
                                       (inverse_power(0.5), "convergent")], ids=lambda v: getattr(v, "name", v))
def test_builtin_verdicts(g, verdict):
    rep = classify(g, table_rows=10)
    assert rep.verdict == verdict
    assert rep.stable


def test_constant_delta_diverges():
    rep = classify(None, DeltaProfile(C2=0), table_rows=5)
    assert rep.verdict == "divergent"


def test_sigma_audit():
    assert minimal_sigma(power_log(3, 0.9)) == pytest.approx(0.9, rel=1e-6)
    assert classify(power_log(3, 0.9), table_rows=3).hypothesis_holds
    assert not classify(power_log(0, 1.5), table_rows=3).hypothesis_holds


def test_report_round_trip():
    rep = classify(power_log(3, 0.5), table_rows=100)
    obj = json.loads(json.dumps(rep.to_json(), default=str))
    validate_report(obj)
    assert [r["j"] for r in obj["rows"]] == list(range(1, 101))
    assert all(b >= a for a, b in zip(obj["partial_sums_log"], obj["partial_sums_log"][1:]))


def test_validate_report_rejects_bad_input():
    with pytest.raises(ValueError):
        validate_report({"geometry": "x"})
    rep = classify(power_log(3, 0.5), table_rows=2).to_json()
    rep["verdict"] = "maybe"
    with pytest.raises(ValueError):
        validate_report(rep)


def test_profile_validation():
    with pytest.raises(ValueError):
        DeltaProfile(C1=0)
    with pytest.raises(ValueError):
        DeltaProfile()  # no growth map
    with pytest.raises(ValueError):
        GainModel(DeltaProfile(C2=0), C3=-1)
