import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from degenlab.geometry import DomainError, constant, finite_type, inverse_power, power_log
from degenlab.grid import GridOracle
from degenlab.metric import (BracketError, Cone, ball_oracle, ball_volume, control_distance,
                             cross_section, geodesic_radius, height_hstar, kernel_K, radius_sequence,
                             regime, rstar_and_height, solve_lambda, straight_across_integral,
                             turning_offset, turning_radius)

LIN = finite_type(1.0)  # f(u) = u
BUILTIN = [power_log(3, 0.5), power_log(3, 0.9), power_log(0, 0.5), inverse_power(0.5), LIN]


# closed forms for f(u) = u

def test_geodesic_radius_arcsin():
    expected = 0.3 * (math.asin(2 / 3) - math.asin(1 / 3))
    assert geodesic_radius(LIN, 0.1, 0.2, 0.3) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.116968, abs=1e-6)


def test_geodesic_radius_limits():
    assert geodesic_radius(LIN, 0.1, 0.1, 0.3) == 0.0
    slope = 0.3 / math.sqrt(0.3**2 - 0.1**2)
    assert geodesic_radius(LIN, 0.1, 0.1 + 1e-9, 0.3) == pytest.approx(1e-9 * slope, rel=1e-6)
    assert geodesic_radius(LIN, 0.1, 0.2, 1e12) == pytest.approx(0.1, rel=1e-12)


def test_turning_radius_quarter_circle():
    assert turning_radius(LIN, 0.0, 0.1) == pytest.approx(math.pi / 2 * 0.1, rel=1e-12)
    assert solve_lambda(LIN, 0.0, 0.15708) == pytest.approx(0.1, rel=1e-4)


@given(st.floats(min_value=1e-3, max_value=0.2))
def test_lambda_is_homogeneous(r):
    assert solve_lambda(LIN, 0.0, 2 * r) / solve_lambda(LIN, 0.0, r) == pytest.approx(2.0, rel=1e-9)


@given(st.floats(min_value=1e-4, max_value=0.45))
def test_height_closed_form(t):
    assert height_hstar(LIN, 0.0, t) == pytest.approx(math.pi * t * t / 4, rel=1e-8)


@given(st.floats(min_value=1e-4, max_value=0.2))
def test_height_scales_quadratically(t):
    assert height_hstar(LIN, 0.0, 2 * t) / height_hstar(LIN, 0.0, t) == pytest.approx(4.0, rel=1e-8)


def test_height_vanishes_at_zero():
    assert height_hstar(LIN, 0.1, 0.0) == 0.0
    # h* ~ 2 f^(3/2) sqrt(t / (2 f')) as t -> 0; here f = u
    t = 1e-10
    assert height_hstar(LIN, 0.1, t) == pytest.approx(2 * 0.1 ** 1.5 * math.sqrt(t / 2), rel=1e-4)


def test_constant_f_has_no_turning_geodesic():
    with pytest.raises(BracketError):
        solve_lambda(constant(1.0), 0.2, 0.1)


def test_beyond_domain():
    with pytest.raises(DomainError):
        height_hstar(LIN, 0.5, 0.6)


# height proposition

def test_height_small_regime():
    g = power_log(3, 0.5)
    p = rstar_and_height(g, 0.3, 1e-3)
    assert p.regime == "small"
    assert 1 / 8 <= p.h / (1e-3 * float(g.f(0.3))) <= 8


def test_height_large_regime():
    g = inverse_power(0.5)
    p = rstar_and_height(g, 1e-3, 0.2)
    assert p.regime == "large"
    ratio = p.h * abs(float(g.dF(1e-3 + 0.2))) / float(g.f(1e-3 + 0.2))
    assert 1 / 8 <= ratio <= 8


def test_height_shrinks_with_radius():
    g = power_log(3, 0.5)
    hs = [rstar_and_height(g, 0.2, r) for r in (1e-2, 1e-4, 1e-6)]
    assert hs[0].h > hs[1].h > hs[2].h
    assert hs[2].r_star < 1e-6


# volume law

def test_small_volume_is_formula():
    g = power_log(3, 0.5)
    assert ball_volume(g, 2, 0.2, 1e-3) == pytest.approx(1e-6 * float(g.f(0.2)), rel=1e-15)


def test_three_dimensional_large_volume():
    g = inverse_power(1.0)
    mpmath.mp.dps = 40
    b = mpmath.mpf("0.21")
    dF = b ** -2
    expected = mpmath.exp(-1 / b) / dF ** 3 * mpmath.sqrt(mpmath.mpf("0.2") * dF)
    assert regime(g, 0.01, 0.2, 3) == "large"
    assert ball_volume(g, 3, 0.01, 0.2) == pytest.approx(float(expected), rel=1e-12)


@pytest.mark.parametrize("g", BUILTIN, ids=lambda g: g.name)
def test_volume_monotone_in_radius(g):
    for x1 in (0.01, 0.05, 0.2):
        rs = np.geomspace(1e-7, 0.9 * (g.R - x1), 400)
        v = ball_volume(g, 2, x1, rs)
        assert np.all(np.diff(v) >= 0)


@pytest.mark.parametrize("g", BUILTIN, ids=lambda g: g.name)
def test_regime_branches_agree_at_threshold(g):
    ratios = []
    for x1 in np.geomspace(1e-4, 0.05, 20):
        r = 1 / abs(float(g.dF(x1)))
        if g.F(x1) > 700:  # f underflows
            continue
        small = r * r * float(g.f(x1))
        large = float(g.f(x1 + r)) / float(g.dF(x1 + r)) ** 2
        ratios.append(small / large)
    assert len(ratios) >= 10
    # finite type sits exactly at 1/8
    assert min(ratios) >= (1 - 1e-12) / 8 and max(ratios) <= 8


@pytest.mark.parametrize("g", [LIN, power_log(3, 0.9)], ids=lambda g: g.name)
@pytest.mark.parametrize("x1", [0.05, 0.2, 0.4])
@pytest.mark.parametrize("k", [3, 6, 9])
def test_grid_ball_area_comparable(g, x1, k):
    r = 2.0 ** -k
    o = ball_oracle(g, (x1, 0.0), r, 129)
    assert 1 / 8 <= o.ball_area((x1, 0.0), r) / ball_volume(g, 2, x1, r) <= 8


def test_two_dimensional_ball_area_example():
    g = power_log(3, 0.5)
    r = 2.0 ** -6
    o = ball_oracle(g, (0.2, 0.0), r, 257)
    assert 1 / 8 <= o.ball_area((0.2, 0.0), r) / ball_volume(g, 2, 0.2, r) <= 8


# cross sections

def test_cross_section_small_regime():
    g = power_log(3, 0.5)
    assert cross_section(g, 3, 0.2, 1e-3) == pytest.approx(1e-6 * float(g.f(0.2)), rel=1e-15)


def test_cross_section_large_four_dimensions():
    g = inverse_power(1.0)
    mpmath.mp.dps = 40
    b = mpmath.mpf("0.21")
    dF = b ** -2
    lam = mpmath.sqrt(mpmath.mpf("0.2") * dF)
    expected = mpmath.exp(-1 / b) * lam ** 2 / dF ** 3
    assert cross_section(g, 4, 0.01, 0.2) == pytest.approx(float(expected), rel=1e-12)


@pytest.mark.parametrize("n", [3, 4])
def test_cross_section_comparable_to_volume_small(n):
    g = power_log(3, 0.5)
    for r in (1e-3, 1e-2):
        ratio = cross_section(g, n, 0.2, r) * r / 2 / ball_volume(g, n, 0.2, r)
        assert 1 / 8 <= ratio <= 8


# radius sequence

def test_radius_sequence_halves_in_small_regime():
    g = power_log(3, 0.5)
    r0 = 0.5 / abs(float(g.dF(0.2)))
    rs = radius_sequence(g, 0.2, r0, 6)
    assert rs == pytest.approx([r0 * 2.0 ** -k for k in range(7)], rel=1e-15)


@pytest.mark.parametrize("g", BUILTIN, ids=lambda g: g.name)
def test_radius_sequence_strictly_decreasing(g):
    rs = radius_sequence(g, 0.02, 0.3, 12)
    assert all(a > b > 0 for a, b in zip(rs, rs[1:]))


def test_radius_sequence_switch_index():
    g = inverse_power(1.0)
    thresh = 1 / abs(float(g.dF(1e-3)))
    assert thresh == pytest.approx(1e-6, rel=1e-12)
    rs = radius_sequence(g, 1e-3, 0.3, 1460)
    k = next(i for i, r in enumerate(rs) if r < thresh)
    assert k == 1447
    # each large-regime step inverts the arc length of its turning geodesic
    for i in list(range(0, k, 97)) + [k - 1]:
        assert turning_radius(g, 1e-3, rs[i + 1]) == pytest.approx(rs[i], rel=1e-10)
    assert all(rs[i + 1] == 0.5 * rs[i] for i in range(k, len(rs) - 1))


# distances, cones, kernels

def test_oracle_recovers_euclidean_distance():
    o = GridOracle(None, ((-0.05, 0.35), (-0.05, 0.45)), (512, 512), coef=lambda x: np.ones_like(x))
    d = o.numeric_distance((0.0, 0.0), (0.3, 0.4))
    assert d == pytest.approx(0.5, rel=0.02)
    assert o.numeric_distance((0.1, 0.1), (0.1, 0.1)) == 0.0


def test_control_distance_same_point():
    assert control_distance(LIN, (0.2, 0.1), (0.2, 0.1)) == 0.0


@pytest.mark.parametrize("v", [0.002, 0.01, 0.03])
def test_vertical_distance_shooting_vs_grid(v):
    exact = control_distance(LIN, (0.1, 0.0), (0.1, v))
    assert exact <= v / 0.1  # straight vertical path is an upper bound
    o = GridOracle(LIN, ((0.05, 0.1 + 1.2 * exact), (-0.2 * v, 1.2 * v)), (257, 257))
    # 8-neighbour paths carry a few percent of direction bias
    assert o.numeric_distance((0.1, 0.0), (0.1, v)) == pytest.approx(exact, rel=0.05)


@pytest.mark.parametrize("g,n", [(finite_type(1.0), 4000), (inverse_power(0.5), 4000),
                                 (power_log(3, 0.5), 2000)], ids=["finite", "Dsigma", "Fks"])
def test_cone_duality(g, n):
    rng = np.random.default_rng(2024)
    inside = 0
    for _ in range(n):
        x1, r = rng.uniform(0.02, 0.04), rng.uniform(1e-3, 2e-2)
        x = (x1, rng.uniform(-0.1, 0.1))
        s = rng.uniform(-0.1 * r, 1.1 * r)
        h = height_hstar(g, x1, s) if s > 0 else 1e-3
        y = (x1 + s, x[1] + rng.uniform(-1.2, 1.2) * h)
        a = Cone(g, x, r).contains(y)
        assert a == Cone.dual_contains(g, y, x, r)
        inside += a
    assert 0.1 * n < inside < 0.9 * n


def test_kernel_zero_off_cone():
    g = power_log(3, 0.5)
    assert kernel_K(g, 2, (0.2, 0.0), (0.19, 0.0), 0.01) == 0.0
    assert kernel_K(g, 2, (0.2, 0.0), (0.205, 1.0), 0.01) == 0.0
    assert kernel_K(g, 3, (0.2, 0.0, 0.0), (0.25, 0.0, 0.0), 0.01) == 0.0


def test_simplified_kernel_closed_form():
    k = kernel_K(LIN, 2, (0.1, 0.0), (0.3, 0.0), 0.3, form="simplified")
    assert k == pytest.approx(1 / height_hstar(LIN, 0.1, 0.2), rel=1e-12)


def test_straight_across_two_dimensions():
    _, ratio = straight_across_integral(power_log(3, 0.5), 2, (0.2, 0.0), 2.0 ** -5)
    assert 0.25 <= ratio <= 4


def test_straight_across_dual_route():
    _, ratio = straight_across_integral(power_log(3, 0.5), 2, (0.2, 0.0), 2.0 ** -5, dual=True)
    assert 0.25 <= ratio <= 4


def test_straight_across_three_dimensions():
    _, ratio = straight_across_integral(inverse_power(0.5), 3, (0.05, 0.0, 0.0), 2.0 ** -4)
    assert 0.25 <= ratio <= 4
