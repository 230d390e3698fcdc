import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from degenlab.geometry import finite_type, inverse_power, power_log
from degenlab.inequalities import TrialSetup, caccioppoli_trial
from degenlab.metric import rstar_and_height
from degenlab.solver import (HARMONIC_HALVING_BOUND, DegenerateProblem, DegenerateRowError,
                             HypothesisError, LinearSystem, MaximumPrincipleError, ResolutionError,
                             assemble, cascade_identity_error, centered_problem, oscillation,
                             oscillation_decay_run, problem_from_config, solve, solve_problem,
                             truncation_cascade)

G = power_log(3, 0.5)
GEOMETRIES = [power_log(3, 0.5), power_log(3, 0.9), power_log(0, 0.5), inverse_power(0.5), finite_type(1.0)]


def unit_coef(x):
    return np.ones_like(x)


# assembly

def test_unit_coefficient_gives_five_point_laplacian():
    p = DegenerateProblem(None, ((0.0, 1.0), (0.0, 1.0)), (6, 6), coef=unit_coef)
    A = assemble(p).matrix.toarray()
    assert np.all(np.diag(A) == 4.0)
    off = A - np.diag(np.diag(A))
    assert set(np.unique(off)) <= {0.0, -1.0}
    assert np.all((off != 0).sum(axis=1) <= 4)


def test_hand_stencil_three_by_three():
    g = finite_type(1.0)  # f(x1) = x1
    p = DegenerateProblem(g, ((0.2, 0.6), (0.0, 0.2)), (5, 5))
    A = assemble(p).matrix.toarray()
    h1, h2 = 0.1, 0.05
    ch, cv = h2 / h1, (h1 / h2) * 0.4 ** 2  # centre column x1 = 0.4
    centre = 4  # interior (1, 1) of the 3 x 3 block, row-major in x1
    assert A[centre, centre] == pytest.approx(2 * ch + 2 * cv, rel=1e-14)
    assert A[centre, 1] == pytest.approx(-ch) and A[centre, 7] == pytest.approx(-ch)
    assert A[centre, 3] == pytest.approx(-cv) and A[centre, 5] == pytest.approx(-cv)
    assert np.count_nonzero(A[centre]) == 5


@pytest.mark.parametrize("g", GEOMETRIES, ids=lambda g: g.name)
def test_matrix_is_exactly_symmetric(g):
    A = assemble(DegenerateProblem(g, ((0.05, 0.3), (-0.1, 0.1)), (17, 23))).matrix
    assert (A - A.T).count_nonzero() == 0


def test_underflowing_coefficient_is_rejected():
    with pytest.raises(DegenerateRowError):
        assemble(DegenerateProblem(inverse_power(1.0), ((1e-3, 2e-3), (-0.1, 0.1)), (9, 9)))


def test_bad_rectangle():
    with pytest.raises(ValueError):
        DegenerateProblem(G, ((0.3, 0.1), (-0.1, 0.1)), (9, 9))
    with pytest.raises(ValueError):
        DegenerateProblem(G, ((0.0, 0.1), (-0.1, 0.1)), (9, 9))


# exact discrete solutions

@given(st.sampled_from(GEOMETRIES), st.integers(5, 80), st.integers(5, 80),
       st.sampled_from(["linear-x1", "linear-x2"]))
def test_linear_fields_are_reproduced(g, n1, n2, family):
    p = DegenerateProblem(g, ((0.1, 0.4), (-0.15, 0.15)), (n1, n2), family)
    res = solve_problem(p)
    X1, X2 = res.u.mesh()
    exact = X1 if family == "linear-x1" else X2
    assert np.abs(res.u.values - exact).max() <= 1e-9


def test_saddle_is_exact_for_unit_coefficient():
    p = DegenerateProblem(None, ((0.1, 0.9), (-0.4, 0.4)), (33, 33), "quadratic-saddle", coef=unit_coef)
    u = solve_problem(p).u
    X1, X2 = u.mesh()
    assert np.abs(u.values - (X1**2 - X2**2)).max() < 1e-12


def test_smooth_harmonic_converges_second_order():
    def bc(X1, X2, b):
        return np.exp(X1) * np.cos(X2)

    errs = []
    for n in (17, 33, 65):
        u = solve_problem(DegenerateProblem(None, ((0.1, 0.9), (-0.4, 0.4)), (n, n), bc, coef=unit_coef)).u
        X1, X2 = u.mesh()
        errs.append(np.abs(u.values - np.exp(X1) * np.cos(X2)).max())
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.1)


def test_maximum_principle_holds_and_is_enforced():
    p = DegenerateProblem(G, ((0.1, 0.4), (-0.15, 0.15)), (41, 41), "random-piecewise", seed=5)
    system = assemble(p)
    u = solve(system).u.values
    edge = ~system.interior
    assert u.max() <= system.boundary_values[edge].max() + 1e-12
    # a positive source breaks the principle and must be caught
    bad = LinearSystem(system.matrix, system.rhs + 1.0, system.template, system.boundary_values,
                       system.interior)
    with pytest.raises(MaximumPrincipleError):
        solve(bad)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_energy_identity_on_solutions(seed):
    s = TrialSetup(G, (0.3, 0.0), 2.0 ** -5, (81, 81))
    p = DegenerateProblem(G, s.box, s.shape, "random-piecewise", seed)
    u = solve_problem(p).u
    u = u.with_values(u.values - np.median(u.values[s.b1]))
    psi = np.clip(2.0 - u.distances_from(s.x) / s.r, 0.0, 1.0)
    rep = caccioppoli_trial(u, psi)
    assert rep.meta["intermediate"] <= 4.0 * 1.05


def test_problem_from_config():
    p = problem_from_config({"geometry": {"family": "Fks", "k": 3, "sigma": 0.5},
                             "rectangle": [0.1, 0.4, -0.1, 0.1], "resolution": 17, "seed": 3})
    assert p.shape == (17, 17) and p.seed == 3
    assert problem_from_config({"geometry": "finite:1", "rectangle": [0.1, 0.4, -0.1, 0.1]}).shape == (129, 129)
    with pytest.raises(ValueError):
        problem_from_config({"geometry": "finite:1", "rectangle": [0.1, 0.4, -0.1, 0.1], "colour": 1})


# truncation cascade

def test_cascade_fixed_point():
    ws = truncation_cascade(np.ones(5), 20)
    assert all(np.all(w == 1.0) for w in ws)


def test_cascade_from_zero():
    ws = truncation_cascade(np.zeros(3), 5)
    assert [w[0] for w in ws] == [1 - 2.0**k for k in range(6)]


@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_cascade_identity(seed, k_max):
    v = np.random.default_rng(seed).uniform(-1, 1, 200)
    ws, err = truncation_cascade(v, k_max, return_error=True)
    assert err <= 1e-12
    assert cascade_identity_error(ws) <= 1e-15


def test_cascade_requires_v_at_most_one():
    with pytest.raises(HypothesisError):
        truncation_cascade(np.array([0.5, 1.5]), 3)


# oscillation

def _x2_solution(shape=(257, 257)):
    x, r0 = (0.2, 0.0), 2.0 ** -6
    p = centered_problem(G, x, r0, shape, boundary="linear-x2")
    return solve_problem(p).u, x, r0


def test_oscillation_of_constant():
    p = centered_problem(G, (0.2, 0.0), 2.0 ** -6, (65, 65))
    u = solve_problem(p).u
    assert oscillation(u.with_values(np.full(u.shape, 2.5)), (0.2, 0.0), 2.0 ** -6) == 0.0


def test_oscillation_of_x2_is_twice_height():
    u, x, r0 = _x2_solution()
    for r in (r0, r0 / 2):
        h = rstar_and_height(G, x[0], r).h
        assert oscillation(u, x, r) == pytest.approx(2 * h, rel=0.1)


def test_oscillation_nested():
    u, x, r0 = _x2_solution()
    o = [oscillation(u, x, r0 / 2**k) for k in range(4)]
    assert all(b <= a for a, b in zip(o, o[1:]))


def test_x2_ratios_follow_heights():
    p = centered_problem(G, (0.2, 0.0), 2.0 ** -6, (257, 257), boundary="linear-x2")
    rep = oscillation_decay_run(p, (0.2, 0.0), 2.0 ** -6, levels=3)
    for lv_prev, lv in zip(rep.levels, rep.levels[1:]):
        expected = rstar_and_height(G, 0.2, lv.r).h / rstar_and_height(G, 0.2, lv_prev.r).h
        assert lv.ratio == pytest.approx(expected, rel=0.1)


def test_harmonic_decay_under_classical_bound():
    p = centered_problem(None, (0.5, 0.0), 0.05, (257, 257), seed=4, coef=unit_coef)
    rep = oscillation_decay_run(p, (0.5, 0.0), 0.05, levels=4)
    assert all(q <= HARMONIC_HALVING_BOUND for q in rep.ratios)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_boundary_decay(seed):
    p = centered_problem(G, (0.2, 0.0), 2.0 ** -5, (257, 257), seed=seed)
    rep = oscillation_decay_run(p, (0.2, 0.0), 2.0 ** -5, levels=4)
    assert rep.strictly_decreasing()
    assert all(q < 1 for q in rep.ratios)
    assert rep.oscs[-1] / rep.oscs[0] < 0.9


def test_oscillation_needs_room():
    p = DegenerateProblem(G, ((0.15, 0.25), (-0.01, 0.01)), (65, 65), "random-piecewise")
    with pytest.raises(ResolutionError):
        oscillation_decay_run(p, (0.2, 0.0), 0.04)


def test_oscillation_needs_nodes():
    u, x, r0 = _x2_solution((33, 33))
    with pytest.raises(ResolutionError):
        oscillation(u, x, r0 / 64)
