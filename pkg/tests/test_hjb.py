import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfglab.errors import SolverFailure
from mfglab.grid import Grid
from mfglab.hjb import (
    HJBProblem,
    check_gradient_growth,
    ergodic_residual,
    gaussian_abs_moment,
    hjb_operator,
    lambda_upper_bound,
    solve_ergodic_hjb,
)


def test_problem_validation():
    g = Grid(1, 4.0, 33)
    with pytest.raises(ValueError):
        HJBProblem(1.0, np.zeros(g.shape), g)
    with pytest.raises(ValueError):
        HJBProblem(2.0, np.zeros(34), g)
    with pytest.raises(ValueError):
        HJBProblem(2.0, np.full(g.shape, np.nan), g)


@pytest.mark.parametrize("gamma", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("dim", [1, 2])
def test_jacobian_matches_finite_differences(gamma, dim, rng):
    g = Grid(dim, 2.0, 9 if dim == 2 else 17)
    u = np.sin(sum(g.coords)) + 0.3 * g.radius**2
    _, J = hjb_operator(g, u, gamma)
    v = rng.standard_normal(g.shape)
    t = 1e-6
    Lp, _ = hjb_operator(g, u + t * v, gamma, jacobian=False)
    Lm, _ = hjb_operator(g, u - t * v, gamma, jacobian=False)
    fd = (Lp - Lm).ravel() / (2 * t)
    np.testing.assert_allclose(J @ v.ravel(), fd, rtol=1e-6, atol=1e-6 * np.max(np.abs(fd)))


def test_operator_ignores_constants_and_reduces_to_laplacian_for_small_gradients():
    g = Grid(1, 1.0, 65)
    u = 1e-4 * g.axis**2
    L, _ = hjb_operator(g, u, 2.0, jacobian=False)
    L5, _ = hjb_operator(g, u + 5.0, 2.0, jacobian=False)
    np.testing.assert_allclose(L, L5, atol=1e-12)
    # -Lap u + |u'|^2/2 for u = a x^2
    exact = -2e-4 + 0.5 * (2e-4 * g.axis) ** 2
    np.testing.assert_allclose(L[1:-1], exact[1:-1], atol=1e-10)


def test_quadratic_potential_closed_form():
    g = Grid(1, 8.0, 257)
    sol = solve_ergodic_hjb(HJBProblem(2.0, g.axis**2, g))
    assert abs(sol.lam - math.sqrt(2)) <= 5e-3
    assert sol.u[g.center_index] == 0.0
    assert ergodic_residual(g, sol.u, sol.lam, g.axis**2, 2.0) <= 1e-9 * (1 + 64)


def test_trace_is_written(tmp_path):
    g = Grid(1, 4.0, 65)
    sol = solve_ergodic_hjb(HJBProblem(2.0, g.axis**2, g))
    sol.trace_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,residual,delta"
    assert len(lines) == len(sol.trace) + 1


@settings(max_examples=10, deadline=None)
@given(st.floats(-5.0, 5.0), st.floats(0.2, 2.0))
def test_lambda_shifts_with_constants_and_is_monotone(c, bump):
    g = Grid(1, 5.0, 65)
    f = g.axis**2
    lam = solve_ergodic_hjb(HJBProblem(2.0, f, g)).lam
    assert solve_ergodic_hjb(HJBProblem(2.0, f + c, g)).lam == pytest.approx(lam + c, abs=1e-8)
    # comparison: a larger right-hand side gives a larger ergodic constant
    f2 = f + bump * np.exp(-g.axis**2)
    assert solve_ergodic_hjb(HJBProblem(2.0, f2, g)).lam > lam


@pytest.mark.parametrize("gamma", [1.5, 3.0])
def test_non_quadratic_hamiltonians_converge(gamma):
    g = Grid(1, 6.0, 129)
    f = g.axis**2
    sol = solve_ergodic_hjb(HJBProblem(gamma, f, g))
    assert ergodic_residual(g, sol.u, sol.lam, f, gamma) <= 1e-9 * (1 + 36)
    assert sol.lam <= lambda_upper_bound(g, f, gamma)


def test_two_dimensional_separable_problem():
    g1 = Grid(1, 5.0, 41)
    g2 = Grid(2, 5.0, 41)
    lam1 = solve_ergodic_hjb(HJBProblem(2.0, g1.axis**2, g1)).lam
    lam2 = solve_ergodic_hjb(HJBProblem(2.0, g2.radius**2, g2)).lam
    # gamma = 2 separates: the 2-D constant is twice the 1-D one
    assert lam2 == pytest.approx(2 * lam1, rel=1e-9)


def test_warm_start_reproduces_solution():
    g = Grid(1, 5.0, 65)
    prob = HJBProblem(2.0, g.axis**2 + 0.1 * np.cos(g.axis), g)
    cold = solve_ergodic_hjb(prob)
    warm = solve_ergodic_hjb(prob, guess=(cold.u, cold.lam))
    assert warm.lam == pytest.approx(cold.lam, abs=1e-10)
    assert warm.iterations <= 1


def test_failure_carries_trace():
    g = Grid(1, 5.0, 65)
    with pytest.raises(SolverFailure) as exc:
        solve_ergodic_hjb(HJBProblem(2.0, g.axis**2, g), max_iter=1)
    assert exc.value.label == "newton-divergence"
    assert exc.value.trace


def test_gradient_growth_and_bound():
    g = Grid(1, 8.0, 257)
    sol = solve_ergodic_hjb(HJBProblem(2.0, g.axis**2, g))
    C = check_gradient_growth(g, sol.u, 2.0, 2.0)
    assert 0.5 < C < 5.0
    assert gaussian_abs_moment(1, 2.0) == pytest.approx(1.0)
    assert gaussian_abs_moment(3, 2.0) == pytest.approx(3.0)
    assert lambda_upper_bound(g, g.axis**2, 2.0) == pytest.approx(1.5, rel=1e-8)
    assert lambda_upper_bound(g, None, 2.0) == 0.0
