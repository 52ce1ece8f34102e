"""
Tests for the forward state solver, variational equation and objective
"""
import math

import numpy as np
import pytest

from conftest import make_problem, vector_problem
from docsolve.core.exceptions import (
    DimensionError,
    ExpressionDomainError,
    NewtonConvergenceError,
    UnsupportedBoundaryModeError,
)
from docsolve.services import distkernel
from docsolve.services.fde import (
    directional_derivative,
    evaluate_objective,
    solve_bundle,
    solve_forward,
    solve_variational,
)
from docsolve.services.fracops import Grid
from docsolve.services.problem import TrajectoryBundle, reference_bundle


def test_zero_dynamics_keep_initial_state(unit_kernel):
    p = make_problem("0", "0", x_a=(1.5,))
    grid = Grid(0.0, 1.0, 100)
    x = solve_forward(p, unit_kernel, grid, np.zeros(101))
    np.testing.assert_allclose(x.values, 1.5, atol=1e-12)


def test_order_one_growth_matches_exponential():
    p = make_problem("0", "x", x_a=(1.0,))
    grid = Grid(0.0, 1.0, 2000)
    x = solve_forward(p, distkernel.degenerate(1.0), grid, np.zeros(2001))
    assert x.values[-1, 0] == pytest.approx(math.e, abs=5e-3)


def test_example_forward_solve_tracks_reference(example_problem, example_kernel):
    grid = Grid(0.0, 1.0, 2000)
    u = reference_bundle(example_problem, grid).u
    x = solve_forward(example_problem, example_kernel, grid, u)
    assert np.max(np.abs(x.values[:, 0] - grid.nodes**2)) <= 2e-2


def test_state_dependent_solve_converges():
    # C D^0.5 x = x - t^2 + C D^0.5 t^2 has the solution x = t^2
    p = make_problem("0", "x - t^2 + 2*t^1.5/gamma(2.5)", x_a=(0.0,))
    kernel = distkernel.degenerate(0.5)
    errors = []
    for N in (100, 200):
        grid = Grid(0.0, 1.0, N)
        x = solve_forward(p, kernel, grid, np.zeros(N + 1))
        errors.append(np.max(np.abs(x.values[:, 0] - grid.nodes**2)))
    assert errors[1] < 1e-2
    assert math.log2(errors[0] / errors[1]) >= 1.0


def test_forward_solve_is_deterministic(unit_kernel):
    p = make_problem("0", "u - sin(x)", x_a=(0.3,))
    grid = Grid(0.0, 1.0, 150)
    u = np.cos(grid.nodes)
    first = solve_forward(p, unit_kernel, grid, u).values
    second = solve_forward(p, unit_kernel, grid, u).values
    np.testing.assert_array_equal(first, second)


def test_forward_needs_initial_state(unit_kernel):
    p = make_problem("0", "u", x_a=(1.0,), mode="terminal_fixed")
    with pytest.raises(UnsupportedBoundaryModeError):
        solve_forward(p, unit_kernel, Grid(0.0, 1.0, 10), np.zeros(11))
    x = solve_forward(p, unit_kernel, Grid(0.0, 1.0, 10), np.zeros(11), x_a=np.array([2.0]))
    np.testing.assert_allclose(x.values, 2.0, atol=1e-12)


def test_control_shape_is_checked(unit_kernel):
    p = make_problem("0", "u")
    with pytest.raises(DimensionError):
        solve_forward(p, unit_kernel, Grid(0.0, 1.0, 10), np.zeros(7))


def test_newton_failure_reports_step():
    # d z - z^2 - 1e6 = 0 has no real root on a coarse grid
    p = make_problem("0", "x^2 + 1e6", x_a=(0.0,))
    with pytest.raises(NewtonConvergenceError) as info:
        solve_forward(p, distkernel.degenerate(0.5), Grid(0.0, 1.0, 10), np.zeros(11))
    assert info.value.step == 1
    assert info.value.exit_code == 3


# ----------------------------------------------------------------------
# Objective
# ----------------------------------------------------------------------

def test_objective_of_constant_and_linear_integrands():
    grid = Grid(0.0, 1.0, 100)
    zeros = np.zeros(101)
    bundle = TrajectoryBundle(grid, zeros, zeros)
    assert evaluate_objective(make_problem("1", "u"), bundle) == pytest.approx(1.0, abs=1e-14)
    assert evaluate_objective(make_problem("t", "u"), bundle) == pytest.approx(0.5, abs=1e-12)


def test_objective_vanishes_on_reference_triple(example_problem):
    grid = Grid(0.0, 1.0, 500)
    bundle = reference_bundle(example_problem, grid)
    assert evaluate_objective(example_problem, bundle) == pytest.approx(0.0, abs=1e-6)


def test_solve_bundle_carries_objective(example_problem, example_kernel):
    grid = Grid(0.0, 1.0, 200)
    bundle = solve_bundle(example_problem, example_kernel, grid, np.zeros(201))
    assert bundle.lam is None
    assert bundle.J == pytest.approx(evaluate_objective(example_problem, bundle))
    assert bundle.J < 0.0


# ----------------------------------------------------------------------
# Variational equation
# ----------------------------------------------------------------------

def test_variational_of_zero_direction(example_problem, example_kernel):
    grid = Grid(0.0, 1.0, 200)
    base = solve_bundle(example_problem, example_kernel, grid, np.zeros(201))
    eta = solve_variational(example_problem, example_kernel, grid, base, np.zeros(201))
    np.testing.assert_array_equal(eta.values, 0.0)


def test_variational_equals_forward_for_linear_dynamics(example_problem, example_kernel):
    grid = Grid(0.0, 1.0, 200)
    h = np.sin(3.0 * grid.nodes)
    base = solve_bundle(example_problem, example_kernel, grid, np.zeros(201))
    eta = solve_variational(example_problem, example_kernel, grid, base, h)
    x = solve_forward(example_problem, example_kernel, grid, h)
    np.testing.assert_allclose(eta.values, x.values, rtol=1e-12, atol=1e-14)


def test_two_state_variational_matches_forward_difference(unit_kernel):
    p = vector_problem()
    grid = Grid(0.0, 1.0, 100)
    t = grid.nodes
    u = np.sin(3.0 * t)
    h = np.cos(t)
    base = solve_bundle(p, unit_kernel, grid, u)
    eta = solve_variational(p, unit_kernel, grid, base, h).values
    shifted = solve_forward(p, unit_kernel, grid, u + h).values
    assert eta.shape == (101, 2)
    np.testing.assert_allclose(eta, shifted - base.x, atol=1e-8)
    np.testing.assert_array_equal(eta[0], 0.0)


def test_gradient_matches_finite_differences(example_problem, example_kernel):
    grid = Grid(0.0, 1.0, 200)
    u = np.zeros(201)
    h = np.cos(np.pi * grid.nodes)
    base = solve_bundle(example_problem, example_kernel, grid, u)
    derivative = directional_derivative(example_problem, example_kernel, grid, base, h)

    eps = 1e-4
    plus = solve_bundle(example_problem, example_kernel, grid, u + eps * h).J
    minus = solve_bundle(example_problem, example_kernel, grid, u - eps * h).J
    assert derivative == pytest.approx((plus - minus) / (2.0 * eps), rel=1e-4)


def test_state_depends_continuously_on_control(unit_kernel):
    p = make_problem("0", "u - sin(x)", x_a=(0.0,))
    grid = Grid(0.0, 1.0, 200)
    u = np.ones(201)
    h = np.cos(2.0 * grid.nodes)
    base = solve_bundle(p, unit_kernel, grid, u)
    eta = solve_variational(p, unit_kernel, grid, base, h).values

    ratios, remainders = [], []
    for eps in (1e-1, 1e-2, 1e-3):
        x_eps = solve_forward(p, unit_kernel, grid, u + eps * h).values
        ratios.append(np.max(np.abs(x_eps - base.x)) / eps)
        remainders.append(np.max(np.abs(x_eps - base.x - eps * eta)) / eps)
    assert max(ratios) <= 2.0 * min(ratios)
    assert remainders[0] > remainders[1] > remainders[2]


def test_objective_with_pole_raises():
    p = make_problem("1/(t - 0.5)", "u")
    grid = Grid(0.0, 1.0, 4)
    bundle = TrajectoryBundle(grid, np.zeros(5), np.zeros(5))
    with pytest.raises(ExpressionDomainError) as info:
        evaluate_objective(p, bundle)
    assert info.value.point == {"t": 0.5}


def test_objective_with_removable_singularity():
    p = make_problem("sin(t - 0.5)/(t - 0.5)", "u")
    grid = Grid(0.0, 1.0, 4)
    bundle = TrajectoryBundle(grid, np.zeros(5), np.zeros(5))
    values = p.eval_L(grid.nodes, bundle.x, bundle.u)
    assert values[2] == pytest.approx(1.0, abs=1e-9)
    assert np.isfinite(evaluate_objective(p, bundle))
