"""
Tests for the adjoint, optimality update, sweep and residual audit
"""
import math

import numpy as np
import pytest

from conftest import control_profile, make_problem, vector_problem
from docsolve.config import settings
from docsolve.core.exceptions import InputError, OptimalityUpdateError, UnsupportedBoundaryModeError
from docsolve.services import distkernel, pmp
from docsolve.services.fde import solve_bundle
from docsolve.services.fracops import Grid, OperatorKind, distributed_matrix, trapezoid_weights
from docsolve.services.mangasarian import sufficiency_report
from docsolve.services.pmp import (
    SweepParams,
    discrete_ibp_gap,
    euler_lagrange_residual,
    fbsm_solve,
    optimality_update,
    pmp_residuals,
    reference_errors,
    solve_adjoint,
)
from docsolve.services.problem import TrajectoryBundle, reference_bundle
from docsolve.schemas.report import Verdict


def lq_problem(mode="initial_fixed", x_a=(1.0,)):
    """max int -x^2 - u^2 subject to x' = u"""
    return make_problem("-x^2 - u^2", "u", x_a=x_a, mode=mode)


def lq_solution(t):
    x = np.cosh(1.0 - t) / math.cosh(1.0)
    u = -np.sinh(1.0 - t) / math.cosh(1.0)
    return x, u, 2.0 * u


ORDER_ONE = distkernel.degenerate(1.0)


# ----------------------------------------------------------------------
# Adjoint
# ----------------------------------------------------------------------

@pytest.mark.parametrize("method", ["transpose", "direct"])
def test_adjoint_vanishes_on_reference(example_problem, example_kernel, method):
    grid = Grid(0.0, 1.0, 300)
    bundle = reference_bundle(example_problem, grid)
    lam = solve_adjoint(example_problem, example_kernel, grid, bundle.x, bundle.u, method=method)
    np.testing.assert_allclose(lam.values, 0.0, atol=1e-6)


def test_adjoint_vanishes_without_state_dependence(unit_kernel):
    p = make_problem("-u^2", "u")
    grid = Grid(0.0, 1.0, 100)
    t = grid.nodes
    lam = solve_adjoint(p, unit_kernel, grid, np.sin(t), np.cos(t))
    np.testing.assert_array_equal(lam.values, 0.0)


@pytest.mark.parametrize("method", ["transpose", "direct"])
def test_order_one_adjoint_matches_classical_solution(method):
    grid = Grid(0.0, 1.0, 2000)
    x, u, lam_exact = lq_solution(grid.nodes)
    lam = solve_adjoint(lq_problem(), ORDER_ONE, grid, x, u, method=method)
    assert np.max(np.abs(lam.values[:, 0] - lam_exact)) <= 5e-3


def test_adjoint_paths_agree_under_refinement():
    gaps = []
    for N in (200, 400):
        grid = Grid(0.0, 1.0, N)
        x, u, _ = lq_solution(grid.nodes)
        transpose = solve_adjoint(lq_problem(), ORDER_ONE, grid, x, u, method="transpose").values
        direct = solve_adjoint(lq_problem(), ORDER_ONE, grid, x, u, method="direct").values
        gaps.append(np.max(np.abs(transpose - direct)))
    assert gaps[1] < gaps[0]


def test_adjoint_paths_agree_for_distributed_kernel(example_kernel):
    gaps = []
    for N in (200, 400):
        grid = Grid(0.0, 1.0, N)
        x, u, _ = lq_solution(grid.nodes)
        transpose = solve_adjoint(lq_problem(), example_kernel, grid, x, u, method="transpose").values[:, 0]
        direct = solve_adjoint(lq_problem(), example_kernel, grid, x, u, method="direct").values[:, 0]
        q = trapezoid_weights(grid)
        gaps.append(float(q @ np.abs(transpose - direct)) / float(q @ np.abs(direct)))
    assert gaps[1] < gaps[0]
    assert gaps[1] <= 5e-2


@pytest.mark.parametrize("method", ["transpose", "direct"])
def test_two_state_order_one_adjoint(method):
    # -lambda1' = -2 x1 and -lambda2' = lambda1 with lambda(b) = 0; x1 = t
    grid = Grid(0.0, 1.0, 1000)
    t = grid.nodes
    x = np.stack([t, np.ones_like(t)], axis=-1)
    lam = solve_adjoint(vector_problem(), ORDER_ONE, grid, x, np.zeros(1001), method=method).values
    np.testing.assert_allclose(lam[:, 0], t**2 - 1.0, atol=1e-2)
    np.testing.assert_allclose(lam[:, 1], t - t**3 / 3.0 - 2.0 / 3.0, atol=1e-2)


@pytest.mark.parametrize("method", ["transpose", "direct"])
def test_two_state_terminal_fixed_adjoint(method):
    # lambda(a) = 0 gives lambda1 = t^2 and lambda2 = -t^3/3 for x1 = t
    p = vector_problem(mode="terminal_fixed", x_a=(0.0, 0.0))
    grid = Grid(0.0, 1.0, 1000)
    t = grid.nodes
    x = np.stack([t, np.zeros_like(t)], axis=-1)
    lam = solve_adjoint(p, ORDER_ONE, grid, x, np.ones(1001), method=method).values
    assert np.max(np.abs(lam[:-1, 0] - t[:-1] ** 2)) <= 5e-3
    assert np.max(np.abs(lam[:-1, 1] + t[:-1] ** 3 / 3.0)) <= 5e-3


@pytest.mark.parametrize("method", ["transpose", "direct"])
def test_terminal_fixed_adjoint(method):
    # lambda' = 2x with lambda(a) = 0; x = t gives lambda = t^2
    p = lq_problem(mode="terminal_fixed", x_a=(1.0,))
    grid = Grid(0.0, 1.0, 1000)
    t = grid.nodes
    lam = solve_adjoint(p, ORDER_ONE, grid, t, np.ones(1001), method=method).values[:, 0]
    assert np.max(np.abs(lam[:-1] - t[:-1] ** 2)) <= 5e-3


def test_unknown_adjoint_method(unit_kernel):
    grid = Grid(0.0, 1.0, 10)
    with pytest.raises(InputError):
        solve_adjoint(lq_problem(), unit_kernel, grid, np.zeros(11), np.zeros(11), method="shooting")


def test_discrete_transpose_identity(example_problem, example_kernel):
    grid = Grid(0.0, 1.0, 200)
    base = solve_bundle(example_problem, example_kernel, grid, np.zeros(201))
    lam = solve_adjoint(example_problem, example_kernel, grid, base.x, base.u).values
    assert np.max(np.abs(lam)) > 0.0
    y = np.random.default_rng(11).standard_normal(201)
    gap = discrete_ibp_gap(example_problem, example_kernel, grid, base.with_adjoint(lam), y)
    assert gap <= 1e-10


# ----------------------------------------------------------------------
# Optimality update
# ----------------------------------------------------------------------

def test_optimality_update_with_zero_adjoint(example_problem):
    grid = Grid(0.0, 1.0, 200)
    t = grid.nodes
    u = optimality_update(example_problem, grid, t**2, np.zeros(201))
    np.testing.assert_allclose(u.values[:, 0], control_profile(t), atol=1e-7)


def test_optimality_update_tracks_adjoint():
    p = make_problem("-(u - 3)^2", "u")
    grid = Grid(0.0, 1.0, 50)
    t = grid.nodes
    u = optimality_update(p, grid, np.zeros(51), t)
    np.testing.assert_allclose(u.values[:, 0], 3.0 + t / 2.0, atol=1e-8)


def test_optimality_update_without_control_in_dynamics():
    p = make_problem("-u^2", "x")
    grid = Grid(0.0, 1.0, 20)
    u = optimality_update(p, grid, np.ones(21), np.ones(21))
    np.testing.assert_allclose(u.values, 0.0, atol=1e-12)


def test_optimality_update_with_degenerate_curvature():
    # H_u = 1 - u^3 is flat at the starting guess u = 0
    p = make_problem("u - u^4/4", "0")
    grid = Grid(0.0, 1.0, 20)
    u = optimality_update(p, grid, np.zeros(21), np.zeros(21))
    np.testing.assert_allclose(u.values, 1.0, atol=1e-8)


def test_optimality_update_with_two_controls():
    p = make_problem("-(u1 - 1)^2 - (u2 + 2)^2 - x1^2", ("u1", "u2"), x_a=(0.0, 0.0), n=2, m=2)
    grid = Grid(0.0, 1.0, 30)
    t = grid.nodes
    u = optimality_update(p, grid, np.zeros((31, 2)), np.stack([t, -t], axis=-1)).values
    np.testing.assert_allclose(u[:, 0], 1.0 + t / 2.0, atol=1e-8)
    np.testing.assert_allclose(u[:, 1], -2.0 - t / 2.0, atol=1e-8)


def test_optimality_update_without_stationary_point_in_two_controls():
    p = make_problem("u1 + u2", ("u1", "u2"), x_a=(0.0, 0.0), n=2, m=2)
    grid = Grid(0.0, 1.0, 10)
    with pytest.raises(OptimalityUpdateError):
        optimality_update(p, grid, np.zeros((11, 2)), np.zeros((11, 2)))


# ----------------------------------------------------------------------
# Forward-backward sweep
# ----------------------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs", [{"theta": 0.0}, {"theta": 1.5}, {"tol": 0.0}, {"max_iter": 0}]
)
def test_sweep_params_validation(kwargs):
    with pytest.raises(InputError):
        SweepParams(**kwargs)


def test_sweep_params_from_settings():
    params = SweepParams.from_settings(max_iter=7)
    assert params.max_iter == 7
    assert params.theta == 0.5


def test_trivial_sweep(unit_kernel):
    p = make_problem("-u^2", "u", x_a=(0.7,))
    result = fbsm_solve(p, unit_kernel, Grid(0.0, 1.0, 50))
    assert result.converged
    assert result.iterations == 1
    np.testing.assert_allclose(result.bundle.u, 0.0, atol=1e-12)
    np.testing.assert_allclose(result.bundle.x, 0.7, atol=1e-12)
    assert result.bundle.J == pytest.approx(0.0, abs=1e-12)


def test_order_one_sweep_matches_classical_solution():
    grid = Grid(0.0, 1.0, 1000)
    result = fbsm_solve(lq_problem(), ORDER_ONE, grid, SweepParams(theta=0.5, tol=1e-8))
    x, u, _ = lq_solution(grid.nodes)
    assert result.converged
    assert np.max(np.abs(result.bundle.u[:, 0] - u)) <= 1e-2
    assert np.max(np.abs(result.bundle.x[:, 0] - x)) <= 1e-2


def test_sweep_without_convergence_keeps_best_iterate():
    grid = Grid(0.0, 1.0, 100)
    result = fbsm_solve(lq_problem(), ORDER_ONE, grid, SweepParams(theta=0.5, tol=1e-14, max_iter=2))
    assert not result.converged
    assert result.iterations == 2
    assert [r.iteration for r in result.history] == [1, 2]
    assert result.bundle.lam is not None


def test_sweep_needs_initial_state(unit_kernel):
    p = make_problem("-u^2", "u", mode="free", x_a=())
    with pytest.raises(UnsupportedBoundaryModeError):
        fbsm_solve(p, unit_kernel, Grid(0.0, 1.0, 10))


def test_example_sweep_recovers_reference(example_problem, example_solution):
    bundle = example_solution.bundle
    t = bundle.grid.nodes
    assert example_solution.converged
    assert example_solution.iterations <= 200
    assert np.max(np.abs(bundle.x[:, 0] - t**2)) <= 2e-2
    assert np.max(np.abs(bundle.u[:, 0] - control_profile(t))) <= 2e-2
    assert -1e-3 <= bundle.J <= 1e-12

    ex, eu, el = reference_errors(bundle, reference_bundle(example_problem, bundle.grid))
    assert ex <= 2e-2 and eu <= 2e-2
    assert el is not None


def test_example_sweep_satisfies_euler_lagrange(example_problem, example_kernel, example_solution):
    grid = example_solution.bundle.grid
    residual = euler_lagrange_residual(example_problem, example_kernel, grid, example_solution.bundle)
    assert residual <= 5e-2


def test_converged_sweep_is_a_fixed_point(example_problem, example_kernel, example_solution):
    bundle = example_solution.bundle
    grid = bundle.grid
    report = pmp_residuals(example_problem, example_kernel, grid, bundle)
    curvature = pmp._huu(example_problem, grid.nodes, bundle.x, bundle.u, bundle.lam)
    assert example_solution.converged
    assert report.optimality <= 10.0 * 1e-8 * (1.0 + float(np.max(np.abs(curvature))))


def test_two_state_sweep(unit_kernel, vector_solution):
    p = vector_problem()
    bundle = vector_solution.bundle
    grid = bundle.grid
    assert vector_solution.converged
    # u = 0 keeps x1 = 1 and gives J = -1
    assert -1.0 < bundle.J < 0.0
    np.testing.assert_array_equal(bundle.x[0], [1.0, 0.0])

    A = distributed_matrix(OperatorKind.DIST_CAPUTO_LEFT, unit_kernel, grid).matrix
    forcing = p.eval_f(grid.nodes, bundle.x, bundle.u)
    assert np.max(np.abs((A @ bundle.x - forcing)[1:])) <= 1e-8

    report = pmp_residuals(p, unit_kernel, grid, bundle)
    assert report.worst() <= settings.RESIDUAL_TOL
    assert report.optimality <= 1e-6


def test_two_state_adjoint_paths_agree(unit_kernel, vector_solution):
    bundle = vector_solution.bundle
    grid = bundle.grid
    direct = solve_adjoint(vector_problem(), unit_kernel, grid, bundle.x, bundle.u, method="direct").values
    q = trapezoid_weights(grid)
    gap = q @ np.abs(bundle.lam - direct)
    assert np.all(gap <= 0.1 * (q @ np.abs(direct)))


def test_two_state_certificate_is_refused_on_multiplier_sign(vector_solution):
    cert = sufficiency_report(vector_problem(), vector_solution.bundle)
    assert [fc.function for fc in cert.functions] == ["L", "f1", "f2"]
    assert all(fc.concave for fc in cert.functions)
    assert cert.worst_eigenvalue == pytest.approx(0.0, abs=1e-8)
    assert cert.lambda_min < 0.0
    assert cert.verdict is Verdict.REFUSED
    assert [w.reason for w in cert.witnesses] == ["negative multiplier"]


def test_euler_lagrange_needs_identity_dynamics(unit_kernel):
    p = make_problem("-u^2", "u + x")
    grid = Grid(0.0, 1.0, 10)
    bundle = TrajectoryBundle(grid, np.zeros(11), np.zeros(11))
    with pytest.raises(InputError):
        euler_lagrange_residual(p, unit_kernel, grid, bundle)


# ----------------------------------------------------------------------
# Residual audit
# ----------------------------------------------------------------------

def test_residuals_of_zero_problem(unit_kernel):
    p = make_problem("0", "0")
    grid = Grid(0.0, 1.0, 40)
    zeros = np.zeros(41)
    report = pmp_residuals(p, unit_kernel, grid, TrajectoryBundle(grid, zeros, zeros, zeros))
    assert report.worst() == 0.0
    assert report.transversality_a is None
    assert report.grid.N == 40


def test_reference_residuals_do_not_grow(example_problem, example_kernel):
    reports = []
    for N in (500, 1000, 2000):
        grid = Grid(0.0, 1.0, N)
        reports.append(pmp_residuals(example_problem, example_kernel, grid, reference_bundle(example_problem, grid)))
    for coarse, fine in zip(reports, reports[1:]):
        assert fine.optimality <= coarse.optimality + 1e-12
        assert fine.adjoint <= coarse.adjoint + 1e-12
        assert fine.transversality_b <= coarse.transversality_b + 1e-12
    assert reports[-1].worst() <= 1e-8


def test_perturbed_adjoint_is_detected(example_problem, example_kernel):
    grid = Grid(0.0, 1.0, 500)
    bundle = reference_bundle(example_problem, grid)
    clean = pmp_residuals(example_problem, example_kernel, grid, bundle)
    shifted = pmp_residuals(example_problem, example_kernel, grid, bundle.with_adjoint(bundle.lam + 1.0))
    assert shifted.adjoint > clean.adjoint
    assert shifted.optimality > clean.optimality


# lambda = (1-t)^2 - 7/6 (1-t)^3 satisfies both transversality conditions for
# alpha = 1/2, and D_{b-} lambda = q(t) below
FREE_LAMBDA = "(1-t)^2 - 7/6*(1-t)^3"
FREE_Q = "2/gamma(2.5)*(1-t)^1.5 - 7/gamma(3.5)*(1-t)^2.5"


def test_free_mode_reports_both_transversality_sides():
    from docsolve.services.expr import evaluate

    p = make_problem(f"({FREE_Q})*x - u^2/2", "u", mode="free", x_a=())
    kernel = distkernel.degenerate(0.5)
    side_a, side_b = [], []
    for N in (100, 200, 400):
        grid = Grid(0.0, 1.0, N)
        lam = evaluate(FREE_LAMBDA, {"t": grid.nodes})
        bundle = TrajectoryBundle(grid, np.zeros(N + 1), lam, lam)
        report = pmp_residuals(p, kernel, grid, bundle)
        assert report.boundary_mode == "free"
        assert report.optimality <= 1e-12
        side_a.append(report.transversality_a)
        side_b.append(report.transversality_b)
    assert side_a[0] > side_a[1] > side_a[2]
    assert side_b[0] > side_b[1] > side_b[2]


def test_free_mode_transpose_adjoint_approximates_exact():
    from docsolve.services.expr import evaluate

    p = make_problem(f"({FREE_Q})*x - u^2/2", "u", mode="free", x_a=())
    grid = Grid(0.0, 1.0, 400)
    exact = evaluate(FREE_LAMBDA, {"t": grid.nodes})
    lam = solve_adjoint(p, distkernel.degenerate(0.5), grid, np.zeros(401), exact).values[:, 0]
    q = trapezoid_weights(grid)
    assert float(q @ np.abs(lam - exact)) <= 2e-2
