"""
Forward state solver and variational equation

Both march the distributed L1 operator A implicitly: row i of A splits into
the diagonal coefficient d_i = A[i, i] and the history A[i, :i] @ x[:i].
"""
from typing import Optional, Union

import numpy as np
from scipy import linalg

from docsolve.config import settings
from docsolve.core.exceptions import (
    DimensionError,
    NewtonConvergenceError,
    UnsupportedBoundaryModeError,
)
from docsolve.core.logging import get_logger
from docsolve.services.distkernel import DistributionKernel
from docsolve.services.fracops import Grid, OperatorKind, SampledFn, distributed_matrix, trapezoid_weights
from docsolve.services.problem import BoundaryMode, ProblemSpec, TrajectoryBundle

logger = get_logger(__name__)

MAX_DAMPING_STEPS = 30


def _control_samples(p: ProblemSpec, grid: Grid, u: Union[SampledFn, np.ndarray]) -> np.ndarray:
    values = u.values if isinstance(u, SampledFn) else np.asarray(u, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape != (grid.N + 1, p.m):
        raise DimensionError(
            f"Control samples have shape {values.shape}, expected ({grid.N + 1}, {p.m})"
        )
    return values


def _initial_state(p: ProblemSpec, x_a: Optional[np.ndarray]) -> np.ndarray:
    if x_a is not None:
        return np.asarray(x_a, dtype=float).reshape(p.n)
    if p.mode is not BoundaryMode.INITIAL_FIXED:
        raise UnsupportedBoundaryModeError(
            f"Forward integration needs x(a); boundary mode is {p.mode.value}",
            error_code="boundary_mode",
        )
    return p.x_a


def _newton_step(p: ProblemSpec, t: float, u: np.ndarray, d: float, history: np.ndarray,
                 guess: np.ndarray, step: int, tol: float, max_iter: int) -> np.ndarray:
    """Solve d z + history - f(t, z, u) = 0 by damped Newton"""
    n = p.n
    z = guess.copy()

    def residual(state):
        return d * state + history - p.eval_f(t, state[None, :], u[None, :])[0]

    g = residual(z)
    scale = max(1.0, abs(d) * float(np.max(np.abs(z))), float(np.max(np.abs(history))))
    for _ in range(max_iter):
        if np.max(np.abs(g)) <= tol * scale:
            return z
        fx = p.jac_f(t, z[None, :], u[None, :])[0][:, :n]
        jac = d * np.eye(n) - fx
        try:
            delta = linalg.solve(jac, -g)
        except linalg.LinAlgError as exc:
            raise NewtonConvergenceError(f"Singular Newton matrix: {exc}", step) from exc

        damping = 1.0
        norm_g = np.max(np.abs(g))
        for _ in range(MAX_DAMPING_STEPS):
            trial = z + damping * delta
            g_trial = residual(trial)
            if np.max(np.abs(g_trial)) < norm_g or damping < 1e-8:
                break
            damping *= 0.5
        if damping < 1.0:
            logger.debug("Newton damped to %.3g at step %d", damping, step)
        z, g = trial, g_trial
        scale = max(1.0, abs(d) * float(np.max(np.abs(z))), float(np.max(np.abs(history))))

    if np.max(np.abs(g)) <= tol * scale:
        return z
    raise NewtonConvergenceError(
        f"Newton did not converge in {max_iter} iterations (residual {np.max(np.abs(g)):.3e})",
        step,
    )


def solve_forward(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    u: Union[SampledFn, np.ndarray],
    x_a: Optional[np.ndarray] = None,
) -> SampledFn:
    """Solve C D^psi x = f(t, x, u), x(a) = x_a, by implicit marching"""
    controls = _control_samples(p, grid, u)
    A = distributed_matrix(OperatorKind.DIST_CAPUTO_LEFT, kernel, grid).matrix
    t = grid.nodes
    x = np.zeros((grid.N + 1, p.n))
    x[0] = _initial_state(p, x_a)

    if not p.state_dependent_dynamics():
        # f = f(t, u): the implicit march is one triangular solve
        forcing = p.eval_f(t, x, controls)
        rhs = forcing[1:] - A[1:, :1] @ x[:1]
        x[1:] = linalg.solve_triangular(A[1:, 1:], rhs, lower=True)
        return SampledFn(grid, x)

    for i in range(1, grid.N + 1):
        history = A[i, :i] @ x[:i]
        x[i] = _newton_step(
            p, t[i], controls[i], A[i, i], history, x[i - 1], i,
            settings.NEWTON_TOL, settings.NEWTON_MAX_ITER,
        )
    return SampledFn(grid, x)


def solve_variational(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    base: TrajectoryBundle,
    hdir: Union[SampledFn, np.ndarray],
) -> SampledFn:
    """Solve C D^psi eta = f_x eta + f_u h, eta(a) = 0, along the base trajectory"""
    direction = _control_samples(p, grid, hdir)
    base.check_against(p)
    A = distributed_matrix(OperatorKind.DIST_CAPUTO_LEFT, kernel, grid).matrix
    jac = p.jac_f(grid.nodes, base.x, base.u)
    fx, fu = jac[:, :, : p.n], jac[:, :, p.n:]
    forcing = np.einsum("kij,kj->ki", fu, direction)

    eta = np.zeros((grid.N + 1, p.n))
    if p.n == 1:
        system = A[1:, 1:] - np.diag(fx[1:, 0, 0])
        try:
            eta[1:, 0] = linalg.solve_triangular(system, forcing[1:, 0], lower=True)
        except linalg.LinAlgError as exc:
            step = int(np.flatnonzero(np.diag(system) == 0.0)[0]) + 1 if np.any(np.diag(system) == 0.0) else 1
            raise NewtonConvergenceError(f"Singular variational step: {exc}", step) from exc
        return SampledFn(grid, eta)

    eye = np.eye(p.n)
    for i in range(1, grid.N + 1):
        rhs = forcing[i] - A[i, :i] @ eta[:i]
        try:
            eta[i] = linalg.solve(A[i, i] * eye - fx[i], rhs)
        except linalg.LinAlgError as exc:
            raise NewtonConvergenceError(f"Singular variational step: {exc}", i) from exc
    return SampledFn(grid, eta)


def evaluate_objective(p: ProblemSpec, bundle: TrajectoryBundle) -> float:
    """Composite trapezoid rule of L along (x, u)"""
    bundle.check_against(p)
    grid = bundle.grid
    values = p.eval_L(grid.nodes, bundle.x, bundle.u)
    return float(trapezoid_weights(grid) @ values)


def directional_derivative(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    base: TrajectoryBundle,
    hdir: Union[SampledFn, np.ndarray],
) -> float:
    """dJ/d(eps) of J(u + eps h) at eps = 0 through the variational state"""
    direction = _control_samples(p, grid, hdir)
    eta = solve_variational(p, kernel, grid, base, direction).values
    grad = p.grad_L(grid.nodes, base.x, base.u)
    integrand = np.sum(grad[:, : p.n] * eta, axis=1) + np.sum(grad[:, p.n:] * direction, axis=1)
    return float(trapezoid_weights(grid) @ integrand)


def solve_bundle(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    u: Union[SampledFn, np.ndarray],
) -> TrajectoryBundle:
    """Forward solve plus objective, packed as a bundle without adjoint"""
    controls = _control_samples(p, grid, u)
    x = solve_forward(p, kernel, grid, controls)
    bundle = TrajectoryBundle(grid, x.values, controls)
    return bundle.with_objective(evaluate_objective(p, bundle))
