"""
Pontryagin maximum principle: adjoint, optimality update, forward-backward
sweep and residual audit

Hamiltonian H(t, x, u, lambda) = L(t, x, u) + lambda . f(t, x, u).

The primary adjoint is the discrete transpose of the forward scheme. With
A the distributed Caputo matrix and Q the trapezoid weights, stationarity
of the discrete Lagrangian in x_j gives

    sum_{k>=1} A[k, j] q_k lambda_k - q_j f_x(j)^T lambda_j = q_j L_x(j)

for every node j whose state is free. The right RL discretization of
D_{b-} lambda = H_x with the integral transversality row is kept as an
independent cross-check.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import linalg, optimize

from docsolve.config import settings
from docsolve.core.exceptions import (
    AdjointSolveError,
    DimensionError,
    InputError,
    OptimalityUpdateError,
    UnsupportedBoundaryModeError,
)
from docsolve.core.logging import get_logger
from docsolve.schemas.report import GridInfo, PmpResidualReport, SweepRecord
from docsolve.services.distkernel import DistributionKernel
from docsolve.services.expr import Expr, Variable, parse
from docsolve.services.fde import evaluate_objective, solve_forward
from docsolve.services.fracops import (
    Grid,
    OperatorKind,
    SampledFn,
    distributed_matrix,
    trapezoid_weights,
)
from docsolve.services.problem import BoundaryMode, ProblemSpec, TrajectoryBundle, sample_in_t

logger = get_logger(__name__)

ADJOINT_METHODS = ("transpose", "direct")
MAX_CONDITION = 1e14
BRACKET_LIMIT = 1e6


# ----------------------------------------------------------------------
# Hamiltonian derivatives
# ----------------------------------------------------------------------

def _samples(x: Union[SampledFn, np.ndarray], rows: int, cols: int, label: str) -> np.ndarray:
    values = x.values if isinstance(x, SampledFn) else np.asarray(x, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape != (rows, cols):
        raise DimensionError(f"{label} has shape {values.shape}, expected ({rows}, {cols})")
    return values


def hamiltonian_gradients(p: ProblemSpec, t, x, u, lam) -> Tuple[np.ndarray, np.ndarray]:
    """(H_x, H_u) at sample rows, shapes (K, n) and (K, m)"""
    grad = p.grad_L(t, x, u)
    jac = p.jac_f(t, x, u)
    fx, fu = jac[:, :, : p.n], jac[:, :, p.n:]
    hx = grad[:, : p.n] + np.einsum("kij,ki->kj", fx, lam)
    hu = grad[:, p.n:] + np.einsum("kim,ki->km", fu, lam)
    return hx, hu


# ----------------------------------------------------------------------
# Adjoint
# ----------------------------------------------------------------------

def _condition(matrix: np.ndarray) -> float:
    try:
        return float(np.linalg.cond(matrix, 1))
    except np.linalg.LinAlgError:
        return float("inf")


def _check_diagonal(diag: np.ndarray) -> None:
    magnitude = np.abs(diag)
    smallest = float(magnitude.min())
    estimate = float(magnitude.max()) / smallest if smallest > 0.0 else float("inf")
    if estimate > MAX_CONDITION:
        raise AdjointSolveError("Adjoint system is singular", estimate)


def _dense_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        solution = linalg.solve(matrix, rhs)
    except linalg.LinAlgError as exc:
        raise AdjointSolveError(f"Adjoint system is singular: {exc}", _condition(matrix)) from exc
    if not np.all(np.isfinite(solution)):
        raise AdjointSolveError("Adjoint solution is not finite", _condition(matrix))
    return solution


def _transpose_initial(A: np.ndarray, q: np.ndarray, fx: np.ndarray, lx: np.ndarray) -> np.ndarray:
    """Rows j = 1..N; the system is upper triangular in lambda_1..lambda_N"""
    N = A.shape[0] - 1
    n = lx.shape[1]
    lam = np.zeros((N + 1, n))
    rhs = q[1:, None] * lx[1:]
    if n == 1:
        system = A[1:, 1:].T * q[None, 1:] - np.diag(q[1:] * fx[1:, 0, 0])
        _check_diagonal(np.diag(system))
        lam[1:, 0] = linalg.solve_triangular(system, rhs[:, 0], lower=False)
    else:
        _check_diagonal(np.array([
            np.linalg.det(A[j, j] * q[j] * np.eye(n) - q[j] * fx[j].T) for j in range(1, N + 1)
        ]))
        weighted = q[:, None] * lam
        for j in range(N, 0, -1):
            coupling = A[j + 1:, j] @ weighted[j + 1:]
            block = q[j] * (A[j, j] * np.eye(n) - fx[j].T)
            lam[j] = np.linalg.solve(block, rhs[j - 1] - coupling)
            weighted[j] = q[j] * lam[j]
    return lam


def _transpose_terminal(A: np.ndarray, q: np.ndarray, fx: np.ndarray, lx: np.ndarray) -> np.ndarray:
    """Rows j = 0..N-1 (x(b) fixed, x(a) free), solved densely"""
    N = A.shape[0] - 1
    n = lx.shape[1]
    base = A[1:, :N].T * q[None, 1:]
    system = np.kron(base, np.eye(n))
    for j in range(1, N):
        block = slice((j - 1) * n, j * n)
        system[j * n:(j + 1) * n, block] -= q[j] * fx[j].T
    rhs = (q[:N, None] * lx[:N]).ravel()
    lam = np.zeros((N + 1, n))
    lam[1:] = _dense_solve(system, rhs).reshape(N, n)
    return lam


def _transpose_adjoint(p: ProblemSpec, kernel: DistributionKernel, grid: Grid,
                       x: np.ndarray, u: np.ndarray) -> np.ndarray:
    A = distributed_matrix(OperatorKind.DIST_CAPUTO_LEFT, kernel, grid).matrix
    q = trapezoid_weights(grid)
    jac = p.jac_f(grid.nodes, x, u)
    fx = jac[:, :, : p.n]
    lx = p.grad_L(grid.nodes, x, u)[:, : p.n]

    if p.mode is BoundaryMode.TERMINAL_FIXED:
        lam = _transpose_terminal(A, q, fx, lx)
    else:
        lam = _transpose_initial(A, q, fx, lx)
    # lambda_0 is not determined by the discrete system
    lam[0] = 2.0 * lam[1] - lam[2]
    return lam


def _direct_adjoint(p: ProblemSpec, kernel: DistributionKernel, grid: Grid,
                    x: np.ndarray, u: np.ndarray) -> np.ndarray:
    R = distributed_matrix(OperatorKind.DIST_RL_RIGHT, kernel, grid).matrix
    I = distributed_matrix(OperatorKind.DIST_RL_INTEGRAL_RIGHT, kernel, grid).matrix
    N, n = grid.N, p.n
    jac = p.jac_f(grid.nodes, x, u)
    fx = jac[:, :, :n]
    lx = p.grad_L(grid.nodes, x, u)[:, :n]

    full = np.kron(R, np.eye(n))
    for k in range(N + 1):
        full[k * n:(k + 1) * n, k * n:(k + 1) * n] -= fx[k].T

    # the adjoint equation holds on nodes 0..N-1; the integral condition takes the place of node N
    rows = np.arange(0, N)
    constraint = 0 if p.mode is BoundaryMode.TERMINAL_FIXED else N - 1
    picked = (rows[:, None] * n + np.arange(n)[None, :]).ravel()
    system = np.vstack([full[picked], np.kron(I[constraint], np.eye(n))])
    rhs = np.concatenate([lx[rows].ravel(), np.zeros(n)])
    return _dense_solve(system, rhs).reshape(N + 1, n)


def solve_adjoint(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    x: Union[SampledFn, np.ndarray],
    u: Union[SampledFn, np.ndarray],
    method: str = "transpose",
) -> SampledFn:
    """Adjoint samples lambda at all N+1 nodes

    ``method="transpose"`` is the discrete transpose of the forward scheme;
    ``method="direct"`` discretizes the right RL derivative and appends the
    integral transversality row.
    """
    if method not in ADJOINT_METHODS:
        raise InputError(f"Unknown adjoint method {method!r}; use one of {ADJOINT_METHODS}")
    xs = _samples(x, grid.N + 1, p.n, "state")
    us = _samples(u, grid.N + 1, p.m, "control")
    solver = _transpose_adjoint if method == "transpose" else _direct_adjoint
    return SampledFn(grid, solver(p, kernel, grid, xs, us))


# ----------------------------------------------------------------------
# Optimality condition
# ----------------------------------------------------------------------

def _hu(p: ProblemSpec, t, x, u, lam) -> np.ndarray:
    return hamiltonian_gradients(p, t, x, u, lam)[1]


def _huu(p: ProblemSpec, t, x, u, lam) -> np.ndarray:
    """(K, m, m) central differences of H_u in u"""
    K = u.shape[0]
    out = np.zeros((K, p.m, p.m))
    for j in range(p.m):
        step = settings.HESSIAN_REL_STEP * np.maximum(1.0, np.abs(u[:, j]))
        plus, minus = u.copy(), u.copy()
        plus[:, j] += step
        minus[:, j] -= step
        out[:, :, j] = (_hu(p, t, x, plus, lam) - _hu(p, t, x, minus, lam)) / (2.0 * step[:, None])
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def _bracket_scalar(p: ProblemSpec, t: float, x: np.ndarray, lam: np.ndarray,
                    start: float, node: int) -> float:
    def hu(value):
        return float(_hu(p, np.array([t]), x[None, :], np.array([[value]]), lam[None, :])[0, 0])

    width = max(1.0, abs(start))
    g0 = hu(start)
    if g0 == 0.0:
        return start
    while abs(start) + width <= BRACKET_LIMIT:
        for other in (start - width, start + width):
            if np.sign(hu(other)) != np.sign(g0):
                lo, hi = sorted((start, other))
                return float(optimize.brentq(hu, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))
        width *= 2.0
    raise OptimalityUpdateError("No stationary point of the Hamiltonian in u", node)


def optimality_update(
    p: ProblemSpec,
    grid: Grid,
    x: Union[SampledFn, np.ndarray],
    lam: Union[SampledFn, np.ndarray],
    guess: Optional[Union[SampledFn, np.ndarray]] = None,
) -> SampledFn:
    """Solve H_u(t, x, u, lambda) = 0 for u at every node

    Newton on all nodes at once with a finite-difference H_uu, damped per
    node; scalar controls that fail fall back to a bracketed root search.
    """
    rows = grid.N + 1
    t = grid.nodes
    xs = _samples(x, rows, p.n, "state")
    ls = _samples(lam, rows, p.n, "adjoint")
    u = np.zeros((rows, p.m)) if guess is None else _samples(guess, rows, p.m, "control").copy()

    g = _hu(p, t, xs, u, ls)
    done = np.zeros(rows, dtype=bool)
    for _ in range(settings.NEWTON_MAX_ITER):
        hess = _huu(p, t, xs, u, ls)
        try:
            delta = np.linalg.solve(hess, -g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        delta[done] = 0.0
        damping = np.ones(rows)
        trial = u + delta
        g_trial = _hu(p, t, xs, trial, ls)
        for _ in range(30):
            worse = (np.max(np.abs(g_trial), axis=1) > np.max(np.abs(g), axis=1)) & ~done
            if not worse.any():
                break
            damping[worse] *= 0.5
            trial = u + damping[:, None] * delta
            g_trial = _hu(p, t, xs, trial, ls)
        small_step = np.max(np.abs(damping[:, None] * delta), axis=1) <= (
            settings.NEWTON_TOL * (1.0 + np.max(np.abs(u), axis=1))
        )
        u, g = trial, g_trial
        done |= small_step
        if done.all():
            break

    failed = np.flatnonzero(~done | ~np.all(np.isfinite(u), axis=1))
    if failed.size:
        if p.m != 1:
            raise OptimalityUpdateError("Newton on the optimality condition failed", int(failed[0]))
        logger.debug("Bracketing fallback at %d node(s)", failed.size)
        for k in failed:
            start = float(u[k, 0]) if np.isfinite(u[k, 0]) else 0.0
            u[k, 0] = _bracket_scalar(p, t[k], xs[k], ls[k], start, int(k))
    return SampledFn(grid, u)


# ----------------------------------------------------------------------
# Forward-backward sweep
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepParams:
    theta: float = 0.5
    tol: float = 1e-8
    max_iter: int = 200
    u0: Tuple[Expr, ...] = field(default_factory=lambda: (parse("0"),))

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise InputError(f"Relaxation theta must lie in (0, 1], got {self.theta}")
        if not self.tol > 0.0:
            raise InputError(f"Sweep tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise InputError(f"max_iter must be at least 1, got {self.max_iter}")
        trees = tuple(parse(e) if isinstance(e, str) else e for e in self.u0)
        object.__setattr__(self, "u0", trees)

    @classmethod
    def from_settings(cls, **overrides) -> "SweepParams":
        values = dict(
            theta=settings.SWEEP_THETA, tol=settings.SWEEP_TOL, max_iter=settings.SWEEP_MAX_ITER
        )
        values.update(overrides)
        return cls(**values)

    def initial_control(self, p: ProblemSpec, grid: Grid) -> np.ndarray:
        samples = sample_in_t(self.u0, grid)
        return np.broadcast_to(samples, (grid.N + 1, p.m)).copy()


@dataclass(frozen=True, eq=False)
class SweepResult:
    bundle: TrajectoryBundle
    history: List[SweepRecord]
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.history)


def _forward_adjoint(p, kernel, grid, u, method):
    x = solve_forward(p, kernel, grid, u).values
    lam = solve_adjoint(p, kernel, grid, x, u, method=method).values
    return x, lam


def fbsm_solve(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    params: Optional[SweepParams] = None,
    method: str = "transpose",
) -> SweepResult:
    """Forward-backward sweep on the Pontryagin system

    Iterates forward solve, adjoint solve, optimality update and the
    relaxation u <- theta u_new + (1 - theta) u until the sup-norm control
    change drops below ``tol``. A non-converged run returns the iterate with
    the smallest control change.
    """
    if p.mode is not BoundaryMode.INITIAL_FIXED:
        raise UnsupportedBoundaryModeError(
            f"The sweep needs a fixed initial state; boundary mode is {p.mode.value}",
            error_code="boundary_mode",
        )
    params = params or SweepParams.from_settings()
    u = params.initial_control(p, grid)
    history: List[SweepRecord] = []
    best_u, best_change = u, np.inf
    converged = False

    for iteration in range(1, params.max_iter + 1):
        x, lam = _forward_adjoint(p, kernel, grid, u, method)
        J = evaluate_objective(p, TrajectoryBundle(grid, x, u))
        u_new = optimality_update(p, grid, x, lam, guess=u).values
        change = float(np.max(np.abs(u_new - u)))
        u = params.theta * u_new + (1.0 - params.theta) * u

        record = SweepRecord(iteration=iteration, control_change=change, J=J)
        history.append(record)
        logger.info(
            "sweep %d: control change %.3e, J %.12g", iteration, change, J,
            extra={"payload": record.model_dump()},
        )
        if change < best_change:
            best_u, best_change = u, change
        if change <= params.tol:
            converged = True
            break

    if not converged:
        logger.warning(
            "Sweep did not converge in %d iterations (best control change %.3e)",
            params.max_iter, best_change,
        )
        u = best_u

    x, lam = _forward_adjoint(p, kernel, grid, u, method)
    bundle = TrajectoryBundle(grid, x, u, lam)
    bundle = bundle.with_objective(evaluate_objective(p, bundle))
    return SweepResult(bundle, history, converged)


# ----------------------------------------------------------------------
# Residual audit
# ----------------------------------------------------------------------

def grid_info(kernel: DistributionKernel, grid: Grid) -> GridInfo:
    return GridInfo(
        a=grid.a, b=grid.b, N=grid.N, h=grid.h, kernel_nodes=kernel.M, kernel_mass=kernel.mass
    )


def _adjoint_residual(R: np.ndarray, lam: np.ndarray, hx: np.ndarray) -> float:
    # nodes N-1 and N sit next to the singular end of the right operators
    gap = (R @ lam - hx)[:-2]
    return float(np.max(np.abs(gap))) if gap.size else 0.0


def pmp_residuals(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    bundle: TrajectoryBundle,
) -> PmpResidualReport:
    """Residuals of the three Pontryagin conditions on the direct discretization"""
    bundle.check_against(p)
    lam = bundle.adjoint.values
    hx, hu = hamiltonian_gradients(p, grid.nodes, bundle.x, bundle.u, lam)
    R = distributed_matrix(OperatorKind.DIST_RL_RIGHT, kernel, grid).matrix
    integral = distributed_matrix(OperatorKind.DIST_RL_INTEGRAL_RIGHT, kernel, grid).apply(lam)

    side_b = side_a = None
    if p.mode in (BoundaryMode.INITIAL_FIXED, BoundaryMode.FREE):
        side_b = float(np.max(np.abs(integral[grid.N - 1])))
    if p.mode in (BoundaryMode.TERMINAL_FIXED, BoundaryMode.FREE):
        side_a = float(np.max(np.abs(integral[0])))

    return PmpResidualReport(
        optimality=float(np.max(np.abs(hu))),
        adjoint=_adjoint_residual(R, lam, hx),
        transversality_b=side_b,
        transversality_a=side_a,
        boundary_mode=p.mode.value,
        grid=grid_info(kernel, grid),
    )


def euler_lagrange_residual(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    bundle: TrajectoryBundle,
) -> float:
    """Adjoint residual with lambda = -L_u eliminated; needs f = u"""
    identity = all(fk == Variable(f"u{k + 1}") for k, fk in enumerate(p.f))
    if p.n != p.m or not identity:
        raise InputError("The Euler-Lagrange reduction needs f = u")
    bundle.check_against(p)
    grad = p.grad_L(grid.nodes, bundle.x, bundle.u)
    lam = -grad[:, p.n:]
    R = distributed_matrix(OperatorKind.DIST_RL_RIGHT, kernel, grid).matrix
    return _adjoint_residual(R, lam, grad[:, : p.n])


def _imposed_rows(p: ProblemSpec, N: int) -> np.ndarray:
    if p.mode is BoundaryMode.TERMINAL_FIXED:
        return np.arange(0, N)
    return np.arange(1, N + 1)


def discrete_ibp_gap(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    bundle: TrajectoryBundle,
    y: Union[SampledFn, np.ndarray],
) -> float:
    """Discrete integration-by-parts defect of the bundle's adjoint

    ``<lambda, A y>_Q`` against the adjoint equation on the imposed rows
    plus the boundary contributions ``y_j (A^T Q lambda)_j`` of the rows
    left free. Zero up to rounding for the transpose adjoint.
    """
    bundle.check_against(p)
    ys = _samples(y, grid.N + 1, p.n, "test function")
    A = distributed_matrix(OperatorKind.DIST_CAPUTO_LEFT, kernel, grid).matrix
    q = trapezoid_weights(grid)
    lam = bundle.adjoint.values

    jac = p.jac_f(grid.nodes, bundle.x, bundle.u)
    fx = jac[:, :, : p.n]
    hx = p.grad_L(grid.nodes, bundle.x, bundle.u)[:, : p.n]
    hx[1:] += np.einsum("kij,ki->kj", fx[1:], lam[1:])

    lhs = float(np.sum(q[:, None] * lam * (A @ ys)))
    transposed = A.T @ (q[:, None] * lam)
    imposed = np.zeros(grid.N + 1, dtype=bool)
    imposed[_imposed_rows(p, grid.N)] = True
    rhs = float(np.sum(ys[imposed] * q[imposed, None] * hx[imposed]))
    rhs += float(np.sum(ys[~imposed] * transposed[~imposed]))
    return abs(lhs - rhs)


def reference_errors(bundle: TrajectoryBundle, reference: TrajectoryBundle) -> Tuple[float, float, Optional[float]]:
    """Sup-norm errors of x, u and lambda against a reference bundle"""
    ex = float(np.max(np.abs(bundle.x - reference.x)))
    eu = float(np.max(np.abs(bundle.u - reference.u)))
    el = None
    if bundle.lam is not None and reference.lam is not None:
        el = float(np.max(np.abs(bundle.lam - reference.lam)))
    return ex, eu, el
