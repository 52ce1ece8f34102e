"""
Discrete fractional operators on a uniform grid

Single-order building blocks:

* left Caputo derivative, L1 scheme;
* left Riemann-Liouville derivative, L1 plus the lower-terminal term
  ``x(a)(t-a)^{-alpha}/Gamma(1-alpha)``;
* left RL integral, product trapezoid rule;
* right-sided versions of all three by reflection ``M[::-1, ::-1]``.

Distributed-order operators are kernel-weighted sums of the building
blocks. All operators are dense triangular matrices so that the discrete
transpose needed by the adjoint solver is literal.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy import special
from scipy.linalg import toeplitz

from docsolve.config import settings
from docsolve.core.exceptions import DimensionError, GridError, OperatorError
from docsolve.core.logging import get_logger
from docsolve.services.distkernel import DistributionKernel

logger = get_logger(__name__)

UNIFORM_RTOL = 1e-9


# ----------------------------------------------------------------------
# Grid and sampled functions
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    a: float
    b: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise GridError("Grid endpoints must be finite")
        if not self.b > self.a:
            raise GridError(f"Grid needs b > a, got a={self.a}, b={self.b}")
        if int(self.N) != self.N or self.N < 2:
            raise GridError(f"Grid needs an integer N >= 2, got {self.N}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.a + np.arange(self.N + 1) * self.h

    @classmethod
    def from_nodes(cls, t) -> "Grid":
        """Recover the grid from sample times; they must be uniform"""
        t = np.asarray(t, dtype=float)
        if t.ndim != 1 or t.size < 3:
            raise GridError("At least three sample times are needed")
        grid = cls(float(t[0]), float(t[-1]), t.size - 1)
        if not np.allclose(t, grid.nodes, rtol=0.0, atol=UNIFORM_RTOL * (grid.b - grid.a)):
            raise GridError("Sample times are not uniformly spaced", error_code="non_uniform")
        return grid


@dataclass(frozen=True, eq=False)
class SampledFn:
    """Values at the N+1 grid nodes, stored as an (N+1, d) array"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != self.grid.N + 1:
            raise DimensionError(
                f"Expected {self.grid.N + 1} samples, got array of shape {np.shape(self.values)}"
            )
        if not np.all(np.isfinite(values)):
            raise DimensionError("Sampled function has non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def column(self, j: int = 0) -> np.ndarray:
        return self.values[:, j]

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "SampledFn":
        return cls(grid, np.broadcast_to(np.asarray(fn(grid.nodes), dtype=float), (grid.N + 1,)))


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, SampledFn) else np.asarray(x, dtype=float)


# ----------------------------------------------------------------------
# Operator kinds and matrices
# ----------------------------------------------------------------------

class OperatorKind(str, Enum):
    CAPUTO_LEFT = "caputo-left"
    CAPUTO_RIGHT = "caputo-right"
    RL_LEFT = "rl-left"
    RL_RIGHT = "rl-right"
    RL_INTEGRAL_LEFT = "rl-int-left"
    RL_INTEGRAL_RIGHT = "rl-int-right"
    DIST_CAPUTO_LEFT = "dist-caputo-left"
    DIST_CAPUTO_RIGHT = "dist-caputo-right"
    DIST_RL_LEFT = "dist-rl-left"
    DIST_RL_RIGHT = "dist-rl-right"
    DIST_RL_INTEGRAL_LEFT = "dist-rl-int-left"
    DIST_RL_INTEGRAL_RIGHT = "dist-rl-int-right"

    @property
    def is_distributed(self) -> bool:
        return self.value.startswith("dist-")

    @property
    def is_right(self) -> bool:
        return self.value.endswith("-right")

    @property
    def is_integral(self) -> bool:
        return "-int-" in self.value

    @property
    def single(self) -> "OperatorKind":
        """Single-order kind underlying a distributed kind"""
        return OperatorKind(self.value[len("dist-"):]) if self.is_distributed else self


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    matrix: np.ndarray
    kind: OperatorKind
    grid: Grid
    order: Optional[float] = None
    kernel: Optional[DistributionKernel] = None

    def __post_init__(self):
        self.matrix.setflags(write=False)

    def apply(self, x: Union[SampledFn, np.ndarray]) -> np.ndarray:
        values = _values(x)
        if values.shape[0] != self.grid.N + 1:
            raise DimensionError(
                f"Operator on {self.grid.N + 1} nodes applied to {values.shape[0]} samples"
            )
        return self.matrix @ values


# ----------------------------------------------------------------------
# Single-order weights
# ----------------------------------------------------------------------

def l1_weights(alpha: float, N: int) -> np.ndarray:
    """b_0 = 1, b_j = (j+1)^{1-alpha} - j^{1-alpha}"""
    j = np.arange(N + 1, dtype=float)
    b = (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)
    b[0] = 1.0
    return b


def _caputo_left(alpha: float, N: int, h: float) -> np.ndarray:
    b = l1_weights(alpha, N)
    lag = np.empty(N + 1)
    lag[0] = b[0]
    lag[1:] = b[1:] - b[:-1]
    mat = toeplitz(lag, np.zeros(N + 1))
    mat[1:, 0] = -b[: N]
    mat[0, :] = 0.0
    return mat * (h ** (-alpha) * special.rgamma(2.0 - alpha))


def _rl_left(alpha: float, N: int, h: float) -> np.ndarray:
    mat = _caputo_left(alpha, N, h)
    scale = special.rgamma(1.0 - alpha)
    if scale != 0.0:
        i = np.arange(N + 1, dtype=float)
        # t = a is singular; row 0 takes the value at the nearest node
        i[0] = 1.0
        mat[:, 0] += scale * (i * h) ** (-alpha)
    return mat


def _rl_integral_left(rho: float, N: int, h: float) -> np.ndarray:
    if rho == 0.0:
        return np.eye(N + 1)
    m = np.arange(N + 1, dtype=float)
    p = rho + 1.0
    lag = np.zeros(N + 1)
    lag[0] = 1.0
    lag[1:] = (m[1:] + 1.0) ** p + (m[1:] - 1.0) ** p - 2.0 * m[1:] ** p
    mat = toeplitz(lag, np.zeros(N + 1))
    i = m[1:]
    mat[1:, 0] = (i - 1.0) ** p - (i - 1.0 - rho) * i**rho
    mat[0, :] = 0.0
    return mat * (h**rho * special.rgamma(rho + 2.0))


def _rl_integral_left_last_row(rho: float, N: int, h: float) -> np.ndarray:
    """Row N of the left product-trapezoid integral, without the full matrix"""
    if rho == 0.0:
        row = np.zeros(N + 1)
        row[-1] = 1.0
        return row
    p = rho + 1.0
    m = np.arange(N, 0, -1, dtype=float)
    row = np.empty(N + 1)
    row[:-1] = (m + 1.0) ** p + (m - 1.0) ** p - 2.0 * m**p
    row[0] = (N - 1.0) ** p - (N - 1.0 - rho) * float(N) ** rho
    row[-1] = 1.0
    return row * (h**rho * special.rgamma(rho + 2.0))


def _single(kind: OperatorKind, order: float, N: int, h: float) -> np.ndarray:
    base = {
        OperatorKind.CAPUTO_LEFT: _caputo_left,
        OperatorKind.CAPUTO_RIGHT: _caputo_left,
        OperatorKind.RL_LEFT: _rl_left,
        OperatorKind.RL_RIGHT: _rl_left,
        OperatorKind.RL_INTEGRAL_LEFT: _rl_integral_left,
        OperatorKind.RL_INTEGRAL_RIGHT: _rl_integral_left,
    }[kind]
    mat = base(order, N, h)
    if kind.is_right:
        mat = np.ascontiguousarray(mat[::-1, ::-1])
    return mat


def _check_derivative_order(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise OperatorError(f"Derivative order must lie in (0, 1), got {alpha}")


def _check_integral_order(rho: float) -> None:
    if not 0.0 < rho <= 1.0:
        raise OperatorError(f"Integral order must lie in (0, 1], got {rho}")


def single_order_matrix(kind: Union[OperatorKind, str], order: float, grid: Grid) -> OperatorMatrix:
    """Single-order operator of the given kind"""
    kind = OperatorKind(kind)
    if kind.is_distributed:
        raise OperatorError(f"'{kind.value}' is a distributed kind; use distributed_matrix")
    if kind.is_integral:
        _check_integral_order(order)
    else:
        _check_derivative_order(order)
    return OperatorMatrix(_single(kind, order, grid.N, grid.h), kind, grid, order=order)


def caputo_left_matrix(alpha: float, grid: Grid) -> OperatorMatrix:
    return single_order_matrix(OperatorKind.CAPUTO_LEFT, alpha, grid)


def rl_left_matrix(alpha: float, grid: Grid) -> OperatorMatrix:
    return single_order_matrix(OperatorKind.RL_LEFT, alpha, grid)


def rl_right_matrix(alpha: float, grid: Grid) -> OperatorMatrix:
    return single_order_matrix(OperatorKind.RL_RIGHT, alpha, grid)


def rl_integral_right_matrix(order: float, grid: Grid) -> OperatorMatrix:
    return single_order_matrix(OperatorKind.RL_INTEGRAL_RIGHT, order, grid)


# ----------------------------------------------------------------------
# Distributed-order operators
# ----------------------------------------------------------------------

def _chunk_sum(kind: OperatorKind, pairs, N: int, h: float) -> np.ndarray:
    total = np.zeros((N + 1, N + 1))
    for alpha, weight in pairs:
        order = 1.0 - alpha if kind.is_integral else alpha
        total += weight * _single(kind, order, N, h)
    return total


@lru_cache(maxsize=4)
def _distributed(kind: OperatorKind, kernel: DistributionKernel, grid: Grid) -> np.ndarray:
    single = kind.single
    pairs = list(kernel.pairs())
    workers = max(1, min(settings.THREADS, len(pairs)))
    if workers == 1:
        return _chunk_sum(single, pairs, grid.N, grid.h)

    chunks = [pairs[i::workers] for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        partial_sums = list(pool.map(lambda c: _chunk_sum(single, c, grid.N, grid.h), chunks))
    # merge in chunk order so the result is reproducible for a fixed worker count
    total = partial_sums[0]
    for part in partial_sums[1:]:
        total = total + part
    return total


def distributed_matrix(
    kind: Union[OperatorKind, str],
    kernel: DistributionKernel,
    grid: Grid,
) -> OperatorMatrix:
    """Kernel-weighted sum of single-order matrices

    Integral kinds use order 1 - alpha_j. A node at alpha = 1 contributes
    the classical backward difference (derivatives) or the identity
    (integrals).
    """
    kind = OperatorKind(kind)
    if not kind.is_distributed:
        raise OperatorError(f"'{kind.value}' is not a distributed kind")
    if any(not 0.0 < alpha <= 1.0 for alpha in kernel.nodes):
        raise OperatorError("Kernel nodes must lie in (0, 1]")
    logger.debug("Assembling %s on N=%d with M=%d", kind.value, grid.N, kernel.M)
    matrix = _distributed(kind, kernel, grid)
    return OperatorMatrix(matrix, kind, grid, kernel=kernel)


def build_operator(
    kind: Union[OperatorKind, str],
    grid: Grid,
    kernel: Optional[DistributionKernel] = None,
    order: Optional[float] = None,
) -> OperatorMatrix:
    """Dispatch on the kind: distributed kinds need a kernel, single kinds an order"""
    kind = OperatorKind(kind)
    if kind.is_distributed:
        if kernel is None:
            raise OperatorError(f"'{kind.value}' needs an order distribution")
        return distributed_matrix(kind, kernel, grid)
    if order is None:
        raise OperatorError(f"'{kind.value}' needs an order")
    return single_order_matrix(kind, order, grid)


# ----------------------------------------------------------------------
# Quadrature and identity checks
# ----------------------------------------------------------------------

def trapezoid_weights(grid: Grid) -> np.ndarray:
    """Diagonal of Q = h diag(1/2, 1, ..., 1, 1/2)"""
    q = np.full(grid.N + 1, grid.h)
    q[0] = q[-1] = 0.5 * grid.h
    return q


def terminal_correction(kernel: DistributionKernel, grid: Grid) -> np.ndarray:
    """sum_j c_j (t-a)^{-alpha_j} / Gamma(1-alpha_j) at nodes 1..N (node 0 set to 0)"""
    tau = grid.nodes - grid.a
    out = np.zeros(grid.N + 1)
    for alpha, weight in kernel.pairs():
        out[1:] += weight * special.rgamma(1.0 - alpha) * tau[1:] ** (-alpha)
    return out


def caputo_rl_relation_residual(kernel: DistributionKernel, x: SampledFn) -> float:
    """sup over nodes i >= 1 of |C x - (RL x - x(a) * correction)|"""
    grid = x.grid
    caputo = distributed_matrix(OperatorKind.DIST_CAPUTO_LEFT, kernel, grid).apply(x)
    rl = distributed_matrix(OperatorKind.DIST_RL_LEFT, kernel, grid).apply(x)
    correction = terminal_correction(kernel, grid)[:, None] * x.values[0][None, :]
    gap = caputo - (rl - correction)
    return float(np.max(np.abs(gap[1:])))


def integration_by_parts_residual(kernel: DistributionKernel, x: SampledFn, y: SampledFn) -> float:
    """Discrete residual of the distributed integration-by-parts formula

    ``int x C[y] - [y I_{b-}[x]]_a^b - int y D_{b-}[x]`` with the right RL
    derivative split into its Caputo part and the terminal singular term
    ``x(b) sum_j c_j I^{1-alpha_j}_{a+}[y](b)``, which is integrated
    exactly.
    """
    grid = x.grid
    if y.grid != grid:
        raise GridError("x and y live on different grids")
    xv, yv = x.values, y.values
    q = trapezoid_weights(grid)[:, None]

    caputo_y = distributed_matrix(OperatorKind.DIST_CAPUTO_LEFT, kernel, grid).apply(yv)
    integral_x = distributed_matrix(OperatorKind.DIST_RL_INTEGRAL_RIGHT, kernel, grid).apply(xv)
    caputo_right_x = distributed_matrix(OperatorKind.DIST_CAPUTO_RIGHT, kernel, grid).apply(xv)

    lhs = np.sum(q * xv * caputo_y)
    boundary = np.sum(yv[-1] * integral_x[-1] - yv[0] * integral_x[0])
    singular = 0.0
    for alpha, weight in kernel.pairs():
        if alpha < 1.0:
            row = _rl_integral_left_last_row(1.0 - alpha, grid.N, grid.h)
            singular += weight * np.sum(xv[-1] * (row @ yv))
    rhs = np.sum(q * yv * caputo_right_x) + singular
    return float(abs(lhs - boundary - rhs))
