"""
Order-distribution kernels

A kernel reduces ``int_0^1 psi(alpha) F(alpha) d(alpha)`` to the fixed sum
``sum_j c_j F(alpha_j)`` used by every distributed operator.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import special

from docsolve.config import settings
from docsolve.core.exceptions import KernelError
from docsolve.core.logging import get_logger
from docsolve.services.expr import Expr, evaluate, parse, to_source, variables

logger = get_logger(__name__)

MIN_MASS = 1e-12


@dataclass(frozen=True)
class DistributionKernel:
    """Quadrature nodes alpha_j and combined weights c_j = w_j psi(alpha_j)"""

    nodes: Tuple[float, ...]
    weights: Tuple[float, ...]
    mass: float
    psi: Optional[str] = None

    @property
    def M(self) -> int:
        return len(self.nodes)

    @property
    def is_degenerate(self) -> bool:
        return self.psi is None and self.M == 1

    def pairs(self):
        return zip(self.nodes, self.weights)


def legendre_rule(M: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped from [-1, 1] to [0, 1]"""
    x, w = special.roots_legendre(M)
    return 0.5 * (x + 1.0), 0.5 * w


def build(psi: Union[Expr, str], M: Optional[int] = None) -> DistributionKernel:
    """Build the kernel of an order distribution psi(alpha)"""
    count = settings.KERNEL_NODES if M is None else M
    if count < 1:
        raise KernelError(f"Kernel needs at least one node, got M={count}")

    tree = parse(psi) if isinstance(psi, str) else psi
    extra = sorted(variables(tree) - {"alpha"})
    if extra:
        raise KernelError(f"psi may only depend on alpha, found: {', '.join(extra)}")

    nodes, w = legendre_rule(count)
    psi_values = np.broadcast_to(np.asarray(evaluate(tree, {"alpha": nodes})), nodes.shape)
    if not np.all(np.isfinite(psi_values)):
        raise KernelError("psi is not finite at a quadrature node")
    negative = np.flatnonzero(psi_values < 0.0)
    if negative.size:
        j = int(negative[0])
        raise KernelError(
            f"psi is negative at alpha={nodes[j]:.6g} (value {psi_values[j]:.6g})",
            error_code="negative",
        )

    c = w * psi_values
    mass = float(np.sum(c))
    if mass <= MIN_MASS:
        raise KernelError(f"psi has mass {mass:.3e}; it must be positive", error_code="mass")

    logger.debug("Built kernel with M=%d nodes, mass=%.15g", count, mass)
    return DistributionKernel(
        nodes=tuple(float(v) for v in nodes),
        weights=tuple(float(v) for v in c),
        mass=mass,
        psi=to_source(tree),
    )


def degenerate(alpha0: float) -> DistributionKernel:
    """Single-order kernel: one node at alpha0 with unit weight"""
    if not 0.0 < alpha0 <= 1.0:
        raise KernelError(f"alpha0 must lie in (0, 1], got {alpha0}")
    return DistributionKernel(nodes=(float(alpha0),), weights=(1.0,), mass=1.0)
