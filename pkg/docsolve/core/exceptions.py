"""
Custom exception classes

Every error carries the exit code the command line maps it to:
1 for bad input, 3 for computation failures.
"""
from typing import Any, Optional, Sequence

import numpy as np


class DocsolveError(Exception):
    """Base class for toolkit errors"""
    exit_code = 3

    def __init__(self, message: str, error_code: Optional[str] = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


# ----------------------------------------------------------------------
# Input errors (exit 1)
# ----------------------------------------------------------------------

class InputError(DocsolveError):
    """Invalid user input"""
    exit_code = 1


class ExpressionSyntaxError(InputError):
    """Expression text does not follow the grammar"""
    def __init__(self, message: str, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected {', '.join(self.expected)})"
        super().__init__(detail, error_code="syntax")


class ProblemFileError(InputError):
    """Problem file is malformed or fails schema validation"""


class TrajectoryFileError(InputError):
    """Trajectory or sampled-function CSV is malformed"""


class KernelError(InputError):
    """Order distribution violates its standing assumptions"""


class GridError(InputError):
    """Time grid is invalid or incompatible"""


class OperatorError(InputError):
    """Operator order or kind outside its admissible range"""


class DimensionError(InputError):
    """Array shapes disagree with the problem dimensions"""


class GronwallInputError(InputError):
    """Gronwall envelope preconditions violated"""


# ----------------------------------------------------------------------
# Computation errors (exit 3)
# ----------------------------------------------------------------------

class ExpressionDomainError(DocsolveError):
    """Expression evaluated outside the domain of an operation

    ``mask`` marks the offending entries when evaluation ran on arrays.
    """
    def __init__(
        self,
        message: str,
        mask: Optional[np.ndarray] = None,
        point: Optional[dict[str, Any]] = None,
    ):
        self.mask = mask
        self.point = point
        if point:
            message = f"{message} at {point}"
        super().__init__(message, error_code="domain")


class NonDifferentiableError(ExpressionDomainError):
    """Derivative requested at a kink of abs"""


class UnboundVariableError(DocsolveError):
    """Expression references a variable without a binding"""
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unbound variable '{name}'", error_code="unbound")


class SpecialFunctionError(DocsolveError):
    """Special function evaluated at a pole or failed to converge"""


class SolverError(DocsolveError):
    """Numerical solver failure"""


class NewtonConvergenceError(SolverError):
    """Per-step Newton iteration did not converge"""
    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} (step {step})", error_code="newton")


class AdjointSolveError(SolverError):
    """Adjoint linear system is singular"""
    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})", error_code="adjoint")


class OptimalityUpdateError(SolverError):
    """No stationary point of the Hamiltonian was found at a node"""
    def __init__(self, message: str, node: int):
        self.node = node
        super().__init__(f"{message} (node {node})", error_code="optimality")


class UnsupportedBoundaryModeError(SolverError):
    """Requested boundary mode is not handled by this solver"""
