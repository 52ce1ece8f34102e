"""
Expression language for L, f and psi

Parsing, evaluation over numpy arrays, forward-mode partial derivatives and
(x,u)-block Hessians.
"""
from docsolve.services.expr.evaluate import Bindings, evaluate, hessian_xu, partials
from docsolve.services.expr.limits import with_removable_limits
from docsolve.services.expr.nodes import (
    FUNCTION_ARITY,
    BinaryOp,
    Call,
    Expr,
    Negate,
    Number,
    Variable,
    is_smooth,
    rename,
    to_source,
    variables,
)
from docsolve.services.expr.parser import parse

__all__ = [
    "FUNCTION_ARITY",
    "BinaryOp",
    "Bindings",
    "Call",
    "Expr",
    "Negate",
    "Number",
    "Variable",
    "evaluate",
    "hessian_xu",
    "is_smooth",
    "parse",
    "partials",
    "rename",
    "to_source",
    "variables",
    "with_removable_limits",
]
