"""
Expression evaluation, forward-mode partials and (x,u)-block Hessians

Bindings map variable names to floats or numpy arrays; arrays broadcast, so
one call evaluates an expression on a whole grid. Domain violations raise
:class:`ExpressionDomainError` carrying a boolean mask of offending entries.
"""
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import special

from docsolve.config import settings
from docsolve.core.exceptions import (
    ExpressionDomainError,
    InputError,
    NonDifferentiableError,
    UnboundVariableError,
)
from docsolve.services.expr.dual import Dual, chain, deriv_of, has_derivative, value_of
from docsolve.services.expr.nodes import (
    FUNCTION_ARITY,
    BinaryOp,
    Call,
    Expr,
    Negate,
    Number,
    Variable,
)
from docsolve.services.expr.parser import parse

Value = Union[float, np.ndarray]
Bindings = Mapping[str, Value]


def _fail(message: str, bad, cls=ExpressionDomainError):
    raise cls(message, mask=np.asarray(bad, dtype=bool))


def _check(bad, message: str, cls=ExpressionDomainError) -> None:
    if np.any(bad):
        _fail(message, bad, cls)


def _divide(a, b):
    _check(np.asarray(value_of(b)) == 0.0, "division by zero")
    return a / b


def _power(a, b):
    av = np.asarray(value_of(a), dtype=float)
    bv = np.asarray(value_of(b), dtype=float)
    if has_derivative(b):
        # variable exponent: a^b = exp(b ln a)
        _check(av <= 0.0, "non-positive base with variable exponent")
        val = np.power(av, bv)
        tangent = val * (deriv_of(b) * np.log(av) + bv * deriv_of(a) / av)
        return Dual(val, tangent)
    _check((av < 0.0) & (bv != np.floor(bv)), "negative base with non-integer exponent")
    _check((av == 0.0) & (bv < 0.0), "division by zero")
    with np.errstate(all="ignore"):
        val = np.power(av, bv)
        if not has_derivative(a):
            return val
        slope = np.where(bv == 0.0, 0.0, bv * np.power(av, bv - 1.0))
    _check(
        (av == 0.0) & (bv > 0.0) & (bv < 1.0) & (np.asarray(deriv_of(a)) != 0.0),
        "power with exponent below one is not differentiable at zero",
    )
    return Dual(val, slope * a.deriv)


def _unary(name: str, x):
    v = np.asarray(value_of(x), dtype=float)
    with np.errstate(all="ignore"):
        if name == "sin":
            return chain(x, np.sin(v), np.cos(v))
        if name == "cos":
            return chain(x, np.cos(v), -np.sin(v))
        if name == "exp":
            e = np.exp(v)
            return chain(x, e, e)
        if name == "ln":
            _check(v <= 0.0, "ln of non-positive value")
            return chain(x, np.log(v), 1.0 / v)
        if name == "sqrt":
            _check(v < 0.0, "sqrt of negative value")
            r = np.sqrt(v)
            if has_derivative(x):
                _check((v == 0.0) & (np.asarray(x.deriv) != 0.0),
                       "sqrt is not differentiable at zero")
                return Dual(r, x.deriv / (2.0 * r))
            return r
        if name == "abs":
            if has_derivative(x):
                _check((v == 0.0) & (np.asarray(x.deriv) != 0.0),
                       "abs is not differentiable at zero", NonDifferentiableError)
            return chain(x, np.abs(v), np.sign(v))
        if name == "gamma":
            _check((v <= 0.0) & (v == np.floor(v)), "gamma pole at non-positive integer")
            g = special.gamma(v)
            if has_derivative(x):
                return Dual(g, g * special.digamma(v) * x.deriv)
            return g
    raise InputError(f"Unknown function '{name}'")


def _eval(node: Expr, env: Bindings):
    if isinstance(node, Number):
        return node.value
    if isinstance(node, Variable):
        try:
            return env[node.name]
        except KeyError:
            raise UnboundVariableError(node.name) from None
    if isinstance(node, Negate):
        return -_eval(node.operand, env)
    if isinstance(node, BinaryOp):
        left = _eval(node.left, env)
        right = _eval(node.right, env)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            return _divide(left, right)
        return _power(left, right)
    if isinstance(node, Call):
        args = [_eval(arg, env) for arg in node.args]
        if node.name == "pow":
            return _power(args[0], args[1])
        return _unary(node.name, args[0])
    raise TypeError(f"Unknown expression node: {node!r}")


def _as_tree(e: Union[Expr, str]) -> Expr:
    return parse(e) if isinstance(e, str) else e


def _check_bindings(b: Bindings) -> None:
    shadowed = sorted(set(b) & set(FUNCTION_ARITY))
    if shadowed:
        raise InputError(f"Bindings shadow function names: {', '.join(shadowed)}")


def _finish(result, shape):
    out = np.broadcast_to(np.asarray(value_of(result), dtype=float), shape)
    if out.ndim == 0:
        return float(out)
    return np.array(out)


def _shape(b: Bindings) -> tuple:
    return np.broadcast_shapes(*(np.shape(v) for v in b.values())) if b else ()


def evaluate(e: Union[Expr, str], b: Bindings) -> Value:
    """Evaluate an expression; returns a float for scalar bindings"""
    tree = _as_tree(e)
    _check_bindings(b)
    return _finish(_eval(tree, b), _shape(b))


def partials(e: Union[Expr, str], wrt: Sequence[str], b: Bindings) -> np.ndarray:
    """Exact first partial derivatives, one dual pass per variable

    Result shape is ``broadcast(bindings) + (len(wrt),)``.
    """
    tree = _as_tree(e)
    _check_bindings(b)
    shape = _shape(b)
    columns = []
    for name in wrt:
        if name not in b:
            raise UnboundVariableError(name)
        env = dict(b)
        env[name] = Dual(b[name], 1.0)
        result = _eval(tree, env)
        columns.append(np.broadcast_to(np.asarray(deriv_of(result), dtype=float), shape))
    if not columns:
        return np.zeros(shape + (0,))
    return np.stack(columns, axis=-1)


def hessian_xu(
    e: Union[Expr, str],
    b: Bindings,
    wrt: Sequence[str],
    rel_step: Optional[float] = None,
) -> np.ndarray:
    """Second derivatives over the (x,u) block

    Central differences of the dual-number gradient with step
    ``rel_step * max(1, |coordinate|)``, symmetrized as (H + H^T)/2.
    Result shape is ``broadcast(bindings) + (k, k)``.
    """
    tree = _as_tree(e)
    _check_bindings(b)
    step_scale = settings.HESSIAN_REL_STEP if rel_step is None else rel_step
    shape = _shape(b)
    k = len(wrt)
    hess = np.zeros(shape + (k, k))
    for j, name in enumerate(wrt):
        if name not in b:
            raise UnboundVariableError(name)
        center = np.asarray(b[name], dtype=float)
        step = step_scale * np.maximum(1.0, np.abs(center))
        plus = dict(b)
        plus[name] = center + step
        minus = dict(b)
        minus[name] = center - step
        g_plus = partials(tree, wrt, plus)
        g_minus = partials(tree, wrt, minus)
        hess[..., :, j] = (g_plus - g_minus) / (2.0 * np.broadcast_to(step, shape)[..., None])
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))
