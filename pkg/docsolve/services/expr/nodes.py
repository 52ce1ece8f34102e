"""
Expression syntax tree

Nodes are frozen dataclasses: structurally comparable, hashable and safe to
share between threads.
"""
from dataclasses import dataclass
from typing import Iterator, Tuple, Union

FUNCTION_ARITY = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "ln": 1,
    "sqrt": 1,
    "abs": 1,
    "gamma": 1,
    "pow": 2,
}


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Negate:
    operand: "Expr"


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple["Expr", ...]


Expr = Union[Number, Variable, Negate, BinaryOp, Call]


def walk(node: Expr) -> Iterator[Expr]:
    """Yield every node of the tree, parents first"""
    yield node
    if isinstance(node, Negate):
        yield from walk(node.operand)
    elif isinstance(node, BinaryOp):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Call):
        for arg in node.args:
            yield from walk(arg)


def variables(node: Expr) -> frozenset[str]:
    """Names of all variables referenced by the tree"""
    return frozenset(n.name for n in walk(node) if isinstance(n, Variable))


def uses_function(node: Expr, name: str) -> bool:
    return any(isinstance(n, Call) and n.name == name for n in walk(node))


def is_smooth(node: Expr) -> bool:
    """False when the tree contains the non-differentiable abs"""
    return not uses_function(node, "abs")


def rename(node: Expr, mapping: dict) -> Expr:
    """Copy of the tree with variables renamed through ``mapping``"""
    if isinstance(node, Variable):
        return Variable(mapping.get(node.name, node.name))
    if isinstance(node, Negate):
        return Negate(rename(node.operand, mapping))
    if isinstance(node, BinaryOp):
        return BinaryOp(node.op, rename(node.left, mapping), rename(node.right, mapping))
    if isinstance(node, Call):
        return Call(node.name, tuple(rename(a, mapping) for a in node.args))
    return node


def to_source(node: Expr) -> str:
    """Unparse to text that parses back to the same tree

    Binary operations are fully parenthesized.
    """
    if isinstance(node, Number):
        return repr(float(node.value))
    if isinstance(node, Variable):
        return node.name
    if isinstance(node, Negate):
        return f"-({to_source(node.operand)})"
    if isinstance(node, BinaryOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"Unknown expression node: {node!r}")
