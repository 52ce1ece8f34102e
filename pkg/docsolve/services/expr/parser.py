"""
Pratt parser for the expression grammar

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = primary , [ "^" , unary ] ;          (* right associative *)
    primary = number | call | identifier | "(" , expr , ")" ;
    call    = function , "(" , expr , { "," , expr } , ")" ;
    number  = digits , [ "." , [ digits ] ] , [ exponent ]
            | "." , digits , [ exponent ] ;
    function = "sin" | "cos" | "exp" | "ln" | "sqrt" | "pow" | "abs" | "gamma" ;

No implicit multiplication. Offsets in errors are byte offsets into the
UTF-8 source.
"""
import re
from dataclasses import dataclass
from typing import List

from docsolve.core.exceptions import ExpressionSyntaxError
from docsolve.services.expr.nodes import (
    FUNCTION_ARITY,
    BinaryOp,
    Call,
    Expr,
    Negate,
    Number,
    Variable,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)

# left binding powers of the infix operators
_INFIX_POWER = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_POWER = 30

_PRIMARY_EXPECTED = ("number", "identifier", "'('", "'-'")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


def tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise ExpressionSyntaxError(
                f"Unexpected character {source[pos]!r}",
                _byte_offset(source, pos),
                _PRIMARY_EXPECTED,
            )
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, match.group(), _byte_offset(source, pos)))
        pos = match.end()
    tokens.append(Token("end", "", _byte_offset(source, len(source))))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.current
        if token.kind != "op" or token.text != text:
            found = token.text or "end of input"
            raise ExpressionSyntaxError(f"Unexpected {found!r}", token.offset, (f"'{text}'",))
        return self.advance()

    def expression(self, min_power: int = 0) -> Expr:
        left = self.prefix()
        while True:
            token = self.current
            if token.kind != "op" or token.text not in _INFIX_POWER:
                return left
            power = _INFIX_POWER[token.text]
            if power < min_power:
                return left
            self.advance()
            if token.text == "^":
                # right associative; the exponent may carry a unary minus
                right = self.expression(power)
            else:
                right = self.expression(power + 1)
            left = BinaryOp(token.text, left, right)

    def prefix(self) -> Expr:
        token = self.current
        if token.kind == "number":
            self.advance()
            return Number(float(token.text))
        if token.kind == "ident":
            self.advance()
            return self.identifier(token)
        if token.kind == "op" and token.text == "-":
            self.advance()
            return Negate(self.expression(_UNARY_POWER))
        if token.kind == "op" and token.text == "(":
            self.advance()
            inner = self.expression()
            self.expect(")")
            return inner
        found = token.text or "end of input"
        raise ExpressionSyntaxError(f"Unexpected {found!r}", token.offset, _PRIMARY_EXPECTED)

    def identifier(self, token: Token) -> Expr:
        name = token.text
        is_call = self.current.kind == "op" and self.current.text == "("
        if name not in FUNCTION_ARITY:
            if is_call:
                raise ExpressionSyntaxError(
                    f"Unknown function '{name}'", token.offset, tuple(sorted(FUNCTION_ARITY))
                )
            return Variable(name)
        if not is_call:
            raise ExpressionSyntaxError(
                f"Function name '{name}' used as a variable", self.current.offset, ("'('",)
            )
        self.advance()
        args = [self.expression()]
        while self.current.kind == "op" and self.current.text == ",":
            self.advance()
            args.append(self.expression())
        self.expect(")")
        arity = FUNCTION_ARITY[name]
        if len(args) != arity:
            raise ExpressionSyntaxError(
                f"Function '{name}' takes {arity} argument(s), got {len(args)}",
                token.offset,
            )
        return Call(name, tuple(args))


def parse(source: str) -> Expr:
    """Parse expression text into a syntax tree"""
    if not source or not source.strip():
        raise ExpressionSyntaxError("Empty expression", 0, _PRIMARY_EXPECTED)
    parser = _Parser(source)
    tree = parser.expression()
    token = parser.current
    if token.kind != "end":
        raise ExpressionSyntaxError(
            f"Unexpected {token.text!r}", token.offset, ("operator", "end of input")
        )
    return tree
