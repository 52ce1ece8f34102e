"""
Pydantic schema for problem files
"""
from typing import List, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from docsolve.core.exceptions import ExpressionSyntaxError
from docsolve.services.expr import parse

ExprText = Union[str, float, int]


def _expression(value: ExprText) -> str:
    text = repr(float(value)) if isinstance(value, (int, float)) else value
    try:
        parse(text)
    except ExpressionSyntaxError as exc:
        raise ValueError(f"invalid expression {text!r}: {exc.message}") from exc
    return text


class StrictModel(BaseModel):
    class Config:
        extra = "forbid"


class Interval(StrictModel):
    a: float
    b: float

    @model_validator(mode="after")
    def check_order(self):
        if not self.b > self.a:
            raise ValueError(f"interval needs b > a, got a={self.a}, b={self.b}")
        return self


class Dims(StrictModel):
    n: int = Field(ge=1)
    m: int = Field(ge=1)

    @model_validator(mode="after")
    def check_controls(self):
        if self.m > self.n:
            raise ValueError(f"m={self.m} exceeds n={self.n}")
        return self


class Expressions(StrictModel):
    L: str
    f: List[str]
    psi: str = "1"

    @field_validator("L", "psi", mode="before")
    @classmethod
    def parse_scalar(cls, value):
        return _expression(value)

    @field_validator("f", mode="before")
    @classmethod
    def parse_list(cls, value):
        if isinstance(value, (str, int, float)):
            value = [value]
        return [_expression(v) for v in value]


class Boundary(StrictModel):
    mode: str = "initial_fixed"
    values: List[float] = []

    @field_validator("mode")
    @classmethod
    def check_mode(cls, value):
        if value not in ("initial_fixed", "terminal_fixed", "free"):
            raise ValueError(f"unknown boundary mode {value!r}")
        return value


class GridSettings(StrictModel):
    N: int = Field(ge=2)


class KernelSettings(StrictModel):
    M: int = Field(default=20, ge=1)
    alpha0: Optional[float] = Field(default=None, gt=0.0, le=1.0)


class SweepSettings(StrictModel):
    theta: float = Field(default=0.5, gt=0.0, le=1.0)
    tol: float = Field(default=1e-8, gt=0.0)
    max_iter: int = Field(default=200, ge=1)
    u0: List[str] = ["0"]

    @field_validator("u0", mode="before")
    @classmethod
    def parse_guess(cls, value):
        if isinstance(value, (str, int, float)):
            value = [value]
        return [_expression(v) for v in value]


class Reference(StrictModel):
    x_star: List[str]
    u_star: List[str]
    lambda_star: Optional[List[str]] = None

    @field_validator("x_star", "u_star", "lambda_star", mode="before")
    @classmethod
    def parse_entries(cls, value):
        if value is None:
            return value
        if isinstance(value, (str, int, float)):
            value = [value]
        return [_expression(v) for v in value]


class ProblemFile(StrictModel):
    """Problem file document; unknown keys are rejected"""
    description: str = ""
    interval: Interval
    dims: Dims = Dims(n=1, m=1)
    expressions: Expressions
    boundary: Boundary = Boundary()
    grid: GridSettings
    kernel: KernelSettings = KernelSettings()
    sweep: SweepSettings = SweepSettings()
    reference: Optional[Reference] = None

    @model_validator(mode="after")
    def check_dimensions(self):
        n, m = self.dims.n, self.dims.m
        if len(self.expressions.f) != n:
            raise ValueError(f"expressions.f has {len(self.expressions.f)} entries, expected {n}")
        if self.boundary.mode != "free" and len(self.boundary.values) != n:
            raise ValueError(f"boundary.values needs {n} entries")
        if len(self.sweep.u0) not in (1, m):
            raise ValueError(f"sweep.u0 needs 1 or {m} entries")
        return self
