"""
Forward-mode dual numbers

``value`` and ``deriv`` may be floats or numpy arrays of a common shape, so a
single pass differentiates an expression at many points at once.
"""
import numpy as np


class Dual:
    __slots__ = ("value", "deriv")

    # ndarray operators return NotImplemented so the reflected methods run
    __array_ufunc__ = None

    def __init__(self, value, deriv=0.0):
        self.value = value
        self.deriv = deriv

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.deriv!r})"

    def __neg__(self) -> "Dual":
        return Dual(-self.value, -self.deriv)

    def __add__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.deriv + other.deriv)
        return Dual(self.value + other, self.deriv)

    __radd__ = __add__

    def __sub__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.deriv - other.deriv)
        return Dual(self.value - other, self.deriv)

    def __rsub__(self, other) -> "Dual":
        return Dual(other - self.value, -self.deriv)

    def __mul__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.value * other.deriv + self.deriv * other.value,
            )
        return Dual(self.value * other, self.deriv * other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.value / other.value,
                (self.deriv * other.value - self.value * other.deriv) / other.value**2,
            )
        return Dual(self.value / other, self.deriv / other)

    def __rtruediv__(self, other) -> "Dual":
        return Dual(other / self.value, -other * self.deriv / self.value**2)


def value_of(x):
    return x.value if isinstance(x, Dual) else x


def deriv_of(x):
    return x.deriv if isinstance(x, Dual) else 0.0


def has_derivative(x) -> bool:
    """True when x carries a non-zero tangent anywhere"""
    return isinstance(x, Dual) and bool(np.any(np.asarray(x.deriv) != 0.0))


def chain(x, fx, dfx):
    """Apply the chain rule for a unary function with value fx and slope dfx"""
    if isinstance(x, Dual):
        return Dual(fx, dfx * x.deriv)
    return fx
