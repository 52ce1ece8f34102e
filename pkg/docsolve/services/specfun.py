"""
Special functions: Gamma, log-Gamma, Mittag-Leffler and the fractional
Gronwall envelope
"""
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from docsolve.core.exceptions import GronwallInputError, SpecialFunctionError
from docsolve.core.logging import get_logger

logger = get_logger(__name__)

ML_MAX_TERMS = 10_000
ML_REL_TOL = 1e-16
GRONWALL_REL_TOL = 1e-12
GRONWALL_MAX_TERMS = 10_000


def _is_pole(x: np.ndarray) -> np.ndarray:
    return (x <= 0.0) & (x == np.floor(x))


def gamma(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Gamma function; raises at the poles 0, -1, -2, ..."""
    arr = np.asarray(x, dtype=float)
    if np.any(_is_pole(arr)):
        raise SpecialFunctionError(f"Gamma has a pole at {x}", error_code="pole")
    out = special.gamma(arr)
    return float(out) if out.ndim == 0 else out


def log_gamma(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """log|Gamma(x)|; raises at the poles"""
    arr = np.asarray(x, dtype=float)
    if np.any(_is_pole(arr)):
        raise SpecialFunctionError(f"Gamma has a pole at {x}", error_code="pole")
    out = special.gammaln(arr)
    return float(out) if out.ndim == 0 else out


def _max_argument(alpha: float) -> float:
    return 50.0 if alpha >= 0.3 else 1.0


def _mittag_leffler_scalar(alpha: float, beta: float, z: float) -> float:
    if z == 0.0:
        return float(special.rgamma(beta))

    log_z = np.log(abs(z))
    negative = z < 0.0
    total = 0.0
    largest = 0.0
    for k in range(ML_MAX_TERMS):
        arg = alpha * k + beta
        if _is_pole(np.asarray(arg)):
            term = 0.0
        else:
            sign = special.gammasgn(arg) * (-1.0 if negative and k % 2 else 1.0)
            term = sign * np.exp(k * log_z - special.gammaln(arg))
        total += term
        largest = max(largest, abs(term))
        if k > 0 and total != 0.0 and abs(term) <= ML_REL_TOL * abs(total):
            if largest > 1e8 * abs(total):
                logger.warning(
                    "Mittag-Leffler series lost precision to cancellation "
                    "(alpha=%g, beta=%g, z=%g)", alpha, beta, z,
                )
            return float(total)
    raise SpecialFunctionError(
        f"Mittag-Leffler series did not converge within {ML_MAX_TERMS} terms "
        f"(alpha={alpha}, beta={beta}, z={z})",
        error_code="convergence",
    )


def mittag_leffler(alpha: float, beta: float, z):
    """Two-parameter Mittag-Leffler function E_{alpha,beta}(z) for real z

    Direct power series. Arguments are limited to |z| <= 50 for
    alpha >= 0.3 and to |z| <= 1 below that.
    """
    if alpha <= 0.0:
        raise SpecialFunctionError(f"Mittag-Leffler needs alpha > 0, got {alpha}")
    zs = np.asarray(z, dtype=float)
    bound = _max_argument(alpha)
    if np.any(np.abs(zs) > bound):
        raise SpecialFunctionError(
            f"Mittag-Leffler argument outside |z| <= {bound:g} for alpha={alpha}",
            error_code="range",
        )
    if zs.ndim == 0:
        return _mittag_leffler_scalar(alpha, beta, float(zs))
    flat = [_mittag_leffler_scalar(alpha, beta, float(v)) for v in zs.ravel()]
    return np.array(flat).reshape(zs.shape)


@dataclass(frozen=True)
class GronwallEnvelope:
    times: np.ndarray
    values: np.ndarray
    truncation_index: int


def _samples(fn) -> np.ndarray:
    values = np.asarray(getattr(fn, "values", fn), dtype=float)
    if values.ndim == 2 and values.shape[1] == 1:
        values = values[:, 0]
    if values.ndim != 1:
        raise GronwallInputError("Gronwall inputs must be scalar sampled functions")
    return values


def gronwall_envelope(a_fn, b_fn, alpha: float, grid) -> GronwallEnvelope:
    """Upper bound of the fractional Gronwall inequality on a grid

    Evaluates ``a(t) + sum_{n>=1} (b(t)Gamma(alpha))^n / Gamma(n alpha)
    int_a^t (t-s)^{n alpha - 1} a(s) ds``. On each cell ``a`` is replaced by
    its larger endpoint value and the kernel is integrated exactly, so the
    result never falls below the continuum bound of the piecewise-linear
    interpolant of ``a``.
    """
    if not 0.0 < alpha <= 1.0:
        raise GronwallInputError(f"alpha must lie in (0, 1], got {alpha}")
    a = _samples(a_fn)
    b = _samples(b_fn)
    n_nodes = grid.N + 1
    if a.size != n_nodes or b.size != n_nodes:
        raise GronwallInputError(
            f"Expected {n_nodes} samples, got a={a.size}, b={b.size}"
        )
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise GronwallInputError("Gronwall inputs must be finite")
    if np.any(a < 0.0) or np.any(b < 0.0):
        raise GronwallInputError("Gronwall inputs must be non-negative")
    if np.any(np.diff(b) < 0.0):
        raise GronwallInputError("b must be monotone non-decreasing")

    length = grid.b - grid.a
    scaled = np.arange(n_nodes) / grid.N
    cell_max = np.maximum(a[:-1], a[1:])

    with np.errstate(divide="ignore"):
        log_b = np.log(b * special.gamma(alpha))

    running = a.copy()
    for n in range(1, GRONWALL_MAX_TERMS + 1):
        order = n * alpha
        kernel = np.diff(scaled**order)
        history = np.zeros(n_nodes)
        history[1:] = np.convolve(cell_max, kernel)[: grid.N]
        with np.errstate(over="ignore", under="ignore"):
            coef = np.where(
                b > 0.0,
                np.exp(n * log_b + order * np.log(length) - special.gammaln(order + 1.0)),
                0.0,
            )
        term = coef * history
        running = running + term
        if np.all(term <= GRONWALL_REL_TOL * running):
            logger.debug("Gronwall series truncated after %d terms", n)
            return GronwallEnvelope(np.array(grid.nodes), running, n)
    raise SpecialFunctionError(
        f"Gronwall series did not converge within {GRONWALL_MAX_TERMS} terms",
        error_code="convergence",
    )
