"""
Removable singularities in time

Closed-form controls such as ``t*(t-1)/ln(t)`` are undefined at isolated
nodes but extend continuously. :func:`with_removable_limits` evaluates a
time-dependent callable and replaces the failing entries by their limits.
"""
from typing import Callable, List, Optional, Tuple

import numpy as np

from docsolve.config import settings
from docsolve.core.exceptions import ExpressionDomainError
from docsolve.core.logging import get_logger

logger = get_logger(__name__)

# fn(times, index) evaluates at ``times`` for the sample entries ``index``
TimeFunction = Callable[[np.ndarray, np.ndarray], object]


def _row_mask(mask, rows: int) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    if m.ndim == 0:
        return np.full(rows, bool(m))
    if m.ndim > 1:
        m = m.reshape(m.shape[0], -1).any(axis=1)
    return np.broadcast_to(m, (rows,)).copy()


def _call(fn: TimeFunction, times: np.ndarray, index: np.ndarray) -> np.ndarray:
    out = np.asarray(fn(times, index), dtype=float)
    if out.ndim == 0:
        out = np.full(times.shape, float(out))
    return out


def _side(fn: TimeFunction, tb: np.ndarray, sel: np.ndarray,
          sign: float, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """One-sided Richardson limits with steps delta and 2 delta"""
    g1 = _call(fn, tb + sign * delta, sel)
    g2 = _call(fn, tb + 2.0 * sign * delta, sel)
    g4 = _call(fn, tb + 4.0 * sign * delta, sel)
    return 2.0 * g1 - g2, 2.0 * g2 - g4


def _agree(estimates: List[np.ndarray], rtol: float) -> np.ndarray:
    """Rows whose limit estimates are finite and coincide to ``rtol``"""
    stack = np.stack(estimates)
    rows = stack.shape[1]
    with np.errstate(invalid="ignore", over="ignore"):
        spread = stack.max(axis=0) - stack.min(axis=0)
        scale = np.maximum(1.0, np.abs(stack).max(axis=0))
        ok = np.isfinite(stack).all(axis=0) & (spread <= rtol * scale)
    return ok.reshape(rows, -1).all(axis=1)


def _limits(fn: TimeFunction, t: np.ndarray, index: np.ndarray,
            lo: float, hi: float, delta: float, rtol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Limit values at ``t[index]`` and the rows where the limit exists

    Interior nodes need the left and right limits to agree; every side
    needs its two step sizes to agree, which rejects poles.
    """
    tb = t[index]
    near_lo = tb < lo + 4.0 * delta
    near_hi = ~near_lo & (tb > hi - 4.0 * delta)
    inside = ~(near_lo | near_hi)

    pieces = []
    try:
        for where, signs in ((near_lo, (1.0,)), (near_hi, (-1.0,)), (inside, (-1.0, 1.0))):
            if not where.any():
                continue
            sides = [_side(fn, tb[where], index[where], sign, delta) for sign in signs]
            estimates = [est for side in sides for est in side]
            value = sum(side[0] for side in sides) / len(sides)
            pieces.append((where, value, _agree(estimates, rtol)))
    except ExpressionDomainError as exc:
        raise ExpressionDomainError(
            f"Singularity is not removable: {exc.message}",
            point={"t": float(tb[0])},
        ) from exc

    out = np.empty((len(index),) + pieces[0][1].shape[1:])
    ok = np.zeros(len(index), dtype=bool)
    for where, values, agree in pieces:
        out[where] = values
        ok[where] = agree
    logger.debug("Replaced %d node value(s) by limits", int(ok.sum()))
    return out, ok


def _evaluate(fn: TimeFunction, t: np.ndarray, index: np.ndarray,
              lo: float, hi: float, delta: float, rtol: float) -> np.ndarray:
    try:
        return _call(fn, t[index], index)
    except ExpressionDomainError as exc:
        if exc.mask is None or index.size == 0:
            raise
        bad = _row_mask(exc.mask, index.size)
        if not bad.any():
            raise
        limit_values, ok = _limits(fn, t, index[bad], lo, hi, delta, rtol)
        if not ok.all():
            nodes = index[bad][~ok]
            mask = np.zeros(t.size, dtype=bool)
            mask[nodes] = True
            raise ExpressionDomainError(
                f"Singularity is not removable: {exc.message}",
                mask=mask, point={"t": float(t[nodes[0]])},
            ) from exc
        out = np.empty((index.size,) + limit_values.shape[1:])
        out[bad] = limit_values
        if (~bad).any():
            out[~bad] = _evaluate(fn, t, index[~bad], lo, hi, delta, rtol)
        return out


def with_removable_limits(
    fn: TimeFunction,
    t,
    lo: float,
    hi: float,
    step: Optional[float] = None,
) -> np.ndarray:
    """Evaluate ``fn`` on the times ``t``, filling removable singularities

    Failing entries are replaced by one-sided Richardson limits
    ``2g(t±δ) - g(t±2δ)``, with ``δ = step·(hi - lo)``; inside the interval
    the left and right limits are averaged. A limit is accepted only when
    the estimates with steps δ and 2δ, and from both sides where both
    exist, agree to ``LIMIT_RTOL``; otherwise the node is reported.
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    delta = (settings.LIMIT_STEP if step is None else step) * (hi - lo)
    return _evaluate(fn, times, np.arange(times.size), lo, hi, delta, settings.LIMIT_RTOL)
