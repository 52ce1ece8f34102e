"""
Sufficiency test for Pontryagin extremals

An extremal is certified when L and every component of f are jointly
concave in (x, u) on a sample box and the multiplier is non-negative. The
certificate only speaks for trajectories that stay inside the box.
"""
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from docsolve.config import settings
from docsolve.core.logging import get_logger
from docsolve.schemas.report import (
    ConcavityCertificate,
    FunctionConcavity,
    PerturbationAudit,
    SampleBox,
    Verdict,
    Witness,
)
from docsolve.services.distkernel import DistributionKernel
from docsolve.services.expr import Expr, is_smooth, to_source
from docsolve.services.fde import solve_bundle
from docsolve.services.fracops import Grid, SampledFn
from docsolve.services.problem import ProblemSpec, TrajectoryBundle

logger = get_logger(__name__)


def _inflate(values: np.ndarray, inflation: float) -> List[List[float]]:
    lo, hi = values.min(axis=0), values.max(axis=0)
    pad = inflation * np.where(hi > lo, hi - lo, np.maximum(1.0, np.abs(hi)))
    return [[float(a), float(b)] for a, b in zip(lo - pad, hi + pad)]


def axis_count(p: ProblemSpec, samples_per_axis: Optional[int] = None) -> int:
    """Per-axis count, shrunk so the tensor box stays within MAX_BOX_SAMPLES"""
    count = settings.SAMPLES_PER_AXIS if samples_per_axis is None else samples_per_axis
    cap = int(np.floor(settings.MAX_BOX_SAMPLES ** (1.0 / (1 + p.n + p.m)) + 1e-9))
    return max(2, min(count, cap))


def default_box(
    p: ProblemSpec,
    bundle: TrajectoryBundle,
    samples_per_axis: Optional[int] = None,
    inflation: Optional[float] = None,
) -> SampleBox:
    """Box around the bundle's (x, u) ranges, inflated on every side"""
    count = axis_count(p, samples_per_axis)
    grow = settings.BOX_INFLATION if inflation is None else inflation
    return SampleBox(
        t_range=[float(p.a), float(p.b)],
        x_box=_inflate(bundle.x, grow),
        u_box=_inflate(bundle.u, grow),
        counts={"t": count, "x": count, "u": count},
    )


def _sample_chunks(p: ProblemSpec, box: SampleBox) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Tensor samples of the box, at most SAMPLE_CHUNK points at a time"""
    axes = [np.linspace(box.t_range[0], box.t_range[1], box.counts["t"])]
    axes += [np.linspace(lo, hi, box.counts["x"]) for lo, hi in box.x_box]
    axes += [np.linspace(lo, hi, box.counts["u"]) for lo, hi in box.u_box]
    shape = tuple(len(axis) for axis in axes)
    total = int(np.prod(shape))
    for start in range(0, total, settings.SAMPLE_CHUNK):
        coords = np.unravel_index(np.arange(start, min(start + settings.SAMPLE_CHUNK, total)), shape)
        flat = np.stack([axis[c] for axis, c in zip(axes, coords)], axis=-1)
        yield flat[:, 0], flat[:, 1: 1 + p.n], flat[:, 1 + p.n:]


def _point(p: ProblemSpec, t: float, x: np.ndarray, u: np.ndarray) -> Dict[str, float]:
    point = {"t": float(t)}
    point.update({name: float(v) for name, v in zip(p.state_names, x)})
    point.update({name: float(v) for name, v in zip(p.control_names, u)})
    return point


def _function_labels(p: ProblemSpec) -> List[Tuple[str, Expr]]:
    return [("L", p.L)] + [(f"f{k + 1}", fk) for k, fk in enumerate(p.f)]


def _worst_eigenvalue(p: ProblemSpec, tree: Expr, box: SampleBox) -> Tuple[float, Dict[str, float], int]:
    worst, where, count = -np.inf, {}, 0
    for t, x, u in _sample_chunks(p, box):
        top = np.linalg.eigvalsh(p.hessian_xu(tree, t, x, u))[:, -1]
        k = int(np.argmax(top))
        if top[k] > worst:
            worst, where = float(top[k]), _point(p, t[k], x[k], u[k])
        count += t.size
    return worst, where, count


def check_concavity(
    p: ProblemSpec,
    box: SampleBox,
    tol_psd: Optional[float] = None,
) -> List[FunctionConcavity]:
    """Largest (x, u)-Hessian eigenvalue of L and each f_k over the box"""
    tol = settings.TOL_PSD if tol_psd is None else tol_psd
    results = []
    for label, tree in _function_labels(p):
        source = to_source(tree)
        if not is_smooth(tree):
            results.append(FunctionConcavity(
                function=label, expression=source, concave=False, reason="non-smooth",
                witness=Witness(function=label, reason="non-smooth"),
            ))
            continue
        max_eig, where, count = _worst_eigenvalue(p, tree, box)
        concave = max_eig <= tol
        witness = None
        if not concave:
            witness = Witness(
                function=label, reason="positive curvature", point=where, value=max_eig,
            )
        logger.debug("%s: max Hessian eigenvalue %.6g over %d samples", label, max_eig, count)
        results.append(FunctionConcavity(
            function=label, expression=source, concave=concave,
            max_eigenvalue=max_eig, witness=witness,
        ))
    return results


def check_multiplier_sign(
    lam: Union[SampledFn, np.ndarray],
    tol_lambda: Optional[float] = None,
) -> Tuple[bool, float]:
    """True when min lambda >= -tol_lambda; also returns the minimum"""
    tol = settings.TOL_LAMBDA if tol_lambda is None else tol_lambda
    values = lam.values if isinstance(lam, SampledFn) else np.asarray(lam, dtype=float)
    smallest = float(np.min(values))
    return smallest >= -tol, smallest


def sufficiency_report(
    p: ProblemSpec,
    bundle: TrajectoryBundle,
    box: Optional[SampleBox] = None,
    tol_psd: Optional[float] = None,
    tol_lambda: Optional[float] = None,
) -> ConcavityCertificate:
    """Combine the concavity and multiplier checks into a certificate"""
    bundle.check_against(p)
    tol_psd = settings.TOL_PSD if tol_psd is None else tol_psd
    tol_lambda = settings.TOL_LAMBDA if tol_lambda is None else tol_lambda
    box = box or default_box(p, bundle)

    functions = check_concavity(p, box, tol_psd)
    lam = bundle.adjoint.values
    sign_ok, smallest = check_multiplier_sign(lam, tol_lambda)

    witnesses = [fc.witness for fc in functions if fc.witness is not None]
    if not sign_ok:
        row, col = np.unravel_index(int(np.argmin(lam)), lam.shape)
        witnesses.append(Witness(
            function=f"lambda{col + 1}", reason="negative multiplier",
            point={"t": float(bundle.grid.nodes[row])}, value=smallest,
        ))

    eigenvalues = [fc.max_eigenvalue for fc in functions if fc.max_eigenvalue is not None]
    certified = sign_ok and all(fc.concave for fc in functions)
    return ConcavityCertificate(
        verdict=Verdict.CERTIFIED if certified else Verdict.REFUSED,
        functions=functions,
        worst_eigenvalue=max(eigenvalues) if eigenvalues else None,
        lambda_min=smallest,
        tol_psd=tol_psd,
        tol_lambda=tol_lambda,
        box=box,
        witnesses=witnesses,
    )


def _random_direction(rng: np.random.Generator, grid: Grid, m: int, modes: int = 4) -> np.ndarray:
    tau = (grid.nodes - grid.a) / (grid.b - grid.a)
    k = np.arange(modes)
    basis = np.cos(np.pi * np.outer(tau, k))
    coefficients = rng.standard_normal((modes, m)) / (1.0 + k[:, None])
    return basis @ coefficients


def perturbation_audit(
    p: ProblemSpec,
    kernel: DistributionKernel,
    grid: Grid,
    bundle: TrajectoryBundle,
    samples: int = 100,
    scale: float = 0.1,
    seed: int = 0,
) -> PerturbationAudit:
    """Worst objective gain of random smooth control perturbations

    A certified maximizer has ``worst_gain <= 0`` up to quadrature error.
    """
    bundle.check_against(p)
    reference = solve_bundle(p, kernel, grid, bundle.u).J
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(samples):
        direction = _random_direction(rng, grid, p.m)
        trial = solve_bundle(p, kernel, grid, bundle.u + scale * direction)
        worst = max(worst, trial.J - reference)
    logger.info("Perturbation audit: worst gain %.3e over %d samples", worst, samples)
    return PerturbationAudit(
        samples=samples, J_bundle=reference, worst_gain=float(worst), scale=scale, seed=seed
    )
