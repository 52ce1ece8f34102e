"""
Problem files: load, validate and turn into solver objects
"""
import json
from pathlib import Path
from typing import Optional, Union

from pydantic import ValidationError

from docsolve.core.exceptions import ProblemFileError
from docsolve.core.logging import get_logger
from docsolve.schemas.problem import ProblemFile
from docsolve.services import distkernel
from docsolve.services.distkernel import DistributionKernel
from docsolve.services.fracops import Grid
from docsolve.services.pmp import SweepParams
from docsolve.services.problem import BoundaryMode, ProblemSpec, ReferenceTriple

logger = get_logger(__name__)


def _validation_message(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        where = ".".join(str(loc) for loc in error["loc"]) or "document"
        parts.append(f"{where}: {error['msg']}")
    return "; ".join(parts)


def parse_problem(text: str, source: str = "<problem>") -> ProblemFile:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{source}: malformed JSON ({exc})", error_code="json") from exc
    try:
        return ProblemFile.model_validate(raw)
    except ValidationError as exc:
        raise ProblemFileError(f"{source}: {_validation_message(exc)}", error_code="schema") from exc


def load_problem(path: Union[str, Path]) -> ProblemFile:
    """Read and validate a problem file; nothing is computed on failure"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ProblemFileError(f"Cannot read problem file {path}: {exc}", error_code="io") from exc
    doc = parse_problem(text, str(path))
    logger.debug("Loaded problem file %s", path)
    return doc


def build_spec(doc: ProblemFile) -> ProblemSpec:
    reference = None
    if doc.reference is not None:
        reference = ReferenceTriple(
            x_star=tuple(doc.reference.x_star),
            u_star=tuple(doc.reference.u_star),
            lambda_star=tuple(doc.reference.lambda_star) if doc.reference.lambda_star else None,
        )
    return ProblemSpec(
        L=doc.expressions.L,
        f=tuple(doc.expressions.f),
        psi=doc.expressions.psi,
        a=doc.interval.a,
        b=doc.interval.b,
        n=doc.dims.n,
        m=doc.dims.m,
        mode=BoundaryMode(doc.boundary.mode),
        boundary_values=tuple(doc.boundary.values),
        reference=reference,
        description=doc.description,
    )


def build_grid(doc: ProblemFile, N: Optional[int] = None) -> Grid:
    return Grid(doc.interval.a, doc.interval.b, doc.grid.N if N is None else N)


def build_kernel(doc: ProblemFile) -> DistributionKernel:
    if doc.kernel.alpha0 is not None:
        return distkernel.degenerate(doc.kernel.alpha0)
    return distkernel.build(doc.expressions.psi, doc.kernel.M)


def build_sweep(doc: ProblemFile) -> SweepParams:
    return SweepParams(
        theta=doc.sweep.theta,
        tol=doc.sweep.tol,
        max_iter=doc.sweep.max_iter,
        u0=tuple(doc.sweep.u0),
    )
