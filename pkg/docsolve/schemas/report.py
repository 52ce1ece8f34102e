"""
Pydantic schemas for solver reports
"""
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class GridInfo(BaseModel):
    """Grid and kernel metadata"""
    a: float
    b: float
    N: int
    h: float
    kernel_nodes: int
    kernel_mass: float


class PmpResidualReport(BaseModel):
    """Residuals of the optimality, adjoint and transversality conditions"""
    optimality: float = Field(ge=0.0)
    adjoint: float = Field(ge=0.0)
    transversality_b: Optional[float] = Field(default=None, ge=0.0)
    transversality_a: Optional[float] = Field(default=None, ge=0.0)
    boundary_mode: str
    grid: GridInfo

    def worst(self) -> float:
        values = [self.optimality, self.adjoint, self.transversality_b, self.transversality_a]
        return max(v for v in values if v is not None)


class Verdict(str, Enum):
    CERTIFIED = "Certified"
    REFUSED = "Refused"


class SampleBox(BaseModel):
    """Tensor sample set of the concavity check"""
    t_range: List[float]
    x_box: List[List[float]]
    u_box: List[List[float]]
    counts: Dict[str, int]
    caveat: str = (
        "Global optimality is certified only among admissible pairs whose "
        "trajectories stay inside this box"
    )


class Witness(BaseModel):
    """Sample point that violates a hypothesis"""
    function: str
    reason: str
    point: Dict[str, float] = {}
    value: Optional[float] = None


class FunctionConcavity(BaseModel):
    """Concavity result for L or one component of f"""
    function: str
    expression: str
    concave: bool
    max_eigenvalue: Optional[float] = None
    reason: Optional[str] = None
    witness: Optional[Witness] = None


class ConcavityCertificate(BaseModel):
    """Sufficiency verdict for a Pontryagin extremal"""
    verdict: Verdict
    functions: List[FunctionConcavity]
    worst_eigenvalue: Optional[float] = None
    lambda_min: float
    tol_psd: float
    tol_lambda: float
    box: SampleBox
    witnesses: List[Witness] = []

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED


class SweepRecord(BaseModel):
    """One forward-backward sweep iteration"""
    iteration: int
    control_change: float
    J: float


class ReferenceErrors(BaseModel):
    """Sup-norm errors against an analytic reference triple"""
    x: float
    u: float
    lam: Optional[float] = None


class SolveSummary(BaseModel):
    """Summary written by the solve command"""
    converged: bool
    iterations: int
    J: float
    residuals: PmpResidualReport
    reference_errors: Optional[ReferenceErrors] = None
    certificate: Optional[ConcavityCertificate] = None
    description: str = ""


class PerturbationAudit(BaseModel):
    """Objective of randomly perturbed controls against the bundle"""
    samples: int
    J_bundle: float
    worst_gain: float
    scale: float
    seed: int
