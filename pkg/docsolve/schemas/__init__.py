"""
Pydantic schemas for problem files and reports
"""
from docsolve.schemas.problem import ProblemFile
from docsolve.schemas.report import (
    ConcavityCertificate,
    FunctionConcavity,
    GridInfo,
    PerturbationAudit,
    PmpResidualReport,
    ReferenceErrors,
    SampleBox,
    SolveSummary,
    SweepRecord,
    Verdict,
    Witness,
)

__all__ = [
    "ProblemFile",
    "ConcavityCertificate",
    "FunctionConcavity",
    "GridInfo",
    "PerturbationAudit",
    "PmpResidualReport",
    "ReferenceErrors",
    "SampleBox",
    "SolveSummary",
    "SweepRecord",
    "Verdict",
    "Witness",
]
