"""
Toolkit configuration using Pydantic Settings
Works with:
- Local .env files
- DOCSOLVE_* system environment variables
"""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Toolkit settings"""

    # ------------------------------------------------------------------
    # Application
    # ------------------------------------------------------------------
    APP_NAME: str = "docsolve"
    LOG_LEVEL: str = "WARNING"
    LOG_JSON: bool = False

    # ------------------------------------------------------------------
    # Parallelism
    # DOCSOLVE_THREADS caps the worker count used while assembling
    # distributed operators. 1 means fully sequential.
    # ------------------------------------------------------------------
    THREADS: int = 1

    # ------------------------------------------------------------------
    # Discretization
    # ------------------------------------------------------------------
    KERNEL_NODES: int = 20
    LIMIT_STEP: float = 1e-6
    LIMIT_RTOL: float = 1e-3

    # ------------------------------------------------------------------
    # Forward solver (per-step Newton)
    # ------------------------------------------------------------------
    NEWTON_TOL: float = 1e-12
    NEWTON_MAX_ITER: int = 50

    # ------------------------------------------------------------------
    # Forward-backward sweep
    # ------------------------------------------------------------------
    SWEEP_THETA: float = 0.5
    SWEEP_TOL: float = 1e-8
    SWEEP_MAX_ITER: int = 200

    # ------------------------------------------------------------------
    # Sufficiency checks
    # ------------------------------------------------------------------
    HESSIAN_REL_STEP: float = 1e-4
    TOL_PSD: float = 1e-8
    TOL_LAMBDA: float = 1e-10
    BOX_INFLATION: float = 0.2
    SAMPLES_PER_AXIS: int = 21
    MAX_BOX_SAMPLES: int = 250_000
    SAMPLE_CHUNK: int = 20_000

    # ------------------------------------------------------------------
    # Residual audit
    # ------------------------------------------------------------------
    RESIDUAL_TOL: float = 1e-1

    class Config:
        env_file = ".env"          # Used locally only
        env_prefix = "DOCSOLVE_"
        case_sensitive = True
        extra = "ignore"


# ----------------------------------------------------------------------
# Instantiate settings
# ----------------------------------------------------------------------
settings = Settings()
