"""
Shared fixtures for the test suite
"""
import os
import sys

import numpy as np
import pytest

# Add the repository root to path for imports
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

from docsolve.services import distkernel  # noqa: E402
from docsolve.services.fracops import Grid  # noqa: E402
from docsolve.services.problem import ProblemSpec  # noqa: E402
from docsolve.services.problem_file import build_kernel, build_spec, load_problem  # noqa: E402

EXAMPLE_PROBLEM = os.path.join(ROOT, "problems", "tracking.json")


def control_profile(t: np.ndarray) -> np.ndarray:
    """t(t-1)/ln(t) with its limits 0 at t=0 and 1 at t=1"""
    out = np.empty_like(t)
    inner = (t > 0.0) & (t < 1.0)
    out[inner] = t[inner] * (t[inner] - 1.0) / np.log(t[inner])
    out[t <= 0.0] = 0.0
    out[t >= 1.0] = 1.0
    return out


def make_problem(L, f, psi="1", x_a=(0.0,), mode="initial_fixed", **kwargs) -> ProblemSpec:
    f = (f,) if isinstance(f, str) else tuple(f)
    return ProblemSpec(
        L=L, f=f, psi=psi, a=kwargs.pop("a", 0.0), b=kwargs.pop("b", 1.0),
        mode=mode, boundary_values=tuple(x_a), **kwargs,
    )


@pytest.fixture(scope="session")
def example_doc():
    return load_problem(EXAMPLE_PROBLEM)


@pytest.fixture(scope="session")
def example_problem(example_doc):
    return build_spec(example_doc)


@pytest.fixture(scope="session")
def example_kernel(example_doc):
    return build_kernel(example_doc)


@pytest.fixture(scope="session")
def unit_kernel():
    return distkernel.build("1", 5)


@pytest.fixture(scope="session")
def example_solution(example_problem, example_kernel):
    """Forward-backward sweep of the bundled example on N=2000"""
    from docsolve.services.pmp import SweepParams, fbsm_solve

    grid = Grid(0.0, 1.0, 2000)
    return fbsm_solve(example_problem, example_kernel, grid, SweepParams(theta=0.5, tol=1e-8))


def vector_problem(mode="initial_fixed", x_a=(1.0, 0.0)) -> ProblemSpec:
    """max int -x1^2 - u^2 subject to D x1 = x2, D x2 = u"""
    return make_problem("-x1^2 - u1^2", ("x2", "u1"), x_a=x_a, mode=mode, n=2, m=1)


@pytest.fixture(scope="session")
def vector_solution(unit_kernel):
    """Forward-backward sweep of the two-state problem on N=200"""
    from docsolve.services.pmp import SweepParams, fbsm_solve

    grid = Grid(0.0, 1.0, 200)
    return fbsm_solve(vector_problem(), unit_kernel, grid, SweepParams(theta=0.5, tol=1e-8, max_iter=200))
