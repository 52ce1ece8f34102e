#!/usr/bin/env python3
"""
Residual refinement table for a problem file with a reference triple.

For each grid size the script samples the analytic triple, audits it with
the Pontryagin residuals, and reports the integration-by-parts residual on
(x, y) = (t^2, t^3) together with the discrete transpose identity gap.

Usage:
    python scripts/refinement_study.py
    python scripts/refinement_study.py problems/tracking.json --sizes 500 1000 2000
"""

import argparse
import os
import sys

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from docsolve.core.exceptions import DocsolveError
from docsolve.core.logging import configure_logging
from docsolve.services.fracops import Grid, SampledFn, integration_by_parts_residual
from docsolve.services.pmp import discrete_ibp_gap, pmp_residuals, solve_adjoint
from docsolve.services.problem import reference_bundle
from docsolve.services.problem_file import build_kernel, build_spec, load_problem

DEFAULT_PROBLEM = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "problems", "tracking.json"
)


def study(problem_path, sizes):
    doc = load_problem(problem_path)
    p = build_spec(doc)
    kernel = build_kernel(doc)

    print(f"{'N':>6} {'optimality':>12} {'adjoint':>12} {'transv. b':>12} {'ibp':>12} {'transpose gap':>14}")
    for N in sizes:
        grid = Grid(p.a, p.b, N)
        bundle = reference_bundle(p, grid)
        report = pmp_residuals(p, kernel, grid, bundle)

        x = SampledFn(grid, grid.nodes**2)
        y = SampledFn(grid, grid.nodes**3)
        ibp = integration_by_parts_residual(kernel, x, y)

        lam = solve_adjoint(p, kernel, grid, bundle.x, bundle.u).values
        gap = discrete_ibp_gap(p, kernel, grid, bundle.with_adjoint(lam), y.values)

        side_b = report.transversality_b if report.transversality_b is not None else float("nan")
        print(
            f"{N:>6} {report.optimality:>12.3e} {report.adjoint:>12.3e} "
            f"{side_b:>12.3e} {ibp:>12.3e} {gap:>14.3e}"
        )


def main():
    parser = argparse.ArgumentParser(description="Residual refinement table")
    parser.add_argument("problem", nargs="?", default=DEFAULT_PROBLEM, help="Problem file with a reference triple")
    parser.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000], help="Grid sizes N")
    parser.add_argument("--log-level", default="WARNING", help="Log level")
    args = parser.parse_args()

    configure_logging(args.log_level)
    try:
        study(args.problem, args.sizes)
    except DocsolveError as e:
        print(f"✗ {e.message}")
        sys.exit(e.exit_code)


if __name__ == "__main__":
    main()
