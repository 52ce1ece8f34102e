#!/usr/bin/env python3
"""
docsolve command line

Usage:
    python -m docsolve solve problems/tracking.json runs/tracking
    python -m docsolve residual problems/tracking.json runs/tracking-trajectory.csv --tol 0.1
    python -m docsolve sufficiency problems/tracking.json runs/tracking-trajectory.csv
    python -m docsolve operator dist-caputo-left --psi "gamma(3-alpha)/2" --M 20 in.csv out.csv
    python -m docsolve gronwall --alpha 0.5 a.csv b.csv envelope.csv

Exit codes: 0 success, 1 invalid input, 2 negative verdict (no convergence,
residual above tolerance, refused certificate), 3 computation failure.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

from docsolve import __version__
from docsolve.config import settings
from docsolve.core.exceptions import DocsolveError, GridError, OperatorError
from docsolve.core.logging import configure_logging, get_logger
from docsolve.schemas.report import ReferenceErrors, SolveSummary
from docsolve.services import distkernel
from docsolve.services.fracops import OperatorKind, build_operator
from docsolve.services.mangasarian import perturbation_audit, sufficiency_report
from docsolve.services.pmp import (
    ADJOINT_METHODS,
    fbsm_solve,
    pmp_residuals,
    reference_errors,
)
from docsolve.services.problem import reference_bundle
from docsolve.services.problem_file import (
    build_grid,
    build_kernel,
    build_spec,
    build_sweep,
    load_problem,
)
from docsolve.services.specfun import gronwall_envelope
from docsolve.services.trajectory_io import read_bundle, read_series, write_bundle, write_series

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_NEGATIVE = 2
EXIT_FAILURE = 3


class CommandParser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1)"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_solve(args) -> int:
    doc = load_problem(args.problem)
    p = build_spec(doc)
    grid = build_grid(doc, args.N)
    kernel = build_kernel(doc)
    params = build_sweep(doc)

    result = fbsm_solve(p, kernel, grid, params, method=args.adjoint)
    bundle = result.bundle
    residuals = pmp_residuals(p, kernel, grid, bundle)

    errors = None
    if p.reference is not None:
        ex, eu, el = reference_errors(bundle, reference_bundle(p, grid))
        errors = ReferenceErrors(x=ex, u=eu, lam=el)

    certificate = sufficiency_report(p, bundle) if args.sufficiency else None

    summary = SolveSummary(
        converged=result.converged,
        iterations=result.iterations,
        J=bundle.J,
        residuals=residuals,
        reference_errors=errors,
        certificate=certificate,
        description=p.description,
    )

    prefix = Path(args.prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_bundle(f"{prefix}-trajectory.csv", bundle)
    Path(f"{prefix}-summary.json").write_text(
        summary.model_dump_json(indent=2) + "\n", encoding="utf-8"
    )
    with open(f"{prefix}-convergence.jsonl", "w", encoding="utf-8", newline="\n") as handle:
        for record in result.history:
            handle.write(record.model_dump_json() + "\n")

    status = "converged" if result.converged else "did not converge"
    print(f"✓ Sweep {status} after {result.iterations} iteration(s), J = {bundle.J:.12g}")
    print(f"  Wrote {prefix}-trajectory.csv, {prefix}-summary.json, {prefix}-convergence.jsonl")
    return EXIT_OK if result.converged else EXIT_NEGATIVE


def cmd_residual(args) -> int:
    doc = load_problem(args.problem)
    p = build_spec(doc)
    kernel = build_kernel(doc)
    bundle = read_bundle(args.trajectory, p)

    report = pmp_residuals(p, kernel, bundle.grid, bundle)
    print(report.model_dump_json(indent=2))
    tol = settings.RESIDUAL_TOL if args.tol is None else args.tol
    return EXIT_OK if report.worst() <= tol else EXIT_NEGATIVE


def cmd_sufficiency(args) -> int:
    doc = load_problem(args.problem)
    p = build_spec(doc)
    bundle = read_bundle(args.trajectory, p)

    certificate = sufficiency_report(p, bundle, tol_psd=args.tol_psd, tol_lambda=args.tol_lambda)
    print(certificate.model_dump_json(indent=2))

    if args.audit:
        kernel = build_kernel(doc)
        audit = perturbation_audit(p, kernel, bundle.grid, bundle, samples=args.audit, seed=args.seed)
        Path(args.audit_out).write_text(audit.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if certificate.certified else EXIT_NEGATIVE


def cmd_operator(args) -> int:
    kind = OperatorKind(args.kind)
    grid, values = read_series(args.input)

    kernel = order = None
    if kind.is_distributed:
        if args.psi is not None:
            kernel = distkernel.build(args.psi, args.M)
        elif args.alpha is not None:
            kernel = distkernel.degenerate(args.alpha)
        else:
            raise OperatorError(f"'{kind.value}' needs --psi or --alpha")
    else:
        if args.alpha is None:
            raise OperatorError(f"'{kind.value}' needs --alpha")
        order = args.alpha

    result = build_operator(kind, grid, kernel=kernel, order=order).apply(values)
    write_series(args.output, grid.nodes, result[:, 0])
    return EXIT_OK


def cmd_gronwall(args) -> int:
    grid, a = read_series(args.a)
    grid_b, b = read_series(args.b)
    if grid_b != grid:
        raise GridError("a and b are sampled on different grids")
    envelope = gronwall_envelope(a, b, args.alpha, grid)
    write_series(args.output, envelope.times, envelope.values)
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(
        prog=settings.APP_NAME,
        description="Distributed-order fractional optimal control toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", type=str.upper, default=settings.LOG_LEVEL.upper(),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Log level for messages on stderr")
    parser.add_argument("--log-json", action="store_true", default=settings.LOG_JSON,
                        help="Emit log records as JSON lines")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="Run the forward-backward sweep")
    solve.add_argument("problem", help="Problem file (JSON)")
    solve.add_argument("prefix", help="Output prefix for trajectory, summary and convergence files")
    solve.add_argument("--N", type=int, default=None, help="Override the grid size of the problem file")
    solve.add_argument("--adjoint", choices=ADJOINT_METHODS, default="transpose",
                       help="Adjoint discretization used by the sweep")
    solve.add_argument("--sufficiency", action="store_true",
                       help="Attach a concavity certificate to the summary")
    solve.set_defaults(handler=cmd_solve)

    residual = commands.add_parser("residual", help="Audit a trajectory against the Pontryagin conditions")
    residual.add_argument("problem", help="Problem file (JSON)")
    residual.add_argument("trajectory", help="Trajectory CSV")
    residual.add_argument("--tol", type=float, default=None,
                          help=f"Largest accepted residual (default {settings.RESIDUAL_TOL})")
    residual.set_defaults(handler=cmd_residual)

    sufficiency = commands.add_parser("sufficiency", help="Concavity certificate for a trajectory")
    sufficiency.add_argument("problem", help="Problem file (JSON)")
    sufficiency.add_argument("trajectory", help="Trajectory CSV")
    sufficiency.add_argument("--tol-psd", type=float, default=None, help="Eigenvalue tolerance")
    sufficiency.add_argument("--tol-lambda", type=float, default=None, help="Multiplier sign tolerance")
    sufficiency.add_argument("--audit", type=int, default=0, metavar="SAMPLES",
                             help="Also run a perturbation audit with this many random controls")
    sufficiency.add_argument("--audit-out", default="audit.json", help="Where the audit report goes")
    sufficiency.add_argument("--seed", type=int, default=0, help="Seed of the perturbation audit")
    sufficiency.set_defaults(handler=cmd_sufficiency)

    operator = commands.add_parser("operator", help="Apply a discrete fractional operator to t,value samples")
    operator.add_argument("kind", choices=[k.value for k in OperatorKind], help="Operator kind")
    operator.add_argument("input", help="Input CSV with columns t,value")
    operator.add_argument("output", help="Output CSV")
    operator.add_argument("--psi", default=None, help="Order distribution psi(alpha) for distributed kinds")
    operator.add_argument("--alpha", type=float, default=None,
                          help="Order of single kinds, or a point mass for distributed kinds")
    operator.add_argument("--M", type=int, default=None, help="Gauss-Legendre nodes for --psi")
    operator.set_defaults(handler=cmd_operator)

    gronwall = commands.add_parser("gronwall", help="Fractional Gronwall envelope")
    gronwall.add_argument("a", help="CSV of a(t)")
    gronwall.add_argument("b", help="CSV of b(t)")
    gronwall.add_argument("output", help="Output CSV")
    gronwall.add_argument("--alpha", type=float, required=True, help="Order in (0, 1]")
    gronwall.set_defaults(handler=cmd_gronwall)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.log_json)

    try:
        return args.handler(args)
    except DocsolveError as exc:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"✗ {type(exc).__name__}: {exc.message}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.exception("Unexpected failure in %s", args.command)
        print(f"✗ Unexpected error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
