"""
CSV codecs for trajectories and sampled functions

UTF-8, comma separated, LF line ends, one header row, numbers written with
17 significant digits.
"""
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from docsolve.core.exceptions import GridError, TrajectoryFileError
from docsolve.services.fracops import Grid
from docsolve.services.problem import ProblemSpec, TrajectoryBundle

NUMBER_FORMAT = "%.17g"

PathLike = Union[str, Path]


def trajectory_header(n: int, m: int, with_adjoint: bool = True) -> List[str]:
    names = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    if with_adjoint:
        names += [f"lambda{i + 1}" for i in range(n)]
    return names


def _write(path: PathLike, header: List[str], table: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        np.savetxt(handle, table, fmt=NUMBER_FORMAT, delimiter=",",
                   header=",".join(header), comments="", newline="\n")


def _read(path: PathLike) -> Tuple[List[str], np.ndarray]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            header = handle.readline().strip().split(",")
            table = np.loadtxt(handle, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise TrajectoryFileError(f"Cannot read CSV {path}: {exc}", error_code="csv") from exc
    if table.size == 0:
        raise TrajectoryFileError(f"CSV {path} has no data rows", error_code="csv")
    if table.shape[1] != len(header):
        raise TrajectoryFileError(
            f"CSV {path} has {table.shape[1]} columns but {len(header)} header names",
            error_code="columns",
        )
    if not np.all(np.isfinite(table)):
        raise TrajectoryFileError(f"CSV {path} has non-finite entries", error_code="csv")
    return header, table


def write_bundle(path: PathLike, bundle: TrajectoryBundle) -> None:
    """Columns t, x1..xn, u1..um and lambda1..lambdan when present"""
    columns = [bundle.grid.nodes[:, None], bundle.x, bundle.u]
    if bundle.lam is not None:
        columns.append(bundle.lam)
    _write(path, trajectory_header(bundle.n, bundle.m, bundle.lam is not None), np.hstack(columns))


def read_bundle(path: PathLike, p: ProblemSpec) -> TrajectoryBundle:
    """Read a trajectory CSV written for problem ``p``; lambda columns required"""
    header, table = _read(path)
    expected = trajectory_header(p.n, p.m)
    if header != expected:
        raise TrajectoryFileError(
            f"CSV {path} columns {header} do not match {expected}", error_code="columns"
        )
    grid = Grid.from_nodes(table[:, 0])
    if not (np.isclose(grid.a, p.a) and np.isclose(grid.b, p.b)):
        raise GridError(
            f"CSV grid [{grid.a}, {grid.b}] does not match problem interval [{p.a}, {p.b}]"
        )
    n, m = p.n, p.m
    return TrajectoryBundle(
        grid,
        table[:, 1: 1 + n],
        table[:, 1 + n: 1 + n + m],
        table[:, 1 + n + m:],
    )


def write_series(path: PathLike, t: np.ndarray, values: np.ndarray) -> None:
    table = np.column_stack([np.asarray(t, dtype=float), np.asarray(values, dtype=float).ravel()])
    _write(path, ["t", "value"], table)


def read_series(path: PathLike) -> Tuple[Grid, np.ndarray]:
    """Read a t,value CSV on a uniform grid"""
    header, table = _read(path)
    if len(header) != 2:
        raise TrajectoryFileError(
            f"CSV {path} needs the two columns t,value; found {len(header)}", error_code="columns"
        )
    return Grid.from_nodes(table[:, 0]), table[:, 1]
