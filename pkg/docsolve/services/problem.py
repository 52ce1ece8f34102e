"""
Optimal control problem and trajectory containers

maximize J = int_a^b L(t, x, u) dt
subject to  C D^psi_{a+} x = f(t, x, u),  boundary data per mode

Expressions are normalized on construction: the aliases ``x`` and ``u``
(allowed when n = m = 1) are renamed to ``x1`` and ``u1``.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from docsolve.core.exceptions import DimensionError, ProblemFileError
from docsolve.services.expr import (
    Expr,
    evaluate,
    hessian_xu,
    parse,
    partials,
    rename,
    variables,
    with_removable_limits,
)
from docsolve.services.fracops import Grid, SampledFn


class BoundaryMode(str, Enum):
    INITIAL_FIXED = "initial_fixed"
    TERMINAL_FIXED = "terminal_fixed"
    FREE = "free"


@dataclass(frozen=True)
class ReferenceTriple:
    """Analytic (x*, u*, lambda*) as expressions in t"""

    x_star: Tuple[Expr, ...]
    u_star: Tuple[Expr, ...]
    lambda_star: Optional[Tuple[Expr, ...]] = None


def _as_tree(source) -> Expr:
    if isinstance(source, (int, float)):
        return parse(repr(float(source)))
    return parse(source) if isinstance(source, str) else source


def state_names(n: int) -> List[str]:
    return [f"x{i + 1}" for i in range(n)]


def control_names(m: int) -> List[str]:
    return [f"u{j + 1}" for j in range(m)]


@dataclass(frozen=True)
class ProblemSpec:
    L: Expr
    f: Tuple[Expr, ...]
    psi: Expr
    a: float
    b: float
    n: int = 1
    m: int = 1
    mode: BoundaryMode = BoundaryMode.INITIAL_FIXED
    boundary_values: Tuple[float, ...] = ()
    reference: Optional[ReferenceTriple] = None
    description: str = ""
    _aliases: Dict[str, str] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DimensionError(f"Need n >= 1 and m >= 1, got n={self.n}, m={self.m}")
        if self.m > self.n:
            raise DimensionError(f"Control dimension m={self.m} exceeds state dimension n={self.n}")
        if len(self.f) != self.n:
            raise DimensionError(f"f has {len(self.f)} components, expected n={self.n}")
        if not self.b > self.a:
            raise ProblemFileError(f"Interval needs b > a, got [{self.a}, {self.b}]")
        object.__setattr__(self, "mode", BoundaryMode(self.mode))

        values = tuple(float(v) for v in self.boundary_values)
        if self.mode is not BoundaryMode.FREE or values:
            if len(values) != self.n:
                raise DimensionError(
                    f"Boundary mode {self.mode.value} needs {self.n} value(s), got {len(values)}"
                )
        if not np.all(np.isfinite(values)):
            raise ProblemFileError("Boundary values must be finite")
        object.__setattr__(self, "boundary_values", values)

        aliases = {"x": "x1", "u": "u1"} if self.n == 1 and self.m == 1 else {}
        object.__setattr__(self, "_aliases", aliases)
        legal = {"t"} | set(state_names(self.n)) | set(control_names(self.m)) | set(aliases)

        object.__setattr__(self, "L", self._normalize(_as_tree(self.L), legal, "L"))
        object.__setattr__(
            self, "f",
            tuple(self._normalize(_as_tree(fk), legal, f"f[{k}]") for k, fk in enumerate(self.f)),
        )
        psi = _as_tree(self.psi)
        self._check_names(psi, {"alpha"}, "psi")
        object.__setattr__(self, "psi", psi)

        if self.reference is not None:
            ref = self.reference
            parts = {}
            for name, exprs, size in (
                ("x_star", ref.x_star, self.n),
                ("u_star", ref.u_star, self.m),
                ("lambda_star", ref.lambda_star, self.n),
            ):
                if exprs is None:
                    parts[name] = None
                    continue
                trees = tuple(_as_tree(e) for e in exprs)
                if len(trees) != size:
                    raise DimensionError(f"reference {name} needs {size} entries, got {len(trees)}")
                for tree in trees:
                    self._check_names(tree, {"t"}, f"reference {name}")
                parts[name] = trees
            object.__setattr__(self, "reference", ReferenceTriple(**parts))

    @staticmethod
    def _check_names(tree: Expr, legal: set, label: str) -> None:
        unknown = sorted(variables(tree) - legal)
        if unknown:
            raise ProblemFileError(
                f"{label} references unknown variable(s): {', '.join(unknown)}"
            )

    def _normalize(self, tree: Expr, legal: set, label: str) -> Expr:
        self._check_names(tree, legal, label)
        return rename(tree, self._aliases) if self._aliases else tree

    # ------------------------------------------------------------------
    # Names and bindings
    # ------------------------------------------------------------------

    @property
    def state_names(self) -> List[str]:
        return state_names(self.n)

    @property
    def control_names(self) -> List[str]:
        return control_names(self.m)

    @property
    def xu_names(self) -> List[str]:
        return self.state_names + self.control_names

    @property
    def x_a(self) -> np.ndarray:
        return np.asarray(self.boundary_values, dtype=float)

    def bindings(self, t, x, u) -> Dict[str, np.ndarray]:
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float).reshape(t.shape + (self.n,))
        u = np.asarray(u, dtype=float).reshape(t.shape + (self.m,))
        env = {"t": t}
        for i, name in enumerate(self.state_names):
            env[name] = x[..., i]
        for j, name in enumerate(self.control_names):
            env[name] = u[..., j]
        return env

    def _on_nodes(self, compute: Callable[[dict], np.ndarray], t, x, u) -> np.ndarray:
        """Evaluate ``compute(bindings)`` at sample rows, filling removable singularities"""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.asarray(x, dtype=float).reshape(t.shape + (self.n,))
        u = np.asarray(u, dtype=float).reshape(t.shape + (self.m,))

        def fn(times, index):
            return compute(self.bindings(times, x[index], u[index]))

        return with_removable_limits(fn, t, self.a, self.b)

    # ------------------------------------------------------------------
    # L and f with derivatives on sample rows
    # ------------------------------------------------------------------

    def eval_L(self, t, x, u) -> np.ndarray:
        return self._on_nodes(lambda env: evaluate(self.L, env), t, x, u)

    def grad_L(self, t, x, u) -> np.ndarray:
        """(K, n+m) array of dL/dx followed by dL/du"""
        return self._on_nodes(lambda env: partials(self.L, self.xu_names, env), t, x, u)

    def eval_f(self, t, x, u) -> np.ndarray:
        """(K, n) array of the dynamics"""
        return self._on_nodes(
            lambda env: np.stack(
                [np.broadcast_to(evaluate(fk, env), env["t"].shape) for fk in self.f], axis=-1
            ),
            t, x, u,
        )

    def jac_f(self, t, x, u) -> np.ndarray:
        """(K, n, n+m) Jacobian of f in (x, u)"""
        names = self.xu_names
        return self._on_nodes(
            lambda env: np.stack([partials(fk, names, env) for fk in self.f], axis=-2),
            t, x, u,
        )

    def hessian_xu(self, tree: Expr, t, x, u) -> np.ndarray:
        """(K, n+m, n+m) Hessian of an expression over the (x, u) block"""
        return self._on_nodes(lambda env: hessian_xu(tree, env, self.xu_names), t, x, u)

    def state_dependent_dynamics(self) -> bool:
        names = set(self.state_names)
        return any(variables(fk) & names for fk in self.f)


def sample_in_t(exprs: Sequence[Expr], grid: Grid) -> np.ndarray:
    """(N+1, k) samples of expressions in t, with removable singularities filled"""
    t = grid.nodes
    columns = []
    for tree in exprs:
        def fn(times, index, tree=tree):
            return evaluate(tree, {"t": times})

        columns.append(with_removable_limits(fn, t, grid.a, grid.b))
    return np.stack(columns, axis=-1)


@dataclass(frozen=True, eq=False)
class TrajectoryBundle:
    """Sampled (x, u, lambda) on a grid plus the objective value"""

    grid: Grid
    x: np.ndarray
    u: np.ndarray
    lam: Optional[np.ndarray] = None
    J: Optional[float] = None

    def __post_init__(self):
        rows = self.grid.N + 1
        for name in ("x", "u", "lam"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.asarray(value, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2 or arr.shape[0] != rows:
                raise DimensionError(
                    f"Bundle {name} has shape {np.shape(value)}, expected ({rows}, d)"
                )
            object.__setattr__(self, name, arr)
        if self.lam is not None and self.lam.shape[1] != self.x.shape[1]:
            raise DimensionError("lambda and x must have the same dimension")

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def state(self) -> SampledFn:
        return SampledFn(self.grid, self.x)

    @property
    def control(self) -> SampledFn:
        return SampledFn(self.grid, self.u)

    @property
    def adjoint(self) -> SampledFn:
        if self.lam is None:
            raise DimensionError("Bundle carries no adjoint samples")
        return SampledFn(self.grid, self.lam)

    def check_against(self, p: ProblemSpec) -> None:
        if self.n != p.n or self.m != p.m:
            raise DimensionError(
                f"Bundle has n={self.n}, m={self.m}; problem expects n={p.n}, m={p.m}"
            )
        if not (np.isclose(self.grid.a, p.a) and np.isclose(self.grid.b, p.b)):
            raise DimensionError(
                f"Bundle interval [{self.grid.a}, {self.grid.b}] differs from [{p.a}, {p.b}]"
            )

    def with_adjoint(self, lam: np.ndarray) -> "TrajectoryBundle":
        return replace(self, lam=lam)

    def with_objective(self, J: float) -> "TrajectoryBundle":
        return replace(self, J=float(J))


def reference_bundle(p: ProblemSpec, grid: Grid) -> TrajectoryBundle:
    """Sample the analytic reference triple of a problem"""
    if p.reference is None:
        raise ProblemFileError("Problem carries no reference triple")
    ref = p.reference
    lam = sample_in_t(ref.lambda_star, grid) if ref.lambda_star is not None else None
    return TrajectoryBundle(
        grid,
        sample_in_t(ref.x_star, grid),
        sample_in_t(ref.u_star, grid),
        lam,
    )
