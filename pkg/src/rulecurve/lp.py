"""Dense linear programming: problem container, incremental builder and a
bounded-variable two-phase primal simplex.

Problems are stated as::

    min  c @ x
    s.t. A @ x == b
         lower <= x <= upper

Inequality rows are turned into equalities by :class:`LpBuilder`, which adds
one nonnegative slack column per inequality. Lower bounds must be finite;
upper bounds may be ``inf``.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

__all__ = [
    "LpStatus",
    "LpProblem",
    "LpSolution",
    "LpBuilder",
    "SimplexOptions",
    "solve",
    "solve_simplex",
    "solve_highs",
    "register_solver",
    "available_solvers",
    "dump_lp",
]


class LpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True, eq=False)
class LpProblem:
    """Standard-form LP. Immutable once constructed (arrays are made read-only)."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: tuple[str, ...] = ()
    row_names: tuple[str, ...] = ()
    # opaque data a model builder needs to interpret solutions
    context: Any = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        n = c.size
        b = np.array(self.b, dtype=float).reshape(-1)
        A = np.array(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((b.size, n))
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape != (b.size, n):
            raise ValueError(f"constraint matrix has shape {A.shape}, expected ({b.size}, {n})")
        if lower.size != n or upper.size != n:
            raise ValueError("bounds must have one entry per variable")
        for label, arr in (("objective", c), ("matrix", A), ("rhs", b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {label} coefficient")
        if not np.all(np.isfinite(lower)):
            raise ValueError("lower bounds must be finite")
        if np.any(np.isnan(upper)):
            raise ValueError("upper bound is NaN")
        if np.any(lower > upper):
            j = int(np.flatnonzero(lower > upper)[0])
            raise ValueError(f"variable {j} has lower bound {lower[j]} > upper bound {upper[j]}")
        names = tuple(self.names) or tuple(f"x{j}" for j in range(n))
        if len(names) != n:
            raise ValueError("one name per variable required")
        row_names = tuple(self.row_names) or tuple(f"r{i}" for i in range(b.size))
        for arr in (c, A, b, lower, upper):
            arr.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "row_names", row_names)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray
    objective_value: float
    iterations: int = 0
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    solver: str = "simplex"

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class LpBuilder:
    """Accumulates named variables and linear rows, then finalizes an :class:`LpProblem`.

    >>> lp = LpBuilder()
    >>> lp.add_variable("x", lower=0, upper=1, cost=-1)
    0
    >>> lp.add_variable("y", lower=0, upper=1, cost=-1)
    1
    >>> lp.add_row({"x": 1, "y": 1}, "<=", 1)
    0
    >>> round(solve(lp.build()).objective_value, 9)
    -1.0
    """

    def __init__(self):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        self._cost: list[float] = []
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._rows: list[tuple[dict[int, float], str, float, str]] = []

    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def add_variable(self, name: str, lower: float = 0.0, upper: float = math.inf, cost: float = 0.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable name {name!r}")
        lower, upper, cost = float(lower), float(upper), float(cost)
        if not math.isfinite(lower):
            raise ValueError(f"variable {name!r}: lower bound must be finite")
        if math.isnan(upper) or not math.isfinite(cost):
            raise ValueError(f"variable {name!r}: non-finite coefficient")
        if lower > upper:
            raise ValueError(f"variable {name!r}: lower bound {lower} > upper bound {upper}")
        self._index[name] = len(self._names)
        self._names.append(name)
        self._cost.append(cost)
        self._lower.append(lower)
        self._upper.append(upper)
        return self._index[name]

    def add_row(self, coefs: dict[str, float], sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in ("<=", ">=", "=", "=="):
            raise ValueError(f"unknown row sense {sense!r}")
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise ValueError("non-finite right-hand side")
        row: dict[int, float] = {}
        for var, value in coefs.items():
            if var not in self._index:
                raise KeyError(f"row references undeclared variable {var!r}")
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"non-finite coefficient for {var!r}")
            j = self._index[var]
            row[j] = row.get(j, 0.0) + value
        label = name or f"r{len(self._rows)}"
        self._rows.append((row, "=" if sense == "==" else sense, rhs, label))
        return len(self._rows) - 1

    def build(self) -> LpProblem:
        n_struct = len(self._names)
        n_slack = sum(1 for _, sense, _, _ in self._rows if sense != "=")
        n = n_struct + n_slack
        m = len(self._rows)
        A = np.zeros((m, n))
        b = np.zeros(m)
        c = np.zeros(n)
        lower = np.zeros(n)
        upper = np.full(n, math.inf)
        c[:n_struct] = self._cost
        lower[:n_struct] = self._lower
        upper[:n_struct] = self._upper
        names = list(self._names)
        k = n_struct
        for i, (row, sense, rhs, label) in enumerate(self._rows):
            for j, value in row.items():
                A[i, j] = value
            b[i] = rhs
            if sense != "=":
                A[i, k] = 1.0 if sense == "<=" else -1.0
                names.append(f"slack[{label}]")
                k += 1
        return LpProblem(c, A, b, lower, upper, tuple(names), tuple(r[3] for r in self._rows))


@dataclass(frozen=True)
class SimplexOptions:
    max_iterations: int | None = None
    feasibility_tol: float = 1e-9
    row_tol: float = 1e-8
    optimality_tol: float = 1e-9
    pivot_tol: float = 1e-9
    degeneracy_streak: int = 50


# Nonbasic status codes
_AT_LOWER, _AT_UPPER, _BASIC = 0, 1, 2


class _Simplex:
    """Working state of one solve: a dense tableau over structural + artificial columns.

    The problem is scaled by one scalar so that rhs and finite bounds are O(1);
    all coefficients of the models built here are O(1) already.
    """

    def __init__(self, problem: LpProblem, opts: SimplexOptions):
        self.opts = opts
        m, n = problem.n_rows, problem.n_vars
        self.m, self.n = m, n
        finite_up = problem.upper[np.isfinite(problem.upper)]
        self.scale = max(
            1.0,
            float(np.max(np.abs(problem.b), initial=0.0)),
            float(np.max(np.abs(problem.lower), initial=0.0)),
            float(np.max(np.abs(finite_up), initial=0.0)),
        )
        s = self.scale
        self.lower = np.concatenate([problem.lower / s, np.zeros(m)])
        self.upper = np.concatenate([problem.upper / s, np.full(m, math.inf)])
        self.cost = np.concatenate([problem.c, np.zeros(m)])
        b = problem.b / s

        self.status = np.full(n + m, _AT_LOWER, dtype=np.int8)
        self.x = self.lower.copy()
        residual = b - problem.A @ self.x[:n]
        self.art_sign = np.where(residual >= 0, 1.0, -1.0)
        # tableau = B^-1 [A | diag(sign)], starting basis = artificials
        self.T = np.empty((m, n + m))
        self.T[:, :n] = problem.A * self.art_sign[:, None]
        self.T[:, n:] = np.eye(m)
        self.basis = np.arange(n, n + m)
        self.status[self.basis] = _BASIC
        self.x[n:] = np.abs(residual)
        self.enterable = np.ones(n + m, dtype=bool)
        self.enterable[n:] = False
        self.iterations = 0

    def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        return cost - cost[self.basis] @ self.T

    def _choose_entering(self, d: np.ndarray, bland: bool) -> int:
        tol = self.opts.optimality_tol
        st = self.status
        eligible = self.enterable & (
            ((st == _AT_LOWER) & (d < -tol)) | ((st == _AT_UPPER) & (d > tol))
        )
        # fixed variables never move
        eligible &= self.upper > self.lower
        if not eligible.any():
            return -1
        if bland:
            return int(np.flatnonzero(eligible)[0])
        score = np.where(eligible, np.abs(d), -1.0)
        return int(np.argmax(score))

    def _ratio_test(self, q: int, direction: float, bland: bool) -> tuple[float, int, int]:
        """Return (step, leaving row or -1 for a bound flip, bound hit by leaving var)."""
        tol = self.opts.pivot_tol
        alpha = self.T[:, q] * direction
        xb = self.x[self.basis]
        lb = self.lower[self.basis]
        ub = self.upper[self.basis]
        dec = alpha > tol
        inc = alpha < -tol
        ratios = np.full(self.m, math.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios[dec] = (xb[dec] - lb[dec]) / alpha[dec]
            ratios[inc] = (ub[inc] - xb[inc]) / (-alpha[inc])
        ratios = np.maximum(ratios, 0.0)
        flip = self.upper[q] - self.lower[q]
        if not (dec.any() or inc.any()):
            return flip, -1, -1
        if bland:
            theta = float(ratios.min())
            if flip <= theta:
                return flip, -1, -1
            ties = np.flatnonzero(ratios <= theta + 1e-12)
            r = int(ties[np.argmin(self.basis[ties])])
        else:
            # Harris two-pass: relax bounds, then take the largest pivot among candidates
            ftol = self.opts.feasibility_tol
            relaxed = np.full(self.m, math.inf)
            with np.errstate(divide="ignore", invalid="ignore"):
                relaxed[dec] = (xb[dec] - lb[dec] + ftol) / alpha[dec]
                relaxed[inc] = (ub[inc] - xb[inc] + ftol) / (-alpha[inc])
            theta_max = float(relaxed.min())
            if flip <= theta_max and flip <= float(ratios.min()):
                return flip, -1, -1
            cand = np.flatnonzero(ratios <= theta_max)
            if cand.size == 0:
                cand = np.array([int(np.argmin(ratios))])
            r = int(cand[np.argmax(np.abs(alpha[cand]))])
            theta = float(ratios[r])
            if flip <= theta:
                return flip, -1, -1
        bound = _AT_LOWER if alpha[r] > 0 else _AT_UPPER
        return float(ratios[r]), r, bound

    def _pivot(self, r: int, q: int) -> None:
        T = self.T
        prow = T[r] / T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        cols = np.flatnonzero(prow)
        # tableaus of these models stay sparse; only touch the affected block
        if rows.size * cols.size * 4 < T.size:
            T[np.ix_(rows, cols)] -= np.outer(col[rows], prow[cols])
        else:
            T -= np.outer(col, prow)
        T[r] = prow

    def run(self, cost: np.ndarray, limit: int, on_iter: Callable | None = None) -> LpStatus:
        d = self._reduced_costs(cost)
        streak = 0
        while True:
            if self.iterations >= limit:
                return LpStatus.ITERATION_LIMIT
            bland = streak >= self.opts.degeneracy_streak
            q = self._choose_entering(d, bland)
            if q < 0:
                return LpStatus.OPTIMAL
            direction = 1.0 if self.status[q] == _AT_LOWER else -1.0
            theta, r, bound = self._ratio_test(q, direction, bland)
            if math.isinf(theta):
                return LpStatus.UNBOUNDED
            self.iterations += 1
            streak = streak + 1 if theta <= 1e-12 else 0
            step = theta * direction
            self.x[self.basis] -= step * self.T[:, q]
            self.x[q] += step
            if r < 0:
                self.status[q] = _AT_UPPER if direction > 0 else _AT_LOWER
                self.x[q] = self.upper[q] if direction > 0 else self.lower[q]
                continue
            leaving = self.basis[r]
            self.status[leaving] = bound
            self.x[leaving] = self.lower[leaving] if bound == _AT_LOWER else self.upper[leaving]
            self._pivot(r, q)
            self.basis[r] = q
            self.status[q] = _BASIC
            if self.iterations % 100 == 0:
                d = self._reduced_costs(cost)
            else:
                d -= d[q] * self.T[r]
                d[q] = 0.0
            if on_iter is not None:
                on_iter(self)

    def primal(self) -> np.ndarray:
        return self.x[: self.n] * self.scale

    def duals(self, cost: np.ndarray) -> np.ndarray:
        # columns of the artificials hold B^-1 diag(sign)
        binv = self.T[:, self.n:] * self.art_sign[None, :]
        return cost[self.basis] @ binv


def solve_simplex(problem: LpProblem, options: SimplexOptions | None = None) -> LpSolution:
    """Two-phase bounded-variable primal simplex.

    Dantzig pricing with a Harris ratio test; after ``degeneracy_streak``
    consecutive degenerate pivots the rule switches to Bland's until progress
    resumes. Deterministic for a given problem.
    """
    opts = options or SimplexOptions()
    m, n = problem.n_rows, problem.n_vars
    if n == 0 and m == 0:
        return LpSolution(LpStatus.OPTIMAL, np.zeros(0), 0.0, 0, np.zeros(0), np.zeros(0))
    limit = opts.max_iterations if opts.max_iterations is not None else 50 * (m + n) + 100
    sx = _Simplex(problem, opts)

    phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
    status = sx.run(phase1_cost, limit)
    infeas = float(sx.x[n:].sum())
    tol = opts.row_tol * (1.0 + float(np.max(np.abs(problem.b), initial=0.0)) / sx.scale)
    if status is LpStatus.ITERATION_LIMIT:
        return LpSolution(status, sx.primal(), math.nan, sx.iterations)
    if infeas > tol * max(1, m):
        return LpSolution(LpStatus.INFEASIBLE, sx.primal(), math.nan, sx.iterations)

    # artificials are pinned to zero for phase 2
    sx.upper[n:] = 0.0
    sx.x[n:] = np.where(sx.status[n:] == _BASIC, sx.x[n:], 0.0)
    phase2_cost = np.concatenate([problem.c, np.zeros(m)])
    status = sx.run(phase2_cost, limit)
    x = np.clip(sx.primal(), problem.lower, problem.upper)
    obj = float(problem.c @ x)
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, x, obj if status is LpStatus.ITERATION_LIMIT else -math.inf, sx.iterations)
    y = sx.duals(phase2_cost)
    reduced = problem.c - y @ problem.A
    return LpSolution(LpStatus.OPTIMAL, x, obj, sx.iterations, y, reduced, "simplex")


def solve_highs(problem: LpProblem, options: SimplexOptions | None = None) -> LpSolution:
    """Delegate to the HiGHS solver shipped with SciPy."""
    from scipy.optimize import linprog

    bounds = list(zip(problem.lower, [None if math.isinf(u) else u for u in problem.upper]))
    if problem.n_vars == 0:
        return LpSolution(LpStatus.OPTIMAL, np.zeros(0), 0.0, 0, solver="highs")
    res = linprog(
        problem.c,
        A_eq=problem.A if problem.n_rows else None,
        b_eq=problem.b if problem.n_rows else None,
        bounds=bounds,
        method="highs",
    )
    status = {
        0: LpStatus.OPTIMAL,
        1: LpStatus.ITERATION_LIMIT,
        2: LpStatus.INFEASIBLE,
        3: LpStatus.UNBOUNDED,
    }.get(res.status, LpStatus.INFEASIBLE)
    if status is not LpStatus.OPTIMAL:
        x = np.asarray(res.x) if res.x is not None else np.full(problem.n_vars, math.nan)
        return LpSolution(status, x, math.nan, int(res.nit), solver="highs")
    x = np.clip(np.asarray(res.x, dtype=float), problem.lower, problem.upper)
    duals = np.asarray(res.eqlin.marginals) if problem.n_rows else np.zeros(0)
    return LpSolution(
        LpStatus.OPTIMAL, x, float(problem.c @ x), int(res.nit), duals, problem.c - duals @ problem.A, "highs"
    )


_SOLVERS: dict[str, Callable[[LpProblem, SimplexOptions | None], LpSolution]] = {
    "simplex": solve_simplex,
    "highs": solve_highs,
}


def register_solver(name: str, fn: Callable[[LpProblem, SimplexOptions | None], LpSolution]) -> None:
    """Make an external LP backend available under ``name``."""
    _SOLVERS[name] = fn


def available_solvers() -> list[str]:
    return sorted(_SOLVERS)


def solve(problem: LpProblem, options: SimplexOptions | None = None, solver: str = "simplex") -> LpSolution:
    try:
        fn = _SOLVERS[solver]
    except KeyError:
        raise ValueError(f"unknown LP solver {solver!r}; choose from {available_solvers()}") from None
    return fn(problem, options)


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else repr(float(v))


def dump_lp(problem: LpProblem, stream: io.TextIOBase | None = None) -> str:
    """Fixed-format text listing of objective, rows and bounds."""
    out = io.StringIO()
    out.write(f"NAME {problem.n_vars} vars {problem.n_rows} rows\n")
    out.write("MINIMIZE\n")
    for j in np.flatnonzero(problem.c):
        out.write(f"  {problem.names[j]} {_fmt(problem.c[j])}\n")
    out.write("ROWS\n")
    for i in range(problem.n_rows):
        terms = " ".join(f"{_fmt(problem.A[i, j])}*{problem.names[j]}" for j in np.flatnonzero(problem.A[i]))
        out.write(f"  {problem.row_names[i]}: {terms} = {_fmt(problem.b[i])}\n")
    out.write("BOUNDS\n")
    for j in range(problem.n_vars):
        out.write(f"  {_fmt(problem.lower[j])} <= {problem.names[j]} <= {_fmt(problem.upper[j])}\n")
    out.write("END\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text
