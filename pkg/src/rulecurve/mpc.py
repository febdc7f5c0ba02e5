"""Receding-horizon construction of a year-round rule curve.

Scenarios span ``scenario_years`` (3 by default) but each uncertain model is
solved on a ``window_years`` (2) window. The window slides one step at a
time across the first year; only the rule value at the window's first step
is kept. Every value therefore carries the full two-year guarantee and the
curve closes on itself from one year to the next.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence, Union

import numpy as np

from .exceptions import DataError, InfeasibleError
from .hydrology import HydroYear, TimeGrid, stack_years
from .reservoir import ReservoirSpec, Scenario, least_storage, net_change_bounds, solve_scenario
from .robust import ConfidenceSpec, solve_robust, worst_case_profile
from .stochastic import ScenarioGenMethod, generate_scenarios, solve_decoupled, solve_window

__all__ = [
    "StochasticModel",
    "RobustModel",
    "MpcConfig",
    "WindowResult",
    "RuleCurve",
    "ContinuityReport",
    "run_mpc",
    "direct_rule_curve",
    "check_continuity",
    "verify_window",
    "data_fingerprint",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class StochasticModel:
    kind: str = "merge"

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioGenMethod(self.kind).kind)

    def describe(self) -> str:
        return f"stochastic-{self.kind}"


@dataclass(frozen=True)
class RobustModel:
    conf: ConfidenceSpec = ConfidenceSpec()

    def describe(self) -> str:
        sided = "one-sided" if self.conf.one_sided else "two-sided"
        return f"robust-{self.conf.level:g}-{sided}"


Model = Union[StochasticModel, RobustModel]


@dataclass(frozen=True)
class MpcConfig:
    model: Model = StochasticModel()
    window_years: int = 2
    scenario_years: int = 3

    def validate(self, steps_per_year: int) -> None:
        P = steps_per_year
        if self.window_years < 1:
            raise ValueError("window_years must be >= 1")
        if self.scenario_years * P < (P - 1) + self.window_years * P:
            raise ValueError(
                f"{self.scenario_years}-year scenarios cannot hold every shifted {self.window_years}-year window"
            )


@dataclass
class WindowResult:
    start_step: int
    value: float
    rule_storage: np.ndarray
    n_scenarios: int
    support: list[str]
    elapsed: float


@dataclass(eq=False)
class RuleCurve:
    """Minimum storage (m³) at the start of every step of one year."""

    grid: TimeGrid
    values: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)
    windows: list[WindowResult] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.steps_per_year,):
            raise DataError(f"rule curve needs {self.grid.steps_per_year} values, got {self.values.shape}")

    def validate(self, spec: ReservoirSpec, rtol: float = 1e-9) -> None:
        tol = rtol * spec.max_storage
        if not np.all(np.isfinite(self.values)):
            raise DataError("rule curve has missing values")
        if np.any(self.values < spec.min_storage - tol) or np.any(self.values > spec.max_storage + tol):
            raise DataError("rule curve leaves [min_storage, max_storage]")

    def to_dict(self) -> dict[str, Any]:
        meta = {k: v for k, v in self.metadata.items() if k != "generated_at"}
        return {
            "schema_version": SCHEMA_VERSION,
            "grid": {"kind": self.grid.kind, "start_month": self.grid.start_month, "steps_per_year": self.grid.steps_per_year},
            "unit": "m3",
            "metadata": meta,
            "values": [float(v) for v in self.values],
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def write_csv(self, path: str | Path) -> None:
        lines = ["step,volume_m3"] + [f"{t},{v!r}" for t, v in enumerate(self.values.tolist())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RuleCurve:
        if data.get("schema_version") != SCHEMA_VERSION:
            raise DataError(f"unsupported rule curve schema {data.get('schema_version')!r}")
        g = data["grid"]
        grid = TimeGrid(g["kind"], g["start_month"], g["steps_per_year"] if g["kind"] == "custom" else None)
        return cls(grid, np.array(data["values"], dtype=float), dict(data.get("metadata", {})))

    @classmethod
    def read_json(cls, path: str | Path) -> RuleCurve:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def read_csv(cls, path: str | Path, grid: TimeGrid) -> RuleCurve:
        rows = Path(path).read_text(encoding="utf-8").split()
        if not rows or rows[0].strip() != "step,volume_m3":
            raise DataError(f"{path}: expected header step,volume_m3")
        if len(rows) - 1 != grid.steps_per_year:
            raise DataError(f"{path}: grid mismatch, {len(rows) - 1} rows for a {grid.steps_per_year}-step grid")
        values = np.full(grid.steps_per_year, np.nan)
        for lineno, row in enumerate(rows[1:], start=2):
            try:
                step, vol = row.split(",")
                values[int(step)] = float(vol)
            except (ValueError, IndexError):
                raise DataError(f"malformed rule curve row {row!r}", line=lineno) from None
        if np.isnan(values).any():
            raise DataError(f"{path}: steps missing from the rule curve")
        return cls(grid, values, {"source": str(path)})


@dataclass
class ContinuityReport:
    complete: bool
    wrap_jump: float
    max_step_jump: float
    missing_steps: list[int]


def check_continuity(curve: RuleCurve) -> ContinuityReport:
    """Check that every step has a value and measure the end-of-year wrap jump."""
    v = curve.values
    missing = [int(i) for i in np.flatnonzero(~np.isfinite(v))]
    if missing:
        raise DataError(f"rule curve has no value at steps {missing}")
    jumps = np.abs(np.diff(v))
    return ContinuityReport(True, float(abs(v[0] - v[-1])), float(jumps.max(initial=0.0)), [])


def data_fingerprint(years: Sequence[HydroYear]) -> str:
    h = hashlib.sha256()
    for y in years:
        h.update(y.label.encode())
        for r in y.rivers:
            h.update(r.encode())
            h.update(np.ascontiguousarray(y.flows[r], dtype="<f8").tobytes())
    return h.hexdigest()


def _robust_window_scenario(profile: dict[str, np.ndarray], grid: TimeGrid, cfg: MpcConfig, t1: int) -> Scenario:
    flows = {r: np.tile(v, cfg.scenario_years) for r, v in profile.items()}
    full = Scenario(grid, flows, f"ci-lower@{cfg.model.conf.level:g}")
    return full.slice(t1, cfg.window_years * grid.steps_per_year)


def _solve_windows(args) -> list[WindowResult]:
    spec, years, cfg, solver, starts = args
    grid = years[0].grid
    L = cfg.window_years * grid.steps_per_year
    out = []
    if isinstance(cfg.model, StochasticModel):
        sset = generate_scenarios(years, ScenarioGenMethod(cfg.model.kind, cfg.scenario_years))
        for t1 in starts:
            tic = time.perf_counter()
            try:
                env = solve_window(spec, sset, t1, L, solver=solver)
            except InfeasibleError as exc:
                raise InfeasibleError("stochastic window infeasible", scenarios=exc.scenarios, start_step=t1) from None
            support = env.support_ids if len(sset) <= 1000 else []
            out.append(
                WindowResult(t1, float(env.rule_storage[0]), env.rule_storage, len(sset), support, time.perf_counter() - tic)
            )
    else:
        profile = worst_case_profile(years, cfg.model.conf)
        for t1 in starts:
            tic = time.perf_counter()
            sc = _robust_window_scenario(profile, grid, cfg, t1)
            try:
                tr = solve_scenario(spec, sc, solver)
            except InfeasibleError:
                raise InfeasibleError("robust window infeasible", level=cfg.model.conf.level, start_step=t1) from None
            out.append(WindowResult(t1, float(tr.storages[0]), tr.storages[:-1], 1, [sc.label], time.perf_counter() - tic))
    return out


def _metadata(spec, years, model: Model, mpc: bool, window_years: int, solver: str) -> dict[str, Any]:
    return {
        "model": model.describe(),
        "mpc": mpc,
        "guarantee_years": window_years,
        "solver": solver,
        "reservoir": spec.name,
        "years": [y.label for y in years],
        "data_fingerprint": data_fingerprint(years),
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def run_mpc(
    spec: ReservoirSpec,
    years: Sequence[HydroYear],
    cfg: MpcConfig = MpcConfig(),
    solver: str = "simplex",
    jobs: int = 1,
    progress: Callable[[int, int, float], None] | None = None,
) -> RuleCurve:
    """Slide the guarantee window over one year and collect first-step rule values.

    Windows are independent; with ``jobs > 1`` they are spread over a
    process pool and reassembled by start step, so the curve does not depend
    on the worker count. ``progress(start_step, n_scenarios, elapsed)`` is
    called once per finished window.
    """
    grid, _, _ = stack_years(years)
    spec.grid.check_same(grid)
    P = grid.steps_per_year
    cfg.validate(P)
    if isinstance(cfg.model, RobustModel) and len(years) < 2:
        raise DataError("the robust model needs at least two years")
    starts = list(range(P))
    tic = time.perf_counter()
    if jobs > 1:
        chunks = [starts[i::jobs] for i in range(jobs) if starts[i::jobs]]
        results: list[WindowResult] = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_solve_windows, [(spec, list(years), cfg, solver, c) for c in chunks]):
                results.extend(part)
                if progress:
                    for w in part:
                        progress(w.start_step, w.n_scenarios, time.perf_counter() - tic)
    else:
        results = []
        for t1 in starts:
            part = _solve_windows((spec, years, cfg, solver, [t1]))
            results.extend(part)
            if progress:
                progress(t1, part[0].n_scenarios, time.perf_counter() - tic)
    results.sort(key=lambda w: w.start_step)
    values = np.array([w.value for w in results])
    meta = _metadata(spec, years, cfg.model, True, cfg.window_years, solver)
    meta["scenario_years"] = cfg.scenario_years
    meta["n_scenarios"] = results[0].n_scenarios
    curve = RuleCurve(grid, values, meta, results)
    curve.validate(spec)
    return curve


def direct_rule_curve(
    spec: ReservoirSpec,
    years: Sequence[HydroYear],
    model: Model,
    window_years: int = 2,
    solver: str = "simplex",
    jobs: int = 1,
) -> RuleCurve:
    """Single solve over a ``window_years`` horizon; the first year of its rule values."""
    grid, _, _ = stack_years(years)
    spec.grid.check_same(grid)
    P = grid.steps_per_year
    if isinstance(model, StochasticModel):
        sset = generate_scenarios(years, ScenarioGenMethod(model.kind, window_years))
        if solver == "chain":
            env = solve_decoupled(spec, sset, solver="chain", keep_trajectories=False)
        else:
            env = solve_decoupled(spec, sset, solver=solver, jobs=jobs)
        values = env.rule_storage[:P]
        n = len(sset)
    else:
        tr = solve_robust(spec, years, model.conf, horizon_years=window_years, solver=solver)
        values = tr.storages[:P]
        n = 1
    meta = _metadata(spec, years, model, False, window_years, solver)
    meta["n_scenarios"] = n
    curve = RuleCurve(grid, values.copy(), meta)
    curve.validate(spec)
    return curve


def verify_window(
    spec: ReservoirSpec, years: Sequence[HydroYear], cfg: MpcConfig, curve: RuleCurve, start_step: int, rtol: float = 1e-9
) -> bool:
    """Replay one window: starting at the curve value, can every scenario slice be carried through?"""
    grid = curve.grid
    L = cfg.window_years * grid.steps_per_year
    v = curve.values[start_step] * (1 + rtol) + rtol
    if isinstance(cfg.model, StochasticModel):
        sset = generate_scenarios(years, ScenarioGenMethod(cfg.model.kind, cfg.scenario_years))
        flows = sset.flows_batch(np.arange(len(sset)), start_step, L)
    else:
        sc = _robust_window_scenario(worst_case_profile(years, cfg.model.conf), grid, cfg, start_step)
        flows = {r: f[None, :] for r, f in sc.flows.items()}
    lo, hi = net_change_bounds(spec, flows, start_step)
    least, _ = least_storage(spec, lo, hi)
    if np.any(least[:, 0] > v):
        return False
    _, ok = least_storage(spec, lo, hi, initial=curve.values[start_step])
    return bool(np.all(ok))
