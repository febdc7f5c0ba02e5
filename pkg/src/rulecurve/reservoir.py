"""Reservoir description and the single-scenario storage LP.

For one inflow scenario of ``T`` steps the model is::

    min  sum_{t=0..T} storage[t]
    s.t. storage[t+1] = storage[t] - output[t] + input[t]
         input[t]  = sum_trib flow[t, r] + sum_div diverted[t, r]
         output[t] = drinking_water[t] + env_flow_dam[t] + release[t]
         min_storage <= storage[t] <= max_storage
         0 <= diverted[t, r] <= min(max_discharge[r], max(0, flow[t, r] - env_flow[r]))
         0 <= release[t] <= penstock + bottom_outlet

``input`` and ``output`` are substituted out of the LP and rebuilt when a
trajectory is extracted.

Because every constraint linking storages is a bound on a difference
``storage[t+1] - storage[t]``, the feasible trajectories are closed under
pointwise minimum. The optimum is therefore the pointwise-least feasible
trajectory, which :func:`least_storage` computes directly in two sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .exceptions import DataError, InfeasibleError
from .hydrology import SECONDS_PER_DAY, TimeGrid
from .lp import LpBuilder, LpProblem, LpSolution, LpStatus, SimplexOptions, solve

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

__all__ = [
    "DivertedRiverSpec",
    "ReservoirSpec",
    "ReservoirConfig",
    "Scenario",
    "StorageTrajectory",
    "build_deterministic_lp",
    "extract_trajectory",
    "convert_spec_units",
    "load_reservoir_config",
    "load_reservoir_spec",
    "least_storage",
    "solve_scenario",
    "SOLVERS",
]

SOLVERS = ("simplex", "highs", "chain")
HM3 = 1e6


def _per_step(value: Any, grid: TimeGrid, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    P = grid.steps_per_year
    if arr.ndim == 0:
        arr = np.full(P, float(arr))
    if arr.shape != (P,):
        raise ValueError(f"{name}: expected a scalar or {P} per-step values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _profile(values: np.ndarray, start: int, length: int) -> np.ndarray:
    """Per-year profile read from ``start`` for ``length`` steps, wrapping around years."""
    return values[(start + np.arange(length)) % values.size]


@dataclass(frozen=True, eq=False)
class DivertedRiverSpec:
    """A river partly routed into the reservoir through a capacity-limited tunnel.

    Quantities are m³ per step; scalars are broadcast over the grid by
    :class:`ReservoirSpec`.
    """

    river: str
    max_discharge: Any
    environmental_flow: Any


@dataclass(frozen=True, eq=False)
class ReservoirSpec:
    """Physical and operational constants, in m³ and m³ per grid step.

    Per-step quantities may be given as scalars (constant fill) or as one
    value per step of the year.
    """

    grid: TimeGrid
    min_storage: float
    max_storage: float
    drinking_water: Any
    environmental_flow_dam: Any
    penstock_capacity: Any
    bottom_outlet_capacity: Any
    tributaries: tuple[str, ...] = ()
    diverted: tuple[DivertedRiverSpec, ...] = ()
    name: str = ""

    def __post_init__(self):
        if not (0 <= self.min_storage < self.max_storage) or not math.isfinite(self.max_storage):
            raise ValueError("need 0 <= min_storage < max_storage < inf")
        g = self.grid
        for attr in ("drinking_water", "environmental_flow_dam", "penstock_capacity", "bottom_outlet_capacity"):
            object.__setattr__(self, attr, _per_step(getattr(self, attr), g, attr))
        object.__setattr__(self, "tributaries", tuple(self.tributaries))
        div = tuple(
            DivertedRiverSpec(
                d.river,
                _per_step(d.max_discharge, g, f"{d.river}.max_discharge"),
                _per_step(d.environmental_flow, g, f"{d.river}.environmental_flow"),
            )
            for d in self.diverted
        )
        object.__setattr__(self, "diverted", div)
        names = [d.river for d in div]
        if len(set(names)) != len(names) or len(set(self.tributaries)) != len(self.tributaries):
            raise ValueError("duplicate river identifiers")
        if set(names) & set(self.tributaries):
            raise ValueError("a river cannot be both tributary and diverted")
        if not self.tributaries and not div:
            raise ValueError("reservoir has no inflowing river")

    @property
    def rivers(self) -> tuple[str, ...]:
        return self.tributaries + tuple(d.river for d in self.diverted)

    @property
    def release_capacity(self) -> np.ndarray:
        return self.penstock_capacity + self.bottom_outlet_capacity

    @property
    def fixed_output(self) -> np.ndarray:
        """Demand that must leave the reservoir every step: drinking water plus environmental flow."""
        return self.drinking_water + self.environmental_flow_dam

    def fingerprint(self) -> dict[str, Any]:
        out = {
            "name": self.name,
            "grid": {"kind": self.grid.kind, "start_month": self.grid.start_month},
            "min_storage": self.min_storage,
            "max_storage": self.max_storage,
            "drinking_water": self.drinking_water.tolist(),
            "environmental_flow_dam": self.environmental_flow_dam.tolist(),
            "release_capacity": self.release_capacity.tolist(),
            "tributaries": list(self.tributaries),
            "diverted": [
                {"river": d.river, "max_discharge": d.max_discharge.tolist(), "environmental_flow": d.environmental_flow.tolist()}
                for d in self.diverted
            ],
        }
        return out


@dataclass(frozen=True)
class ReservoirConfig:
    """Reservoir constants as written in a config file, units in the field names."""

    min_storage_hm3: float
    max_storage_hm3: float
    drinking_water_m3_per_day: Any
    environmental_flow_m3s: Any
    penstock_m3s: Any
    bottom_outlet_m3s: Any
    tributaries: tuple[str, ...]
    diverted: tuple[Mapping[str, Any], ...] = ()
    name: str = ""

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> ReservoirConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown reservoir keys: {sorted(unknown)}")
        missing = [k for k in known - {"diverted", "name"} if k not in raw]
        if missing:
            raise DataError(f"missing reservoir keys: {sorted(missing)}")
        data = dict(raw)
        data["tributaries"] = tuple(data["tributaries"])
        data["diverted"] = tuple(dict(d) for d in data.get("diverted", ()))
        return cls(**data)


def _check_nonneg(value: Any, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative, got {value!r}")
    return arr


def convert_spec_units(raw: ReservoirConfig, grid: TimeGrid) -> ReservoirSpec:
    """Convert config units to m³ per grid step.

    Per-day rates are multiplied by the step length in days; per-second
    rates additionally by 86 400. Volumes given in hm³ become m³.
    """
    days = grid.step_days

    def per_day(v, name):
        return _check_nonneg(v, name) * days

    def per_second(v, name):
        return per_day(_check_nonneg(v, name) * SECONDS_PER_DAY, name)

    diverted = []
    for d in raw.diverted:
        try:
            diverted.append(
                DivertedRiverSpec(
                    str(d["river"]),
                    per_second(d["max_discharge_m3s"], "max_discharge_m3s"),
                    per_second(d["environmental_flow_m3s"], "environmental_flow_m3s"),
                )
            )
        except KeyError as exc:
            raise DataError(f"diverted river entry missing key {exc}") from None
    return ReservoirSpec(
        grid=grid,
        min_storage=float(_check_nonneg(raw.min_storage_hm3, "min_storage_hm3")) * HM3,
        max_storage=float(_check_nonneg(raw.max_storage_hm3, "max_storage_hm3")) * HM3,
        drinking_water=per_day(raw.drinking_water_m3_per_day, "drinking_water_m3_per_day"),
        environmental_flow_dam=per_second(raw.environmental_flow_m3s, "environmental_flow_m3s"),
        penstock_capacity=per_second(raw.penstock_m3s, "penstock_m3s"),
        bottom_outlet_capacity=per_second(raw.bottom_outlet_m3s, "bottom_outlet_m3s"),
        tributaries=tuple(raw.tributaries),
        diverted=tuple(diverted),
        name=raw.name,
    )


def load_reservoir_config(path: str | Path | None = None) -> ReservoirConfig:
    """Read a reservoir TOML file; ``None`` loads the bundled Eupen dam."""
    if path is None:
        path = Path(__file__).with_name("data") / "eupen.toml"
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return ReservoirConfig.from_mapping(raw)


def load_reservoir_spec(path: str | Path | None, grid: TimeGrid) -> ReservoirSpec:
    return convert_spec_units(load_reservoir_config(path), grid)


@dataclass(frozen=True, eq=False)
class Scenario:
    """A multi-step inflow trajectory for every river (m³ per step).

    ``start_step`` is the position of the first step within the year; it keeps
    per-step reservoir constants aligned when a scenario is a shifted slice.
    """

    grid: TimeGrid
    flows: Mapping[str, np.ndarray]
    label: str = ""
    start_step: int = 0

    def __post_init__(self):
        lengths = set()
        clean = {}
        for river, vol in self.flows.items():
            arr = np.array(vol, dtype=float)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise DataError(f"scenario {self.label!r}, river {river}: volumes must be a finite nonnegative series")
            arr.setflags(write=False)
            clean[river] = arr
            lengths.add(arr.size)
        if len(lengths) > 1:
            raise DataError(f"scenario {self.label!r}: river series have different lengths {sorted(lengths)}")
        object.__setattr__(self, "flows", clean)
        object.__setattr__(self, "start_step", int(self.start_step) % self.grid.steps_per_year)

    @property
    def horizon_steps(self) -> int:
        return next(iter(self.flows.values())).size if self.flows else 0

    def slice(self, start: int, length: int) -> Scenario:
        if start < 0 or start + length > self.horizon_steps:
            raise ValueError(f"slice [{start}, {start + length}) outside horizon {self.horizon_steps}")
        return Scenario(
            self.grid,
            {r: v[start:start + length] for r, v in self.flows.items()},
            self.label,
            self.start_step + start,
        )


@dataclass
class StorageTrajectory:
    storages: np.ndarray  # T + 1
    releases: np.ndarray  # T
    diverted_intakes: dict[str, np.ndarray]
    inputs: np.ndarray
    outputs: np.ndarray
    label: str = ""

    @property
    def horizon_steps(self) -> int:
        return self.releases.size

    def mass_balance_residuals(self) -> np.ndarray:
        """Relative residuals of storage[t+1] - storage[t] + output[t] - input[t]."""
        s = self.storages
        r = s[1:] - s[:-1] + self.outputs - self.inputs
        scale = np.maximum.reduce([np.abs(s[1:]), np.abs(s[:-1]), np.abs(self.inputs), np.abs(self.outputs), np.ones_like(r)])
        return np.abs(r) / scale

    def check(self, spec: ReservoirSpec, rtol: float = 1e-6) -> None:
        """Raise ``AssertionError`` if an invariant is violated beyond ``rtol``."""
        tol = rtol * spec.max_storage
        if np.max(self.mass_balance_residuals(), initial=0.0) >= rtol:
            raise AssertionError(f"{self.label}: mass balance violated")
        if np.any(self.storages < spec.min_storage - tol) or np.any(self.storages > spec.max_storage + tol):
            raise AssertionError(f"{self.label}: storage bounds violated")
        for arr in (self.releases, self.inputs, self.outputs, *self.diverted_intakes.values()):
            if np.any(arr < -tol):
                raise AssertionError(f"{self.label}: negative flow component")


def _check_scenario(spec: ReservoirSpec, scenario: Scenario) -> int:
    spec.grid.check_same(scenario.grid)
    missing = [r for r in spec.rivers if r not in scenario.flows]
    if missing:
        raise DataError(f"scenario {scenario.label!r} lacks series for rivers {missing}")
    T = scenario.horizon_steps
    if T < 1:
        raise ValueError("scenario horizon must be at least one step")
    return T


def _tributary_inflow(spec: ReservoirSpec, scenario: Scenario, T: int) -> np.ndarray:
    return sum((scenario.flows[r] for r in spec.tributaries), np.zeros(T))


def _diversion_caps(spec: ReservoirSpec, scenario: Scenario, T: int) -> dict[str, np.ndarray]:
    start = scenario.start_step
    return {
        d.river: np.minimum(
            _profile(d.max_discharge, start, T),
            np.maximum(0.0, scenario.flows[d.river] - _profile(d.environmental_flow, start, T)),
        )
        for d in spec.diverted
    }


def _add_scenario_block(lp: LpBuilder, spec: ReservoirSpec, scenario: Scenario, prefix: str, storage_cost: float) -> int:
    T = _check_scenario(spec, scenario)
    start = scenario.start_step
    trib = _tributary_inflow(spec, scenario, T)
    fixed = _profile(spec.fixed_output, start, T)
    rcap = _profile(spec.release_capacity, start, T)
    caps = _diversion_caps(spec, scenario, T)
    for t in range(T + 1):
        lp.add_variable(f"{prefix}storage[{t}]", spec.min_storage, spec.max_storage, storage_cost)
    for t in range(T):
        lp.add_variable(f"{prefix}release[{t}]", 0.0, rcap[t])
    for river, cap in caps.items():
        for t in range(T):
            lp.add_variable(f"{prefix}diverted[{river}][{t}]", 0.0, cap[t])
    for t in range(T):
        row = {f"{prefix}storage[{t + 1}]": 1.0, f"{prefix}storage[{t}]": -1.0, f"{prefix}release[{t}]": 1.0}
        for river in caps:
            row[f"{prefix}diverted[{river}][{t}]"] = -1.0
        lp.add_row(row, "=", trib[t] - fixed[t], name=f"{prefix}balance[{t}]")
    return T


def build_deterministic_lp(spec: ReservoirSpec, scenario: Scenario) -> LpProblem:
    """LP minimising total storage over one scenario (variables storage, release, diverted)."""
    lp = LpBuilder()
    _add_scenario_block(lp, spec, scenario, "", 1.0)
    return _attach(lp.build(), spec, {"": scenario})


def _attach(problem: LpProblem, spec: ReservoirSpec, scenarios: Mapping[str, Scenario]) -> LpProblem:
    # the LP has no room for exogenous series; keep them for trajectory extraction
    object.__setattr__(problem, "context", (spec, dict(scenarios)))
    return problem


def extract_trajectory(problem: LpProblem, solution: LpSolution, prefix: str = "") -> StorageTrajectory:
    """Read one scenario's trajectory out of a solved storage LP."""
    if solution.status is not LpStatus.OPTIMAL:
        raise InfeasibleError(f"cannot extract a trajectory from a {solution.status.value} solution")
    try:
        spec, scenarios = problem.context
        scenario = scenarios[prefix]
    except (TypeError, KeyError):
        raise ValueError("problem was not built by this module") from None
    T = scenario.horizon_steps
    idx = {name: j for j, name in enumerate(problem.names)}
    x = solution.x
    storages = np.array([x[idx[f"{prefix}storage[{t}]"]] for t in range(T + 1)])
    releases = np.array([x[idx[f"{prefix}release[{t}]"]] for t in range(T)])
    diverted = {
        d.river: np.array([x[idx[f"{prefix}diverted[{d.river}][{t}]"]] for t in range(T)]) for d in spec.diverted
    }
    return _trajectory(spec, scenario, storages, releases, diverted)


def _trajectory(spec, scenario, storages, releases, diverted) -> StorageTrajectory:
    T = scenario.horizon_steps
    inputs = _tributary_inflow(spec, scenario, T) + sum(diverted.values(), np.zeros(T))
    outputs = _profile(spec.fixed_output, scenario.start_step, T) + releases
    return StorageTrajectory(storages, releases, diverted, inputs, outputs, scenario.label)


def net_change_bounds(
    spec: ReservoirSpec, flows: Mapping[str, np.ndarray], start_step: int
) -> tuple[np.ndarray, np.ndarray]:
    """Bounds on storage[t+1] - storage[t] for a batch of scenarios.

    ``flows`` maps each river to an array ``(..., T)``; returns ``(lo, hi)``
    of the same shape.
    """
    some = next(iter(flows.values()))
    T = some.shape[-1]
    trib = np.zeros(some.shape)
    for r in spec.tributaries:
        trib = trib + flows[r]
    div_cap = np.zeros(some.shape)
    for d in spec.diverted:
        div_cap = div_cap + np.minimum(
            _profile(d.max_discharge, start_step, T),
            np.maximum(0.0, flows[d.river] - _profile(d.environmental_flow, start_step, T)),
        )
    base = trib - _profile(spec.fixed_output, start_step, T)
    return base - _profile(spec.release_capacity, start_step, T), base + div_cap


def least_storage(
    spec: ReservoirSpec, lo: np.ndarray, hi: np.ndarray, rtol: float = 1e-9, initial=None
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise-least storage trajectories for difference bounds ``lo <= s[t+1]-s[t] <= hi``.

    Works on batches: ``lo``/``hi`` have shape ``(..., T)``. Returns
    ``(storages, feasible)`` with storages of shape ``(..., T + 1)``.
    A backward sweep lifts each step to what the future needs, then a forward
    sweep lifts it to what the past forces. ``initial`` raises the starting
    storage to a given value before the forward sweep.
    """
    shape = lo.shape[:-1]
    T = lo.shape[-1]
    s = np.full(shape + (T + 1,), spec.min_storage, dtype=float)
    for t in range(T - 1, -1, -1):
        np.maximum(s[..., t], s[..., t + 1] - hi[..., t], out=s[..., t])
    if initial is not None:
        np.maximum(s[..., 0], initial, out=s[..., 0])
    for t in range(T):
        np.maximum(s[..., t + 1], s[..., t] + lo[..., t], out=s[..., t + 1])
    feasible = np.all(s <= spec.max_storage * (1 + rtol), axis=-1)
    np.minimum(s, spec.max_storage, out=s)
    return s, feasible


def _chain_trajectory(spec: ReservoirSpec, scenario: Scenario) -> StorageTrajectory:
    T = _check_scenario(spec, scenario)
    lo, hi = net_change_bounds(spec, scenario.flows, scenario.start_step)
    s, ok = least_storage(spec, lo, hi)
    if not ok:
        raise InfeasibleError("no feasible storage trajectory", scenarios=[scenario.label])
    # split each step's net change into diversion intake and release
    need = np.diff(s) - (_tributary_inflow(spec, scenario, T) - _profile(spec.fixed_output, scenario.start_step, T))
    caps = _diversion_caps(spec, scenario, T)
    diverted = {}
    remaining = np.maximum(need, 0.0)
    for river, cap in caps.items():
        diverted[river] = np.minimum(remaining, cap)
        remaining = remaining - diverted[river]
    releases = np.maximum(-need, 0.0)
    return _trajectory(spec, scenario, s, releases, diverted)


def solve_scenario(
    spec: ReservoirSpec, scenario: Scenario, solver: str = "simplex", options: SimplexOptions | None = None
) -> StorageTrajectory:
    """Optimal storage trajectory for one scenario.

    ``solver`` is an LP backend name (``simplex``, ``highs``) or ``chain`` for
    the two-sweep structured solver. Raises :class:`InfeasibleError`.
    """
    if solver == "chain":
        return _chain_trajectory(spec, scenario)
    problem = build_deterministic_lp(spec, scenario)
    sol = solve(problem, options, solver=solver)
    if sol.status is not LpStatus.OPTIMAL:
        raise InfeasibleError(f"storage LP {sol.status.value}", scenarios=[scenario.label])
    return extract_trajectory(problem, sol)
