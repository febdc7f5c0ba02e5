"""Scenario generation from historical years and the upper-envelope model.

The rule curve must dominate the least storage trajectory of every scenario,
so it is their pointwise maximum. Scenarios do not interact: each one is
solved on its own and the envelope is reduced afterwards. The monolithic LP
with explicit coupling rows is kept to validate that shortcut.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, InfeasibleError
from .hydrology import HydroYear, stack_years
from .lp import LpBuilder, LpProblem, LpStatus, SimplexOptions, solve
from .reservoir import (
    ReservoirSpec,
    Scenario,
    StorageTrajectory,
    _add_scenario_block,
    _attach,
    extract_trajectory,
    least_storage,
    net_change_bounds,
    solve_scenario,
)

__all__ = [
    "MERGING",
    "MIXING",
    "ScenarioGenMethod",
    "ScenarioSet",
    "EnvelopeSolution",
    "generate_scenarios",
    "build_stochastic_lp",
    "solve_decoupled",
    "solve_monolithic",
    "identify_support",
]

MERGING = "merge"
MIXING = "mix"
_KIND_ALIASES = {"merge": MERGING, "merging": MERGING, "mix": MIXING, "mixing": MIXING}


@dataclass(frozen=True)
class ScenarioGenMethod:
    kind: str = MERGING
    years_per_scenario: int = 2

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ValueError(f"unknown scenario generation {self.kind!r}; use 'merge' or 'mix'")
        object.__setattr__(self, "kind", kind)
        if int(self.years_per_scenario) < 1:
            raise ValueError("years_per_scenario must be >= 1")


class ScenarioSet(Sequence):
    """Scenarios built by concatenating historical years, materialised on demand.

    Each scenario is a tuple of year indices. For merging the tuples are
    consecutive runs; for mixing they enumerate the k-fold Cartesian product
    in lexicographic order, decoded from the scenario index so nothing of
    size ``N**k`` is stored.
    """

    def __init__(self, years: Sequence[HydroYear], method: ScenarioGenMethod):
        self.grid, self.rivers, self._stack = stack_years(years)
        self.labels = tuple(y.label for y in years)
        self.method = method
        n, k = len(years), method.years_per_scenario
        if method.kind == MERGING and n < k:
            raise DataError(f"merging {k}-year scenarios needs at least {k} years, got {n}")
        self.n_years = n
        self.k = k
        self._len = n - k + 1 if method.kind == MERGING else n**k

    @property
    def steps_per_scenario(self) -> int:
        return self.k * self.grid.steps_per_year

    def __len__(self) -> int:
        return self._len

    def year_indices(self, idx) -> np.ndarray:
        """Year-index tuples for scenario indices ``idx`` (array of shape ``(len(idx), k)``)."""
        idx = np.asarray(idx, dtype=np.int64)
        if np.any((idx < 0) | (idx >= self._len)):
            raise IndexError("scenario index out of range")
        if self.method.kind == MERGING:
            return idx[:, None] + np.arange(self.k)[None, :]
        out = np.empty((idx.size, self.k), dtype=np.int64)
        rest = idx.copy()
        for j in range(self.k - 1, -1, -1):
            out[:, j] = rest % self.n_years
            rest //= self.n_years
        return out

    def label(self, i: int) -> str:
        return "+".join(self.labels[j] for j in self.year_indices([i])[0])

    def flows_batch(self, idx, start: int = 0, length: int | None = None) -> dict[str, np.ndarray]:
        """Per-river inflow arrays ``(len(idx), length)`` for a window of the scenarios."""
        P = self.grid.steps_per_year
        length = self.steps_per_scenario - start if length is None else length
        if start < 0 or start + length > self.steps_per_scenario:
            raise ValueError("window exceeds the scenario length")
        tuples = self.year_indices(idx)
        steps = start + np.arange(length)
        year_of_step = tuples[:, steps // P]
        col = np.broadcast_to(steps % P, year_of_step.shape)
        return {r: self._stack[r][year_of_step, col] for r in self.rivers}

    def scenario(self, i: int, start: int = 0, length: int | None = None) -> Scenario:
        flows = {r: v[0] for r, v in self.flows_batch([i], start, length).items()}
        return Scenario(self.grid, flows, self.label(i), start)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError("scenario index out of range")
        return self.scenario(i)

    def __iter__(self):
        for i in range(len(self)):
            yield self.scenario(i)

    def provenance(self) -> list[tuple[str, ...]]:
        return [tuple(self.labels[j] for j in t) for t in self.year_indices(np.arange(len(self)))]


def generate_scenarios(years: Sequence[HydroYear], method: ScenarioGenMethod) -> ScenarioSet:
    """Merging gives ``N - k + 1`` runs of consecutive years, mixing all ``N**k`` tuples."""
    if not years:
        raise DataError("no years given")
    return ScenarioSet(years, method)


@dataclass
class EnvelopeSolution:
    """Upper envelope of per-scenario least storage trajectories.

    ``rule_storage`` covers the ``T`` decision steps (storage at the start of
    each step); ``storages`` holds every scenario's full ``T + 1`` trajectory.
    """

    rule_storage: np.ndarray
    storages: np.ndarray
    ids: list[str]
    floor: float
    trajectories: dict[str, StorageTrajectory] = field(default_factory=dict)
    objective_value: float | None = None

    def __post_init__(self):
        if self.objective_value is None:
            self.objective_value = float(self.rule_storage.sum())

    @property
    def horizon_steps(self) -> int:
        return self.rule_storage.size

    @property
    def per_scenario(self) -> dict[str, np.ndarray]:
        return {sid: self.storages[i] for i, sid in enumerate(self.ids)}

    @property
    def support_ids(self) -> list[str]:
        return identify_support(self)


def identify_support(sol: EnvelopeSolution, tolerance: float = 1e-6, ignore_floor: bool = True) -> list[str]:
    """Scenarios whose trajectory reaches the envelope at some step.

    With ``ignore_floor`` steps where the envelope sits on the storage floor
    are skipped, since every scenario touches the curve there without shaping
    it. If the envelope never leaves the floor, all steps count.
    """
    T = sol.horizon_steps
    rule = sol.rule_storage
    steps = np.ones(T, dtype=bool)
    if ignore_floor:
        above = rule > sol.floor * (1 + tolerance) + tolerance
        if above.any():
            steps = above
    touch = sol.storages[:, :T] >= rule[None, :] * (1 - tolerance) - tolerance
    hit = np.any(touch[:, steps], axis=1)
    return [sid for sid, h in zip(sol.ids, hit) if h]


def _as_list(scenarios) -> list[Scenario]:
    out = list(scenarios)
    if not out:
        raise ValueError("at least one scenario is required")
    T = out[0].horizon_steps
    for s in out:
        out[0].grid.check_same(s.grid)
        if s.horizon_steps != T:
            raise DataError(f"heterogeneous scenario horizons: {T} vs {s.horizon_steps} ({s.label})")
    return out


def _ids(scenarios: list[Scenario]) -> list[str]:
    ids = []
    seen: dict[str, int] = {}
    for i, s in enumerate(scenarios):
        base = s.label or f"s{i}"
        n = seen.get(base, 0)
        seen[base] = n + 1
        ids.append(base if n == 0 else f"{base}#{n}")
    return ids


def build_stochastic_lp(spec: ReservoirSpec, scenarios) -> LpProblem:
    """Monolithic envelope LP: every scenario block plus ``storage[s][t] <= rule[t]``."""
    scenarios = _as_list(scenarios)
    T = scenarios[0].horizon_steps
    lp = LpBuilder()
    for t in range(T):
        lp.add_variable(f"rule[{t}]", 0.0, math.inf, 1.0)
    blocks = {}
    for i, sc in enumerate(scenarios):
        prefix = f"s{i}."
        _add_scenario_block(lp, spec, sc, prefix, 0.0)
        blocks[prefix] = sc
        for t in range(T):
            lp.add_row({f"{prefix}storage[{t}]": 1.0, f"rule[{t}]": -1.0}, "<=", 0.0, name=f"{prefix}cover[{t}]")
    return _attach(lp.build(), spec, blocks)


def solve_monolithic(
    spec: ReservoirSpec, scenarios, solver: str = "simplex", options: SimplexOptions | None = None
) -> EnvelopeSolution:
    scenarios = _as_list(scenarios)
    problem = build_stochastic_lp(spec, scenarios)
    sol = solve(problem, options, solver=solver)
    if sol.status is not LpStatus.OPTIMAL:
        raise InfeasibleError(f"envelope LP {sol.status.value}", scenarios=_ids(scenarios))
    T = scenarios[0].horizon_steps
    rule = np.array([sol.x[problem.index(f"rule[{t}]")] for t in range(T)])
    trajs = {}
    ids = _ids(scenarios)
    for i, sid in enumerate(ids):
        trajs[sid] = extract_trajectory(problem, sol, prefix=f"s{i}.")
    storages = np.stack([trajs[sid].storages for sid in ids])
    return EnvelopeSolution(rule, storages, ids, spec.min_storage, trajs, sol.objective_value)


def _solve_chunk(args) -> tuple[np.ndarray, list[int], dict[str, StorageTrajectory]]:
    spec, items, solver, options, keep = args
    storages = []
    bad = []
    trajs = {}
    for i, sid, sc in items:
        try:
            tr = solve_scenario(spec, sc, solver, options)
        except InfeasibleError:
            bad.append(i)
            storages.append(np.full(sc.horizon_steps + 1, np.nan))
            continue
        storages.append(tr.storages)
        if keep:
            trajs[sid] = tr
    return np.stack(storages), bad, trajs


def _envelope(spec, storages, ids, trajs) -> EnvelopeSolution:
    T = storages.shape[1] - 1
    rule = np.max(storages[:, :T], axis=0)
    return EnvelopeSolution(rule, storages, ids, spec.min_storage, trajs)


def solve_decoupled(
    spec: ReservoirSpec,
    scenarios,
    solver: str = "simplex",
    jobs: int = 1,
    keep_trajectories: bool = True,
    options: SimplexOptions | None = None,
    batch_size: int = 4096,
) -> EnvelopeSolution:
    """Solve every scenario independently and take the pointwise maximum.

    Per-scenario solves are side-effect free; with ``jobs > 1`` they run in a
    process pool. The reduction is a pointwise max, so worker count and
    completion order do not affect the result.

    ``solver="chain"`` on a :class:`ScenarioSet` uses the vectorised two-sweep
    solver in batches and keeps storage arrays only.
    """
    if solver == "chain" and isinstance(scenarios, ScenarioSet) and not keep_trajectories:
        return _solve_set_chain(spec, scenarios, 0, scenarios.steps_per_scenario, batch_size)
    scenarios = _as_list(scenarios)
    ids = _ids(scenarios)
    items = list(zip(range(len(scenarios)), ids, scenarios))
    if jobs > 1 and len(items) > 1:
        chunks = [items[i::jobs] for i in range(jobs)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_solve_chunk, [(spec, c, solver, options, keep_trajectories) for c in chunks]))
        storages = np.empty((len(items), scenarios[0].horizon_steps + 1))
        bad, trajs = [], {}
        for (st, b, tr), c in zip(parts, chunks):
            storages[[i for i, _, _ in c]] = st
            bad.extend(b)
            trajs.update(tr)
        trajs = {sid: trajs[sid] for sid in ids if sid in trajs}
    else:
        storages, bad, trajs = _solve_chunk((spec, items, solver, options, keep_trajectories))
    if bad:
        raise InfeasibleError("scenario infeasible", scenarios=[ids[i] for i in sorted(bad)])
    return _envelope(spec, storages, ids, trajs)


def _solve_set_chain(spec, sset: ScenarioSet, start: int, length: int, batch_size: int) -> EnvelopeSolution:
    n = len(sset)
    storages = np.empty((n, length + 1))
    bad = []
    step0 = start % sset.grid.steps_per_year
    for lo_i in range(0, n, batch_size):
        idx = np.arange(lo_i, min(n, lo_i + batch_size))
        flows = sset.flows_batch(idx, start, length)
        lo, hi = net_change_bounds(spec, flows, step0)
        s, ok = least_storage(spec, lo, hi)
        storages[idx] = s
        bad.extend(int(i) for i in idx[~ok])
    ids = [sset.label(i) for i in range(n)]
    if bad:
        raise InfeasibleError("scenario infeasible", scenarios=[ids[i] for i in bad])
    return _envelope(spec, storages, ids, {})


def solve_window(
    spec: ReservoirSpec,
    sset: ScenarioSet,
    start: int,
    length: int,
    solver: str = "simplex",
    options: SimplexOptions | None = None,
    batch_size: int = 4096,
) -> EnvelopeSolution:
    """Envelope over the window ``[start, start + length)`` of every scenario in ``sset``."""
    if solver == "chain":
        return _solve_set_chain(spec, sset, start, length, batch_size)
    scenarios = [sset.scenario(i, start, length) for i in range(len(sset))]
    return solve_decoupled(spec, scenarios, solver=solver, keep_trajectories=False, options=options)


def all_year_tuples(n_years: int, k: int, kind: str) -> list[tuple[int, ...]]:
    """Reference enumeration of scenario year tuples (used for checks)."""
    if _KIND_ALIASES[kind] == MERGING:
        return [tuple(range(i, i + k)) for i in range(n_years - k + 1)]
    return list(itertools.product(range(n_years), repeat=k))
