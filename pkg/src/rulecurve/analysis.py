"""Post-optimisation analytics.

Period statistics explain which hydrological conditions shape a stochastic
rule curve, confidence matching relates a stochastic curve to the robust
family, and curve comparison lines several curves up step by step.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import DataError, GridMismatchError
from .hydrology import TimeGrid
from .mpc import RuleCurve
from .reservoir import Scenario
from .stochastic import EnvelopeSolution, ScenarioSet, identify_support

__all__ = [
    "PeriodDefinition",
    "TABLE_PERIODS",
    "DEFAULT_LEVELS",
    "period_average",
    "period_averages",
    "SupportReport",
    "support_statistics",
    "confidence_distances",
    "match_confidence_level",
    "CurveComparison",
    "compare_curves",
    "format_table",
]

WET_MONTHS = frozenset({10, 11, 12, 1, 2, 3, 4})
DRY_MONTHS = frozenset({5, 6, 7, 8, 9})
DEFAULT_LEVELS = (0.95, 0.965, 0.975, 0.98, 0.985, 0.99)


@dataclass(frozen=True)
class PeriodDefinition:
    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind not in ("full_year", "wet_season", "dry_season", "driest_months"):
            raise ValueError(f"unknown period kind {self.kind!r}")
        if self.kind == "driest_months":
            if self.k not in (1, 3, 6):
                raise ValueError(f"driest-months window must be 1, 3 or 6 months, got {self.k}")
        elif self.k is not None:
            raise ValueError("only driest_months takes k")

    @classmethod
    def full_year(cls) -> PeriodDefinition:
        return cls("full_year")

    @classmethod
    def wet_season(cls) -> PeriodDefinition:
        return cls("wet_season")

    @classmethod
    def dry_season(cls) -> PeriodDefinition:
        return cls("dry_season")

    @classmethod
    def driest_months(cls, k: int) -> PeriodDefinition:
        return cls("driest_months", k)

    @property
    def label(self) -> str:
        if self.kind == "driest_months":
            return {1: "Driest month", 3: "Driest three months", 6: "Driest six months"}[self.k]
        return {"full_year": "Year", "wet_season": "Wet season", "dry_season": "Dry season"}[self.kind]

    @property
    def key(self) -> str:
        return f"driest_{self.k}m" if self.kind == "driest_months" else self.kind


TABLE_PERIODS = (
    PeriodDefinition.full_year(),
    PeriodDefinition.wet_season(),
    PeriodDefinition.dry_season(),
    PeriodDefinition.driest_months(6),
    PeriodDefinition.driest_months(3),
    PeriodDefinition.driest_months(1),
)


def _step_months(grid: TimeGrid, start_step: int, length: int) -> np.ndarray:
    P = grid.steps_per_year
    return grid.step_month[(start_step + np.arange(length)) % P]


def period_averages(
    flows: Mapping[str, np.ndarray], grid: TimeGrid, period: PeriodDefinition, start_step: int = 0
) -> np.ndarray:
    """Average discharge (10⁶ m³/day) for a batch of scenarios.

    ``flows`` maps each river to an ``(S, T)`` array of step volumes in m³.
    Months are runs of consecutive steps whose midpoints share a calendar
    month, so a scenario that starts mid-month has a short first block.
    """
    total = sum(np.atleast_2d(np.asarray(v, dtype=float)) for v in flows.values())
    S, T = total.shape
    P = grid.steps_per_year
    days = grid.step_days[(start_step + np.arange(T)) % P]
    if period.kind == "full_year":
        return total.sum(axis=1) / days.sum() / 1e6
    months = _step_months(grid, start_step, T)
    if period.kind in ("wet_season", "dry_season"):
        keep = np.isin(months, list(WET_MONTHS if period.kind == "wet_season" else DRY_MONTHS))
        if not keep.any():
            raise DataError(f"scenario has no step in the {period.label.lower()}")
        return total[:, keep].sum(axis=1) / days[keep].sum() / 1e6
    starts = np.flatnonzero(np.r_[True, months[1:] != months[:-1]])
    k = period.k
    if starts.size < k:
        raise DataError(f"scenario covers {starts.size} months, fewer than the {k}-month window")
    vol = np.add.reduceat(total, starts, axis=1)
    ndays = np.add.reduceat(days, starts)
    cv = np.concatenate([np.zeros((S, 1)), np.cumsum(vol, axis=1)], axis=1)
    cd = np.concatenate([[0.0], np.cumsum(ndays)])
    avg = (cv[:, k:] - cv[:, :-k]) / (cd[k:] - cd[:-k])
    return avg.min(axis=1) / 1e6


def period_average(scenario: Scenario, period: PeriodDefinition) -> float:
    """Average total inflow over ``period`` in 10⁶ m³/day."""
    flows = {r: v[None, :] for r, v in scenario.flows.items()}
    return float(period_averages(flows, scenario.grid, period, scenario.start_step)[0])


def _rank_desc(values: np.ndarray, labels: Sequence[str]) -> np.ndarray:
    order = sorted(range(len(values)), key=lambda i: (-values[i], labels[i]))
    ranks = np.empty(len(values), dtype=int)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


@dataclass
class SupportReport:
    ids: list[str]
    is_support: np.ndarray
    periods: tuple[PeriodDefinition, ...]
    ranks: dict[str, np.ndarray]
    averages: dict[str, np.ndarray]
    summary: dict[str, dict[str, float]] = field(init=False)

    COLUMNS = ("support_rank", "nonsupport_rank", "support_discharge", "nonsupport_discharge")

    def __post_init__(self):
        self.summary = {}
        sup = self.is_support
        for p in self.periods:
            r, a = self.ranks[p.key], self.averages[p.key]
            self.summary[p.key] = {
                "support_rank": _mean(r[sup]),
                "nonsupport_rank": _mean(r[~sup]),
                "support_discharge": _mean(a[sup]),
                "nonsupport_discharge": _mean(a[~sup]),
            }

    @property
    def n_support(self) -> int:
        return int(self.is_support.sum())

    def rows(self) -> list[dict[str, object]]:
        out = []
        for i, sid in enumerate(self.ids):
            row: dict[str, object] = {"id": sid, "is_support": bool(self.is_support[i])}
            for p in self.periods:
                row[f"avg_{p.key}"] = float(self.averages[p.key][i])
                row[f"rank_{p.key}"] = int(self.ranks[p.key][i])
            out.append(row)
        return out

    def summary_rows(self) -> list[list[object]]:
        return [[p.label] + [self.summary[p.key][c] for c in self.COLUMNS] for p in self.periods]

    def write_csv(self, path: str | Path) -> None:
        rows = self.rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

    def write_summary_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["period", *self.COLUMNS])
            for row in self.summary_rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])

    def to_text(self) -> str:
        head = ["Period", "Rank (support)", "Rank (other)", "Discharge (support)", "Discharge (other)"]
        body = [[r[0]] + [f"{v:.3f}" for v in r[1:]] for r in self.summary_rows()]
        note = f"{self.n_support} support scenarios out of {len(self.ids)}; discharge in 10^6 m3/day; rank 1 = wettest"
        return format_table(head, body) + "\n" + note + "\n"


def _mean(x: np.ndarray) -> float:
    return float(x.mean()) if x.size else math.nan


def support_statistics(
    sol: EnvelopeSolution,
    scenarios,
    periods: Sequence[PeriodDefinition] = TABLE_PERIODS,
    tolerance: float = 1e-6,
    ignore_floor: bool = True,
    batch_size: int = 4096,
) -> SupportReport:
    """Rank scenarios per period and compare the envelope-defining ones to the rest.

    ``scenarios`` is the list (or :class:`ScenarioSet`) the envelope was
    computed on, in the same order.
    """
    n = len(scenarios)
    if n != len(sol.ids):
        raise DataError(f"envelope covers {len(sol.ids)} scenarios but {n} were given")
    periods = tuple(periods)
    averages = {p.key: np.empty(n) for p in periods}
    if isinstance(scenarios, ScenarioSet):
        grid = scenarios.grid
        for lo in range(0, n, batch_size):
            idx = np.arange(lo, min(n, lo + batch_size))
            flows = scenarios.flows_batch(idx)
            for p in periods:
                averages[p.key][idx] = period_averages(flows, grid, p)
    else:
        for i, sc in enumerate(scenarios):
            for p in periods:
                averages[p.key][i] = period_average(sc, p)
    support = set(identify_support(sol, tolerance, ignore_floor))
    is_support = np.array([sid in support for sid in sol.ids])
    ranks = {p.key: _rank_desc(averages[p.key], sol.ids) for p in periods}
    return SupportReport(list(sol.ids), is_support, periods, ranks, averages)


def _check_grids(curves: Sequence[RuleCurve]) -> TimeGrid:
    grid = curves[0].grid
    for c in curves[1:]:
        if c.grid.steps_per_year != grid.steps_per_year or (
            c.grid.kind != grid.kind and "custom" not in (c.grid.kind, grid.kind)
        ):
            raise GridMismatchError(
                f"grid mismatch: {grid.kind} ({grid.steps_per_year} steps) vs {c.grid.kind} ({c.grid.steps_per_year} steps)"
            )
    return grid


def confidence_distances(stochastic_curve: RuleCurve, robust_curves: Mapping[float, RuleCurve]) -> dict[float, float]:
    """L¹ distance from the stochastic curve to each robust curve, by level."""
    if not robust_curves:
        raise ValueError("at least one robust curve is required")
    _check_grids([stochastic_curve, *robust_curves.values()])
    return {
        float(lvl): float(np.abs(stochastic_curve.values - c.values).sum())
        for lvl, c in sorted(robust_curves.items())
    }


def match_confidence_level(stochastic_curve: RuleCurve, robust_curves: Mapping[float, RuleCurve]) -> float:
    """Level of the robust curve nearest to the stochastic one; ties go to the lower level."""
    dist = confidence_distances(stochastic_curve, robust_curves)
    scale = max(1.0, float(np.abs(stochastic_curve.values).sum()))
    best = None
    for lvl, d in dist.items():
        if best is None or d < dist[best] - 1e-12 * scale:
            best = lvl
    return best


@dataclass
class CurveComparison:
    labels: list[str]
    values: np.ndarray  # (n_curves, P)
    pairs: dict[tuple[str, str], dict[str, object]]

    def verdict(self, reference: str) -> dict[str, str]:
        """How ``reference`` fares against every other curve.

        A reference that never falls below a model is conservative relative
        to it; one that does is unsafe at those steps.
        """
        if reference not in self.labels:
            raise KeyError(reference)
        P = self.values.shape[1]
        out = {}
        for lab in self.labels:
            if lab == reference:
                continue
            pair = self.pairs[(lab, reference)]
            n = int(pair["steps_a_above_b"])
            if n == 0:
                margin = -float(pair["min_gap"])
                out[lab] = f"conservative: reference is never below, and above by up to {margin:.6g} m3"
            else:
                out[lab] = f"unsafe: reference is below at {n} of {P} steps, by up to {float(pair['max_gap']):.6g} m3"
        return out

    def below(self, reference: str) -> dict[str, list[int]]:
        """Steps where each curve is strictly below ``reference``."""
        return {b: list(self.pairs[(reference, b)]["steps"]) for b in self.labels if b != reference}

    def write_plot_data(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", *self.labels])
            for t in range(self.values.shape[1]):
                w.writerow([t, *(repr(float(v)) for v in self.values[:, t])])

    def write_pairs_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "b", "max_gap_m3", "min_gap_m3", "steps_a_above_b"])
            for (a, b), p in self.pairs.items():
                w.writerow([a, b, repr(float(p["max_gap"])), repr(float(p["min_gap"])), p["steps_a_above_b"]])

    def to_text(self) -> str:
        body = [
            [a, b, f"{float(p['max_gap']):.1f}", f"{float(p['min_gap']):.1f}", str(p["steps_a_above_b"])]
            for (a, b), p in self.pairs.items()
        ]
        return format_table(["A", "B", "max(A-B) m3", "min(A-B) m3", "steps A>B"], body) + "\n"


def compare_curves(curves: Mapping[str, RuleCurve], atol: float | None = None) -> CurveComparison:
    """Side-by-side values plus, for every ordered pair, gap extremes and the steps where A > B.

    Gaps up to ``atol`` count as equal; the default is 1e-9 of the largest
    value so solver round-off does not show up as a difference.
    """
    if not curves:
        raise ValueError("nothing to compare")
    labels = list(curves)
    _check_grids([curves[k] for k in labels])
    values = np.stack([curves[k].values for k in labels])
    if atol is None:
        atol = 1e-9 * float(np.abs(values).max(initial=0.0))
    pairs = {}
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            if i == j:
                continue
            gap = values[i] - values[j]
            steps = [int(t) for t in np.flatnonzero(gap > atol)]
            pairs[(a, b)] = {
                "max_gap": float(gap.max()),
                "min_gap": float(gap.min()),
                "steps_a_above_b": len(steps),
                "steps": steps,
            }
    return CurveComparison(labels, values, pairs)


def format_table(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Plain-text table: first column left-aligned, the rest right-aligned."""
    cells = [list(map(str, header))] + [list(map(str, r)) for r in rows]
    widths = [max(len(r[c]) for r in cells) for c in range(len(header))]
    buf = io.StringIO()
    for n, r in enumerate(cells):
        parts = [r[0].ljust(widths[0])] + [r[c].rjust(widths[c]) for c in range(1, len(r))]
        buf.write("  ".join(parts).rstrip() + "\n")
        if n == 0:
            buf.write("  ".join("-" * w for w in widths) + "\n")
    return buf.getvalue().rstrip("\n")
