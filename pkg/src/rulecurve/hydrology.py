"""Discharge ingestion and aggregation onto the optimisation time grid.

Everything downstream works in m³ per time step. Discharges in m³/s are
converted exactly once, here.

Years are nominal 365-day years starting on the first day of
``TimeGrid.start_month``. February 29 is folded into February 28, and on a
weekly grid the 8 days left after week 51 all belong to week 52, so every
year has the same number of steps.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import DataError, GridMismatchError

__all__ = [
    "SECONDS_PER_DAY",
    "TimeGrid",
    "InflowRecord",
    "HydroYear",
    "aggregate_to_grid",
    "load_discharge_csv",
    "read_discharge_csv",
    "write_discharge_csv",
    "volumes_to_daily",
    "stack_years",
]

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86_400
CSV_HEADER = ("river", "date", "discharge_m3s")

# nominal (non-leap) month lengths, January first
MONTH_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
_KINDS = ("daily", "weekly", "monthly", "custom")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform annual time grid.

    ``kind`` is ``daily`` (365 steps), ``weekly`` (52 steps, the last one 8
    days long) or ``monthly`` (12 calendar months). ``custom`` grids with an
    arbitrary number of steps exist for toy problems; they have no month
    mapping.
    """

    kind: str = "weekly"
    start_month: int = 1
    custom_steps: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}; expected one of {_KINDS}")
        if not 1 <= self.start_month <= 12:
            raise ValueError("start_month must be in 1..12")
        if self.kind == "custom":
            if self.custom_steps is None or self.custom_steps < 1:
                raise ValueError("custom grids need custom_steps >= 1")
        elif self.custom_steps is not None:
            raise ValueError("custom_steps only applies to custom grids")

    @classmethod
    def parse(cls, name: str, start_month: int = 1) -> TimeGrid:
        name = name.strip().lower()
        aliases = {"day": "daily", "d": "daily", "week": "weekly", "w": "weekly", "month": "monthly", "m": "monthly"}
        return cls(aliases.get(name, name), start_month)

    @classmethod
    def toy(cls, steps_per_year: int) -> TimeGrid:
        return cls("custom", 1, steps_per_year)

    @property
    def steps_per_year(self) -> int:
        return {"daily": 365, "weekly": 52, "monthly": 12}.get(self.kind, self.custom_steps or 0)

    @property
    def step_length(self) -> int | str:
        """Days per step, or ``"month"`` for calendar-month steps."""
        return {"daily": 1, "weekly": 7, "monthly": "month"}.get(self.kind, 1)

    @cached_property
    def month_order(self) -> tuple[int, ...]:
        """Calendar months (1..12) in year order."""
        return tuple((self.start_month - 1 + i) % 12 + 1 for i in range(12))

    @cached_property
    def day_to_step(self) -> np.ndarray:
        """Step index of each of the 365 nominal days of the year."""
        days = np.arange(365)
        if self.kind == "daily":
            out = days
        elif self.kind == "weekly":
            out = np.minimum(days // 7, 51)
        elif self.kind == "monthly":
            lengths = [MONTH_DAYS[m - 1] for m in self.month_order]
            out = np.repeat(np.arange(12), lengths)
        else:
            n = self.custom_steps
            out = (days * n) // 365
        out = np.asarray(out, dtype=np.intp)
        out.setflags(write=False)
        return out

    @cached_property
    def step_days(self) -> np.ndarray:
        """Number of nominal days in each step (sums to 365)."""
        out = np.bincount(self.day_to_step, minlength=self.steps_per_year).astype(float)
        out.setflags(write=False)
        return out

    @cached_property
    def step_month(self) -> np.ndarray:
        """Calendar month (1..12) of each step: the month holding the step's midpoint day."""
        if self.kind == "custom":
            raise GridMismatchError("custom grids have no month mapping")
        day_month = np.repeat(self.month_order, [MONTH_DAYS[m - 1] for m in self.month_order])
        starts = np.concatenate([[0], np.cumsum(self.step_days)[:-1]])
        mid = np.floor(starts + (self.step_days - 1) / 2).astype(int)
        out = np.asarray(day_month[mid], dtype=int)
        out.setflags(write=False)
        return out

    def year_start(self, day: dt.date) -> dt.date:
        """First day of the (possibly hydrological) year containing ``day``."""
        year = day.year if day.month >= self.start_month else day.year - 1
        return dt.date(year, self.start_month, 1)

    def nominal_day(self, day: dt.date) -> int:
        """Index 0..364 of ``day`` within its nominal year; Feb 29 maps onto Feb 28."""
        offset = 0
        for m in self.month_order:
            if m == day.month:
                return offset + min(day.day, MONTH_DAYS[m - 1]) - 1
            offset += MONTH_DAYS[m - 1]
        raise AssertionError("unreachable")

    def year_label(self, start: dt.date) -> str:
        return str(start.year) if self.start_month == 1 else f"{start.year}-{start.year + 1}"

    def check_same(self, other: TimeGrid) -> None:
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")


@dataclass(frozen=True)
class InflowRecord:
    river: str
    date: dt.date
    discharge: float  # m³/s

    def __post_init__(self):
        if not self.discharge >= 0:
            raise DataError(f"negative discharge {self.discharge} for {self.river} on {self.date}")


@dataclass(frozen=True, eq=False)
class HydroYear:
    """One year of per-river inflow volumes (m³ per step) on a grid."""

    label: str
    grid: TimeGrid
    flows: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        P = self.grid.steps_per_year
        clean = {}
        for river, vol in self.flows.items():
            arr = np.array(vol, dtype=float)
            if arr.shape != (P,):
                raise DataError(f"year {self.label}, river {river}: expected {P} steps, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise DataError(f"year {self.label}, river {river}: volumes must be finite and nonnegative")
            arr.setflags(write=False)
            clean[river] = arr
        object.__setattr__(self, "flows", clean)

    @property
    def rivers(self) -> tuple[str, ...]:
        return tuple(sorted(self.flows))

    def total(self) -> np.ndarray:
        return sum((self.flows[r] for r in self.rivers), np.zeros(self.grid.steps_per_year))


def aggregate_to_grid(daily: Iterable[tuple[dt.date, float]], grid: TimeGrid) -> np.ndarray:
    """Sum one year of daily discharges (m³/s) into per-step volumes (m³).

    The year is the one containing the earliest date. Every nominal day must be
    present; February 29 is optional and joins February 28.
    """
    pairs = sorted(daily, key=lambda p: p[0])
    if not pairs:
        raise DataError("empty daily series")
    start = grid.year_start(pairs[0][0])
    end = dt.date(start.year + 1, start.month, 1)
    volumes = np.zeros(365)
    seen = np.zeros(365, dtype=bool)
    for day, q in pairs:
        if day >= end:
            raise DataError(f"date {day} falls outside the year starting {start}")
        if not q >= 0:
            raise DataError(f"negative discharge {q} on {day}")
        idx = grid.nominal_day(day)
        is_leap_day = day.month == 2 and day.day == 29
        if seen[idx] and not is_leap_day:
            raise DataError(f"duplicate date {day}")
        seen[idx] = True
        volumes[idx] += float(q) * SECONDS_PER_DAY
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise DataError(f"gap in daily coverage: nominal day {missing} of year starting {start} missing")
    return np.bincount(grid.day_to_step, weights=volumes, minlength=grid.steps_per_year)


def read_discharge_csv(path: str | Path, strict: bool = True) -> list[InflowRecord]:
    """Parse the ingestion CSV (``river,date,discharge_m3s``).

    With ``strict=False`` bad rows are logged with their line number and
    skipped instead of raising :class:`DataError`.
    """
    records: list[InflowRecord] = []
    seen: set[tuple[str, dt.date]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return records
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"expected header {','.join(CSV_HEADER)}, got {','.join(header)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != 3:
                    raise DataError(f"expected 3 fields, got {len(row)}", line=lineno)
                river = row[0].strip()
                if not river:
                    raise DataError("empty river identifier", line=lineno)
                try:
                    day = dt.date.fromisoformat(row[1].strip())
                    q = float(row[2])
                except ValueError as exc:
                    raise DataError(f"malformed row: {exc}", line=lineno) from None
                if not np.isfinite(q):
                    raise DataError("non-finite discharge", line=lineno)
                if q < 0:
                    raise DataError(f"negative discharge {q}", line=lineno)
                if (river, day) in seen:
                    raise DataError(f"duplicate record for ({river}, {day})", line=lineno)
            except DataError as exc:
                if strict:
                    raise
                log.warning("rejected row: %s", exc)
                continue
            seen.add((river, day))
            records.append(InflowRecord(river, day, q))
    return records


def load_discharge_csv(path: str | Path, grid: TimeGrid, strict: bool = True) -> list[HydroYear]:
    """Load a discharge CSV and return one :class:`HydroYear` per complete year.

    A year is complete when every river in the file covers all of its
    nominal days. Incomplete years are logged and dropped.
    """
    records = read_discharge_csv(path, strict=strict)
    return years_from_records(records, grid)


def years_from_records(records: Sequence[InflowRecord], grid: TimeGrid) -> list[HydroYear]:
    rivers = sorted({r.river for r in records})
    by_year: dict[dt.date, dict[str, list[tuple[dt.date, float]]]] = defaultdict(lambda: defaultdict(list))
    for rec in records:
        by_year[grid.year_start(rec.date)][rec.river].append((rec.date, rec.discharge))
    years = []
    for start in sorted(by_year):
        series = by_year[start]
        label = grid.year_label(start)
        if set(series) != set(rivers):
            log.warning("dropping incomplete year %s: rivers %s missing", label, sorted(set(rivers) - set(series)))
            continue
        try:
            flows = {river: aggregate_to_grid(series[river], grid) for river in rivers}
        except DataError as exc:
            if "gap" not in str(exc):
                raise
            log.warning("dropping incomplete year %s: %s", label, exc)
            continue
        years.append(HydroYear(label, grid, flows))
    if not years:
        raise DataError("no complete year found")
    return years


def volumes_to_daily(
    flows: Mapping[str, np.ndarray], grid: TimeGrid, first_year: int = 2001
) -> list[InflowRecord]:
    """Spread per-step volumes uniformly over their days as m³/s records.

    The result round-trips through :func:`load_discharge_csv` on the same grid.
    Multi-year series are laid out on consecutive years from ``first_year``;
    leap days are skipped.
    """
    P = grid.steps_per_year
    out = []
    for river in sorted(flows):
        vol = np.asarray(flows[river], dtype=float)
        if vol.size % P:
            raise DataError(f"series for {river} is not a whole number of years")
        for y in range(vol.size // P):
            start = dt.date(first_year + y, grid.start_month, 1)
            rate = vol[y * P:(y + 1) * P] / (grid.step_days * SECONDS_PER_DAY)
            day = start
            for k in range(365):
                if day.month == 2 and day.day == 29:
                    day += dt.timedelta(days=1)
                out.append(InflowRecord(river, day, float(rate[grid.day_to_step[k]])))
                day += dt.timedelta(days=1)
    return out


def write_discharge_csv(records: Iterable[InflowRecord], path: str | Path, decimals: int = 6) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow((rec.river, rec.date.isoformat(), f"{rec.discharge:.{decimals}f}"))


def stack_years(years: Sequence[HydroYear]) -> tuple[TimeGrid, tuple[str, ...], dict[str, np.ndarray]]:
    """Validate a year list and stack it into per-river ``(n_years, steps)`` arrays."""
    if not years:
        raise DataError("no years given")
    grid = years[0].grid
    rivers = years[0].rivers
    for y in years[1:]:
        grid.check_same(y.grid)
        if y.rivers != rivers:
            raise DataError(f"year {y.label} has rivers {y.rivers}, expected {rivers}")
    return grid, rivers, {r: np.stack([y.flows[r] for y in years]) for r in rivers}
