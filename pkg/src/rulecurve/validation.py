"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from .exceptions import DataError
from .hydrology import HydroYear, TimeGrid
from .reservoir import SOLVERS, ReservoirSpec


def check_years(years, min_years: int = 1) -> tuple[list[HydroYear], TimeGrid]:
    """Return the years as a list plus their common grid."""
    if isinstance(years, HydroYear):
        years = [years]
    try:
        years = list(years)
    except TypeError:
        raise DataError(f"expected a sequence of HydroYear, got {type(years).__name__}") from None
    if len(years) < min_years:
        raise DataError(f"need at least {min_years} complete year(s), got {len(years)}")
    for y in years:
        if not isinstance(y, HydroYear):
            raise DataError(f"expected HydroYear, got {type(y).__name__}")
    grid = years[0].grid
    rivers = set(years[0].rivers)
    for y in years[1:]:
        grid.check_same(y.grid)
        if set(y.rivers) != rivers:
            raise DataError(f"year {y.label} has rivers {sorted(y.rivers)}, expected {sorted(rivers)}")
    return years, grid


def check_level(level) -> float:
    try:
        level = float(level)
    except (TypeError, ValueError):
        raise ValueError(f"confidence level must be a number, got {level!r}") from None
    if not 0 < level < 1:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    return level


def check_levels(levels: Sequence) -> tuple[float, ...]:
    out = tuple(sorted({check_level(v) for v in levels}))
    if not out:
        raise ValueError("at least one confidence level is required")
    return out


def check_solver(solver: str) -> str:
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    return solver


def check_jobs(jobs: int | None) -> int:
    """``None`` or ``0`` mean every available core."""
    if jobs is None or jobs == 0:
        return os.cpu_count() or 1
    jobs = int(jobs)
    if jobs < 0:
        raise ValueError(f"jobs must be >= 0, got {jobs}")
    return jobs


def check_spec_covers(spec: ReservoirSpec, grid: TimeGrid, rivers: Sequence[str]) -> None:
    """The reservoir must sit on the data grid and draw only on rivers present in the data."""
    spec.grid.check_same(grid)
    missing = set(spec.rivers) - set(rivers)
    if missing:
        raise DataError(f"reservoir needs rivers missing from the data: {sorted(missing)}")


def check_steps(steps, steps_per_year: int) -> np.ndarray:
    """Integer step indices; values beyond one year wrap around."""
    arr = np.asarray(steps)
    if arr.dtype.kind not in "iu":
        if arr.dtype.kind == "f" and np.all(np.isfinite(arr)) and np.all(arr == np.round(arr)):
            arr = arr.astype(np.int64)
        else:
            raise ValueError("steps must be integers")
    return np.mod(arr, steps_per_year)
