from __future__ import annotations

import functools
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rulecurve.hydrology import HydroYear, TimeGrid, years_from_records  # noqa: E402
from rulecurve.reservoir import DivertedRiverSpec, ReservoirSpec, load_reservoir_spec  # noqa: E402
from rulecurve.synth import generate_records  # noqa: E402


@functools.lru_cache(maxsize=None)
def synthetic_years(preset: str = "default", n_years: int = 23, seed: int = 1, grid: str = "weekly") -> tuple[HydroYear, ...]:
    g = TimeGrid.parse(grid)
    return tuple(years_from_records(generate_records(n_years, seed, preset), g))


@functools.lru_cache(maxsize=None)
def eupen(grid: str = "weekly") -> ReservoirSpec:
    return load_reservoir_spec(None, TimeGrid.parse(grid))


def toy_spec(grid: TimeGrid, demand=4.0, floor=10.0, ceiling=100.0, release_cap=100.0, diverted=()) -> ReservoirSpec:
    """Reservoir with one tributary ``trib``; volumes are per step."""
    return ReservoirSpec(
        grid=grid,
        min_storage=floor,
        max_storage=ceiling,
        drinking_water=demand,
        environmental_flow_dam=0.0,
        penstock_capacity=release_cap,
        bottom_outlet_capacity=0.0,
        tributaries=("trib",),
        diverted=tuple(diverted),
        name="toy",
    )


def drought_years(grid: TimeGrid, n_years: int, droughts: dict[int, int], base: float = 10.0) -> list[HydroYear]:
    """Constant inflow ``base`` except a dry step (zero inflow) at ``droughts[year]``."""
    P = grid.steps_per_year
    out = []
    for y in range(n_years):
        q = np.full(P, base)
        if y in droughts:
            q[droughts[y]] = 0.0
        out.append(HydroYear(str(2000 + y), grid, {"trib": q}))
    return out


@pytest.fixture(scope="session")
def weekly():
    return TimeGrid("weekly")


@pytest.fixture(scope="session")
def monthly():
    return TimeGrid("monthly")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


__all__ = ["synthetic_years", "eupen", "toy_spec", "drought_years", "DivertedRiverSpec"]
