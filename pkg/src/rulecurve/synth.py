"""Deterministic synthetic discharge records for testing and demos.

Daily discharge per river is a seasonal sinusoid (wet winters) times a
year-level wetness factor times AR(1) lognormal weather noise shared by all
rivers, with occasional drought months in late spring and summer.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .hydrology import InflowRecord, write_discharge_csv

__all__ = ["SynthParams", "PRESETS", "generate_records", "write_synthetic_csv"]


@dataclass(frozen=True)
class SynthParams:
    # mean discharge (m³/s) per river
    rivers: tuple[tuple[str, float], ...] = (("vesdre", 0.95), ("getzbach", 0.30), ("helle", 0.75))
    scale: float = 1.0
    seasonal_amplitude: float = 0.65
    peak_day: int = 15  # day of year with the highest mean flow
    year_sigma: float = 0.25
    noise_sigma: float = 0.45
    noise_ar: float = 0.93
    river_sigma: float = 0.10
    drought_probability: float = 0.12
    drought_factor: float = 0.35
    stationary: bool = False


PRESETS: dict[str, SynthParams] = {
    "default": SynthParams(),
    "generous": SynthParams(scale=1.5),
    "marginal": SynthParams(scale=0.385, drought_probability=0.0, year_sigma=0.35, noise_sigma=0.35),
    "stationary": SynthParams(stationary=True, drought_probability=0.0),
}


def _year_days(year: int) -> list[dt.date]:
    start = dt.date(year, 1, 1)
    n = 366 if (year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)) else 365
    return [start + dt.timedelta(days=i) for i in range(n)]


def generate_records(
    n_years: int, seed: int = 1, preset: str | SynthParams = "default", first_year: int = 1992
) -> list[InflowRecord]:
    """Daily records for ``n_years`` calendar years starting at ``first_year``."""
    params = PRESETS[preset] if isinstance(preset, str) else preset
    if n_years < 1:
        raise ValueError("n_years must be >= 1")
    rng = np.random.default_rng(seed)
    records: list[InflowRecord] = []
    state = 0.0
    template = None
    for y in range(n_years):
        days = _year_days(first_year + y)
        if params.stationary:
            # identical years need identical nominal days; Feb 29 is optional in the format
            days = [d for d in days if not (d.month == 2 and d.day == 29)]
        if params.stationary and template is not None:
            shape = template
        else:
            doy = np.array([d.timetuple().tm_yday for d in days], dtype=float)
            season = 1.0 + params.seasonal_amplitude * np.cos(2 * math.pi * (doy - params.peak_day) / 365.25)
            wet = math.exp(rng.normal(0.0, params.year_sigma) - params.year_sigma**2 / 2)
            eps = rng.normal(0.0, params.noise_sigma * math.sqrt(1 - params.noise_ar**2), len(days))
            logs = np.empty(len(days))
            for i, e in enumerate(eps):
                state = params.noise_ar * state + e
                logs[i] = state
            noise = np.exp(logs - params.noise_sigma**2 / 2)
            months = np.array([d.month for d in days])
            drought = np.ones(len(days))
            for m in range(4, 10):
                if rng.random() < params.drought_probability:
                    drought[months == m] = params.drought_factor
            shape = season * wet * noise * drought
            if params.stationary:
                template = shape
        for river, mean in params.rivers:
            jitter = 1.0 if params.stationary else np.exp(rng.normal(0.0, params.river_sigma, len(days)))
            q = mean * params.scale * shape * jitter
            records.extend(InflowRecord(river, d, float(v)) for d, v in zip(days, q))
    records.sort(key=lambda r: (r.river, r.date))
    return records


def write_synthetic_csv(
    path: str | Path,
    n_years: int,
    seed: int = 1,
    preset: str | SynthParams = "default",
    first_year: int = 1992,
    **overrides,
) -> None:
    params = PRESETS[preset] if isinstance(preset, str) else preset
    if overrides:
        params = replace(params, **overrides)
    write_discharge_csv(generate_records(n_years, seed, params, first_year), path, decimals=6)
