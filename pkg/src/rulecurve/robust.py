"""Interval-uncertainty model: inflows pinned at a confidence-interval lower bound.

For every step of the year and every river the historical volumes give a
Student-t confidence interval of the mean. The worst case inside that box is
its lower corner, so the robust curve is the deterministic least-storage
trajectory on that single synthetic scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .exceptions import DataError, InfeasibleError
from .hydrology import HydroYear, stack_years, volumes_to_daily, write_discharge_csv
from .lp import SimplexOptions
from .reservoir import ReservoirSpec, Scenario, StorageTrajectory, solve_scenario

__all__ = [
    "ConfidenceSpec",
    "WorstCaseScenario",
    "betainc",
    "t_sf",
    "t_quantile",
    "ci_lower_bounds",
    "worst_case_profile",
    "worst_case_scenario",
    "solve_robust",
    "export_worst_case",
]


@dataclass(frozen=True)
class ConfidenceSpec:
    level: float = 0.95
    one_sided: bool = False
    method: str = "per-step-t"

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError(f"confidence level must lie in (0, 1), got {self.level}")
        if self.method != "per-step-t":
            raise ValueError(f"unsupported interval method {self.method!r}")

    @property
    def quantile_probability(self) -> float:
        return self.level if self.one_sided else 1 - (1 - self.level) / 2


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("betainc needs 0 <= x <= 1")
    if x == 0.0 or x == 1.0:
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _t_pdf(t: float, dof: float) -> float:
    log_c = math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2) - 0.5 * math.log(dof * math.pi)
    return math.exp(log_c - (dof + 1) / 2 * math.log1p(t * t / dof))


def t_sf(t: float, dof: float) -> float:
    """Upper tail P(T > t) of Student's t."""
    tail = 0.5 * betainc(dof / 2, 0.5, dof / (dof + t * t))
    return tail if t >= 0 else 1.0 - tail


def _check_dof(dof) -> float:
    try:
        dof = float(dof)
    except (TypeError, ValueError):
        raise ValueError(f"degrees of freedom must be a number, got {dof!r}") from None
    if not dof >= 1 or math.isinf(dof):
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    return dof


def t_quantile(p: float, dof: float) -> float:
    """p-quantile of Student's t with ``dof`` degrees of freedom.

    Newton iteration on the upper tail, seeded by the normal quantile and
    kept inside a bisection bracket.
    """
    if not 0 < p < 1:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    dof = _check_dof(dof)
    if p == 0.5:
        return 0.0
    q = min(p, 1 - p)
    lo, hi = 0.0, max(1.0, NormalDist().inv_cdf(1 - q))
    while t_sf(hi, dof) > q:
        lo, hi = hi, hi * 2
    t = min(max(NormalDist().inv_cdf(1 - q), lo), hi)
    for _ in range(200):
        f = t_sf(t, dof) - q
        if f > 0:
            lo = t
        else:
            hi = t
        step = f / _t_pdf(t, dof)
        nxt = t + step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - t) <= 1e-14 * (1 + abs(t)):
            t = nxt
            break
        t = nxt
    return t if p > 0.5 else -t


def ci_lower_bounds(
    years: Sequence[HydroYear], river: str, level: float, one_sided: bool = False
) -> np.ndarray:
    """Per-step lower end of the t confidence interval of mean inflow, clamped at 0."""
    if len(years) < 2:
        raise DataError("confidence intervals need at least two years")
    _, rivers, stack = stack_years(years)
    if river not in stack:
        raise DataError(f"river {river!r} absent from data (have {list(rivers)})")
    conf = ConfidenceSpec(level, one_sided)
    x = stack[river]
    n = x.shape[0]
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    tq = t_quantile(conf.quantile_probability, n - 1)
    return np.maximum(0.0, mean - tq * sd / math.sqrt(n))


def worst_case_profile(years: Sequence[HydroYear], conf: ConfidenceSpec) -> dict[str, np.ndarray]:
    _, rivers, _ = stack_years(years)
    return {r: ci_lower_bounds(years, r, conf.level, conf.one_sided) for r in rivers}


@dataclass(frozen=True, eq=False)
class WorstCaseScenario:
    underlying: Scenario
    level: float
    sample_size: int


def worst_case_scenario(
    years: Sequence[HydroYear], conf: ConfidenceSpec, horizon_years: int = 2
) -> WorstCaseScenario:
    """Lower-bound profile repeated ``horizon_years`` times."""
    if horizon_years < 1:
        raise ValueError("horizon_years must be >= 1")
    profile = worst_case_profile(years, conf)
    flows = {r: np.tile(v, horizon_years) for r, v in profile.items()}
    label = f"ci-lower@{conf.level:g}"
    return WorstCaseScenario(Scenario(years[0].grid, flows, label), conf.level, len(years))


def solve_robust(
    spec: ReservoirSpec,
    years: Sequence[HydroYear],
    conf: ConfidenceSpec,
    horizon_years: int = 2,
    solver: str = "simplex",
    options: SimplexOptions | None = None,
) -> StorageTrajectory:
    """Least storage trajectory against the worst case of the confidence box.

    Raises :class:`InfeasibleError` carrying the level when even a full
    reservoir cannot carry the demand through the lower-bound inflows.
    """
    wc = worst_case_scenario(years, conf, horizon_years)
    try:
        return solve_scenario(spec, wc.underlying, solver, options)
    except InfeasibleError as exc:
        raise InfeasibleError("robust model", level=conf.level) from exc


def export_worst_case(wc: WorstCaseScenario, path: str | Path) -> None:
    """Write the worst-case inflows in the ingestion CSV format."""
    sc = wc.underlying
    write_discharge_csv(volumes_to_daily(sc.flows, sc.grid), path, decimals=9)
