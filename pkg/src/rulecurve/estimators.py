"""scikit-learn style wrappers: ``fit`` on historical years, ``predict`` rule storage per step."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .hydrology import TimeGrid
from .mpc import MpcConfig, RobustModel, RuleCurve, StochasticModel, direct_rule_curve, run_mpc
from .reservoir import ReservoirSpec, load_reservoir_spec
from .robust import ConfidenceSpec
from .validation import check_jobs, check_level, check_solver, check_spec_covers, check_steps, check_years

__all__ = ["StochasticRuleCurve", "RobustRuleCurve"]


class _RuleCurveEstimator(BaseEstimator):
    def _spec_for(self, grid: TimeGrid) -> ReservoirSpec:
        if isinstance(self.reservoir, ReservoirSpec):
            return self.reservoir
        return load_reservoir_spec(Path(self.reservoir) if self.reservoir else None, grid)

    def _model(self):
        raise NotImplementedError

    def fit(self, X, y=None):
        """Compute the rule curve from ``X``, a sequence of :class:`HydroYear`."""
        model = self._model()
        years, grid = check_years(X, min_years=2 if isinstance(model, RobustModel) else 1)
        spec = self._spec_for(grid)
        check_spec_covers(spec, grid, years[0].rivers)
        solver = check_solver(self.solver)
        jobs = check_jobs(self.n_jobs)
        if self.mpc:
            cfg = MpcConfig(model, self.window_years, self.scenario_years)
            curve = run_mpc(spec, years, cfg, solver=solver, jobs=jobs)
        else:
            curve = direct_rule_curve(spec, years, model, self.window_years, solver=solver, jobs=jobs)
        self.rule_curve_ = curve
        self.spec_ = spec
        self.grid_ = grid
        self.n_years_ = len(years)
        self.n_scenarios_ = int(curve.metadata["n_scenarios"])
        return self

    def predict(self, X) -> np.ndarray:
        """Rule storage (m³) at step indices ``X``; indices wrap around the year."""
        check_is_fitted(self, "rule_curve_")
        return self.rule_curve_.values[check_steps(X, self.grid_.steps_per_year)]

    @property
    def curve(self) -> RuleCurve:
        check_is_fitted(self, "rule_curve_")
        return self.rule_curve_


class StochasticRuleCurve(_RuleCurveEstimator):
    """Upper envelope over scenarios built from historical years.

    Parameters
    ----------
    generation : {"merge", "mix"}
        Consecutive-year runs or every tuple of years.
    mpc : bool
        Slide a ``window_years`` guarantee window across the year (on
        ``scenario_years``-long scenarios) instead of one direct solve.
    solver : {"simplex", "highs", "chain"}
        ``chain`` is the exact two-sweep solver and the only practical one
        for mixing on weekly grids.
    """

    def __init__(
        self,
        reservoir=None,
        generation="merge",
        mpc=True,
        window_years=2,
        scenario_years=3,
        solver="simplex",
        n_jobs=1,
    ):
        self.reservoir = reservoir
        self.generation = generation
        self.mpc = mpc
        self.window_years = window_years
        self.scenario_years = scenario_years
        self.solver = solver
        self.n_jobs = n_jobs

    def _model(self):
        return StochasticModel(self.generation)


class RobustRuleCurve(_RuleCurveEstimator):
    """Least storage against the lower end of per-step inflow confidence intervals."""

    def __init__(
        self,
        reservoir=None,
        level=0.95,
        one_sided=False,
        mpc=True,
        window_years=2,
        scenario_years=3,
        solver="simplex",
        n_jobs=1,
    ):
        self.reservoir = reservoir
        self.level = level
        self.one_sided = one_sided
        self.mpc = mpc
        self.window_years = window_years
        self.scenario_years = scenario_years
        self.solver = solver
        self.n_jobs = n_jobs

    def _model(self):
        return RobustModel(ConfidenceSpec(check_level(self.level), bool(self.one_sided)))
