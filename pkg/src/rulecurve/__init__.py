"""Minimum-storage rule curves for a drinking-water reservoir under inflow uncertainty."""

__version__ = "0.1.0"

from .analysis import (
    PeriodDefinition,
    SupportReport,
    compare_curves,
    match_confidence_level,
    period_average,
    support_statistics,
)
from .estimators import RobustRuleCurve, StochasticRuleCurve
from .exceptions import DataError, GridMismatchError, InfeasibleError
from .hydrology import HydroYear, InflowRecord, TimeGrid, aggregate_to_grid, load_discharge_csv, read_discharge_csv
from .lp import LpBuilder, LpProblem, LpSolution, LpStatus, solve
from .mpc import MpcConfig, RobustModel, RuleCurve, StochasticModel, direct_rule_curve, run_mpc
from .reservoir import ReservoirSpec, Scenario, StorageTrajectory, load_reservoir_spec, solve_scenario
from .robust import ConfidenceSpec, solve_robust, t_quantile, worst_case_scenario
from .stochastic import (
    EnvelopeSolution,
    ScenarioGenMethod,
    ScenarioSet,
    generate_scenarios,
    identify_support,
    solve_decoupled,
    solve_monolithic,
)

__all__ = [
    "__version__",
    "PeriodDefinition",
    "SupportReport",
    "compare_curves",
    "match_confidence_level",
    "period_average",
    "support_statistics",
    "RobustRuleCurve",
    "StochasticRuleCurve",
    "DataError",
    "GridMismatchError",
    "InfeasibleError",
    "HydroYear",
    "InflowRecord",
    "TimeGrid",
    "aggregate_to_grid",
    "load_discharge_csv",
    "read_discharge_csv",
    "LpBuilder",
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "solve",
    "MpcConfig",
    "RobustModel",
    "RuleCurve",
    "StochasticModel",
    "direct_rule_curve",
    "run_mpc",
    "ReservoirSpec",
    "Scenario",
    "StorageTrajectory",
    "load_reservoir_spec",
    "solve_scenario",
    "ConfidenceSpec",
    "solve_robust",
    "t_quantile",
    "worst_case_scenario",
    "EnvelopeSolution",
    "ScenarioGenMethod",
    "ScenarioSet",
    "generate_scenarios",
    "identify_support",
    "solve_decoupled",
    "solve_monolithic",
]
