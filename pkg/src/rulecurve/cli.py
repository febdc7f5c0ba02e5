"""Command line: ``rulecurve``, ``analyze`` and ``synth`` subcommands.

Settings come from an optional TOML file (top-level keys plus one table per
subcommand); command-line flags override it. Exit status is 0 on success,
1 for usage or I/O problems and 2 when the model has no feasible solution.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .analysis import DEFAULT_LEVELS, compare_curves, confidence_distances, match_confidence_level, support_statistics
from .exceptions import DataError, InfeasibleError
from .hydrology import TimeGrid, load_discharge_csv
from .mpc import MpcConfig, RobustModel, RuleCurve, StochasticModel, direct_rule_curve, run_mpc
from .reservoir import load_reservoir_spec
from .robust import ConfidenceSpec
from .stochastic import ScenarioGenMethod, generate_scenarios, solve_decoupled
from .synth import PRESETS, write_synthetic_csv
from .validation import check_jobs, check_levels, check_spec_covers, check_years

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("rulecurve")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2
RUN_CONFIG = "run.toml"

DEFAULTS: dict[str, Any] = {
    "grid": "weekly",
    "start_month": 1,
    "jobs": None,
    "strict": True,
    "model": "stochastic",
    "gen": "merge",
    "k": None,
    "level": 0.95,
    "one_sided": False,
    "mpc": True,
    "window_years": 2,
    "solver": "auto",
    "levels": list(DEFAULT_LEVELS),
    "robust": True,
    "seed": 1,
    "years": 23,
    "preset": "default",
    "first_year": 1992,
}
PATH_KEYS = ("data", "reservoir", "out", "run", "current", "compare")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is reserved for infeasibility here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML settings file; flags override it")
    p.add_argument("--data", type=Path, help="discharge CSV (river,date,discharge_m3s)")
    p.add_argument("--reservoir", type=Path, help="reservoir TOML (bundled Eupen spec by default)")
    p.add_argument("--grid", choices=["daily", "weekly", "monthly"])
    p.add_argument("--start-month", type=int, help="first calendar month of the year (10 for hydrological years)")
    p.add_argument("--lenient", dest="strict", action="store_false", default=None, help="skip malformed CSV rows")
    p.add_argument("--jobs", type=int, help="worker processes (default: all cores; 1 = sequential)")
    p.add_argument("--solver", choices=["auto", "simplex", "highs", "chain"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rulecurve", description="Minimum-storage rule curves for a drinking-water reservoir.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    rc = sub.add_parser("rulecurve", help="compute a rule curve")
    _common(rc)
    rc.add_argument("--model", choices=["stochastic", "robust"])
    rc.add_argument("--gen", choices=["merge", "mix"], help="scenario generation for the stochastic model")
    rc.add_argument("-k", type=int, help="years per scenario (default 3 with --mpc, else 2)")
    rc.add_argument("--level", type=float, help="confidence level of the robust model")
    rc.add_argument("--one-sided", action="store_true", default=None)
    rc.add_argument("--mpc", action=argparse.BooleanOptionalAction, default=None)
    rc.add_argument("--window-years", type=int, help="guarantee horizon of each MPC window")
    rc.add_argument("--out", type=Path, help="output directory")

    an = sub.add_parser("analyze", help="support statistics, confidence matching and curve comparison")
    _common(an)
    an.add_argument("--run", type=Path, help="directory of a previous rulecurve run")
    an.add_argument("--levels", type=float, nargs="+", help="robust confidence levels to match against")
    an.add_argument("--no-robust", dest="robust", action="store_false", default=None, help="skip robust curves")
    an.add_argument("--current", type=Path, help="CSV (step,volume_m3) of the rule curve in force")
    an.add_argument("--compare", type=Path, nargs="+", help="further rulecurve.json files to compare")
    an.add_argument("--out", type=Path, help="output directory (default: the run directory)")

    sy = sub.add_parser("synth", help="write a synthetic discharge CSV")
    sy.add_argument("--config", type=Path)
    sy.add_argument("--seed", type=int)
    sy.add_argument("--years", type=int)
    sy.add_argument("--preset", choices=sorted(PRESETS))
    sy.add_argument("--first-year", type=int)
    sy.add_argument("--out", type=Path, help="output CSV path")
    return parser


def _load_toml(path: Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None


def resolve_settings(args: argparse.Namespace) -> dict[str, Any]:
    """Merge built-in defaults, the config file (top level, then the command's table) and flags."""
    settings = dict(DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path is None and args.command == "analyze" and args.run is not None and (args.run / RUN_CONFIG).exists():
        cfg_path = args.run / RUN_CONFIG
    if cfg_path is not None:
        raw = _load_toml(cfg_path)
        base = cfg_path.parent
        layered = {k: v for k, v in raw.items() if not isinstance(v, dict)}
        layered.update(raw.get(args.command, {}))
        for key, value in layered.items():
            key = key.replace("-", "_")
            if key in PATH_KEYS and value is not None:
                value = [base / v for v in value] if isinstance(value, list) else base / value
            settings[key] = value
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config", "verbose"):
            settings[key] = value
    return settings


def _grid(s: dict[str, Any]) -> TimeGrid:
    try:
        return TimeGrid.parse(str(s["grid"]), int(s["start_month"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_inputs(s: dict[str, Any]):
    if not s.get("data"):
        raise UsageError("no discharge data given (--data or 'data' in the config)")
    data = Path(s["data"])
    if not data.exists():
        raise UsageError(f"data file not found: {data}")
    if s.get("reservoir") and not Path(s["reservoir"]).exists():
        raise UsageError(f"reservoir file not found: {s['reservoir']}")
    grid = _grid(s)
    years = load_discharge_csv(data, grid, strict=bool(s["strict"]))
    years, grid = check_years(years)
    spec = load_reservoir_spec(s.get("reservoir"), grid)
    check_spec_covers(spec, grid, years[0].rivers)
    return grid, years, spec


def _model(s: dict[str, Any]):
    if s["model"] == "stochastic":
        return StochasticModel(s["gen"])
    if s["model"] == "robust":
        return RobustModel(ConfidenceSpec(float(s["level"]), bool(s["one_sided"])))
    raise UsageError(f"unknown model {s['model']!r}")


def _solver(s: dict[str, Any], model) -> str:
    if s["solver"] != "auto":
        return s["solver"]
    # mixing builds N**k scenarios per window; only the vectorised solver is practical there
    return "chain" if isinstance(model, StochasticModel) and model.kind == "mix" else "simplex"


def _years_per_scenario(s: dict[str, Any]) -> int:
    if s["k"] is not None:
        return int(s["k"])
    return 3 if s["mpc"] else int(s["window_years"])


@dataclass
class RunLog:
    path: Path
    lines: list[str]

    def add(self, key: str, value: Any) -> None:
        self.lines.append(f"{key}: {value}")
        log.info("%s: %s", key, value)

    def write(self) -> None:
        self.path.write_text("\n".join(self.lines) + "\n", encoding="utf-8")


def _write_run_config(s: dict[str, Any], out: Path) -> None:
    keys = ("data", "reservoir", "grid", "start_month", "strict", "model", "gen", "k", "level", "one_sided", "mpc", "window_years", "solver")
    lines = []
    for k in keys:
        v = s.get(k)
        if v is None:
            continue
        if isinstance(v, Path):
            v = str(v.resolve())
        lines.append(f"{k} = {_toml_value(v)}")
    (out / RUN_CONFIG).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def cmd_rulecurve(s: dict[str, Any]) -> int:
    out = Path(s.get("out") or "out")
    grid, years, spec = _load_inputs(s)
    model = _model(s)
    solver = _solver(s, model)
    jobs = check_jobs(s["jobs"])
    k = _years_per_scenario(s)
    out.mkdir(parents=True, exist_ok=True)
    run_log = RunLog(out / "run.log", [])
    run_log.add("command", "rulecurve")
    run_log.add("model", model.describe())
    run_log.add("mpc", str(bool(s["mpc"])).lower())
    run_log.add("grid", f"{grid.kind} ({grid.steps_per_year} steps, year starts in month {grid.start_month})")
    run_log.add("years", f"{len(years)} ({years[0].label} .. {years[-1].label})")
    run_log.add("solver", solver)
    run_log.add("jobs", jobs)
    if isinstance(model, StochasticModel):
        n = len(generate_scenarios(years, ScenarioGenMethod(model.kind, k)))
        run_log.add("years per scenario", k)
        run_log.add("scenarios", n)
    tic = time.perf_counter()
    try:
        if s["mpc"]:
            cfg = MpcConfig(model, int(s["window_years"]), k)
            curve = run_mpc(spec, years, cfg, solver=solver, jobs=jobs)
        else:
            curve = direct_rule_curve(spec, years, model, k, solver=solver, jobs=jobs)
    except InfeasibleError as exc:
        run_log.add("status", f"infeasible ({exc})")
        run_log.write()
        raise
    elapsed = time.perf_counter() - tic
    for w in curve.windows:
        run_log.lines.append(f"window {w.start_step}: {w.elapsed:.4f} s, {w.n_scenarios} scenarios")
    run_log.add("wall time", f"{elapsed:.3f} s")
    curve.validate(spec)
    curve.write_csv(out / "rulecurve.csv")
    curve.write_json(out / "rulecurve.json")
    _write_run_config(s, out)
    run_log.add("generated at", curve.metadata["generated_at"])
    run_log.add("status", "ok")
    run_log.add("max rule storage", f"{curve.values.max():.1f} m3")
    run_log.write()
    print(f"wrote {out / 'rulecurve.csv'} and {out / 'rulecurve.json'} ({grid.steps_per_year} steps)")
    return EXIT_OK


def _robust_curves(s, spec, years, meta, levels, solver: str, jobs: int) -> dict[float, RuleCurve]:
    mpc = bool(meta.get("mpc", True))
    window_years = int(meta.get("guarantee_years", 2))
    scenario_years = int(meta.get("scenario_years", 3))
    curves = {}
    for lvl in levels:
        model = RobustModel(ConfidenceSpec(lvl, bool(s["one_sided"])))
        try:
            if mpc:
                cfg = MpcConfig(model, window_years, scenario_years)
                curves[lvl] = run_mpc(spec, years, cfg, solver=solver, jobs=jobs)
            else:
                curves[lvl] = direct_rule_curve(spec, years, model, window_years, solver=solver, jobs=jobs)
        except InfeasibleError as exc:
            log.warning("skipping level %g: %s", lvl, exc)
    return curves


def cmd_analyze(s: dict[str, Any]) -> int:
    run = Path(s["run"]) if s.get("run") else None
    if run is None:
        raise UsageError("analyze needs --run DIR pointing at a rulecurve output directory")
    artifact = run / "rulecurve.json"
    if not artifact.exists():
        raise UsageError(f"missing artifact: {artifact} (run 'rulecurve' first)")
    curve = RuleCurve.read_json(artifact)
    meta = curve.metadata
    out = Path(s.get("out") or run)
    out.mkdir(parents=True, exist_ok=True)

    grid, years, spec = _load_inputs(s)
    curve.grid.check_same(grid)
    jobs = check_jobs(s["jobs"])
    descriptor = str(meta.get("model", ""))
    window_years = int(meta.get("guarantee_years", 2))
    written = []

    if descriptor.startswith("stochastic-"):
        kind = descriptor.split("-", 1)[1]
        # support is read off a direct solve over the guarantee horizon
        solver = _solver(s, StochasticModel(kind))
        sset = generate_scenarios(years, ScenarioGenMethod(kind, window_years))
        env = solve_decoupled(spec, sset, solver=solver, jobs=jobs, keep_trajectories=False)
        report = support_statistics(env, sset)
        report.write_csv(out / "support_report.csv")
        report.write_summary_csv(out / "support_summary.csv")
        (out / "support_summary.txt").write_text(report.to_text(), encoding="utf-8")
        written += ["support_report.csv", "support_summary.csv", "support_summary.txt"]

    curves = {descriptor or "run": curve}
    robust = {}
    if s["robust"]:
        levels = check_levels(s["levels"])
        robust = _robust_curves(s, spec, years, meta, levels, _solver(s, RobustModel()), jobs)
        for lvl, c in robust.items():
            curves[f"robust-{lvl:g}"] = c
    if descriptor.startswith("stochastic-") and robust:
        dist = confidence_distances(curve, robust)
        best = match_confidence_level(curve, robust)
        with open(out / "confidence_match.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "l1_distance_m3", "selected"])
            for lvl, d in dist.items():
                w.writerow([f"{lvl:g}", repr(d), str(lvl == best).lower()])
        written.append("confidence_match.csv")
        print(f"closest robust level: {best:g}")
    for path in s.get("compare") or []:
        other = RuleCurve.read_json(path)
        curves[str(other.metadata.get("model", Path(path).stem))] = other
    if s.get("current"):
        current_path = Path(s["current"])
        if not current_path.exists():
            raise UsageError(f"current rule curve not found: {current_path}")
        curves["current"] = RuleCurve.read_csv(current_path, grid)
    if len(curves) > 1:
        cmp = compare_curves(curves)
        cmp.write_plot_data(out / "curves_plot.csv")
        cmp.write_pairs_csv(out / "curve_pairs.csv")
        text = cmp.to_text()
        if "current" in curves:
            below = cmp.below("current")
            with open(out / "below_current.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["curve", "steps_below_current", "steps"])
                for lab, steps in below.items():
                    w.writerow([lab, len(steps), " ".join(map(str, steps))])
            written.append("below_current.csv")
            text += "\n" + "\n".join(f"{lab}: {v}" for lab, v in cmp.verdict("current").items()) + "\n"
        (out / "comparison.txt").write_text(text, encoding="utf-8")
        written += ["curves_plot.csv", "curve_pairs.csv", "comparison.txt"]
    print("wrote " + ", ".join(str(out / f) for f in written))
    return EXIT_OK


def cmd_synth(s: dict[str, Any]) -> int:
    out = Path(s.get("out") or "synthetic.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    if int(s["years"]) < 1:
        raise UsageError("--years must be >= 1")
    write_synthetic_csv(out, int(s["years"]), int(s["seed"]), str(s["preset"]), int(s["first_year"]))
    print(f"wrote {out} ({s['years']} years, seed {s['seed']}, preset {s['preset']})")
    return EXIT_OK


COMMANDS = {"rulecurve": cmd_rulecurve, "analyze": cmd_analyze, "synth": cmd_synth}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        settings = resolve_settings(args)
        return COMMANDS[args.command](settings)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
