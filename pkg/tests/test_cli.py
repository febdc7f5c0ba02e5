import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from rulecurve.cli import main, resolve_settings, build_parser


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    for preset in ("default", "marginal"):
        assert main(["synth", "--seed", "1", "--years", "23", "--preset", preset, "--out", str(d / f"{preset}.csv")]) == 0
    assert main(["synth", "--seed", "4", "--years", "6", "--out", str(d / "short.csv")]) == 0
    return d


def test_synth_is_deterministic(tmp_path, data_dir):
    p = tmp_path / "again.csv"
    main(["synth", "--seed", "1", "--years", "23", "--out", str(p)])
    assert sha(p) == sha(data_dir / "default.csv")
    main(["synth", "--seed", "2", "--years", "23", "--out", str(p)])
    assert sha(p) != sha(data_dir / "default.csv")
    rows = list(csv.DictReader(open(data_dir / "default.csv")))
    assert min(float(r["discharge_m3s"]) for r in rows) >= 0
    assert {r["river"] for r in rows} == {"vesdre", "getzbach", "helle"}


def test_merge_mpc_emits_weekly_curve(tmp_path, data_dir, capsys):
    out = tmp_path / "merge"
    code = main(["rulecurve", "--data", str(data_dir / "default.csv"), "--model", "stochastic", "--gen", "merge",
                 "--mpc", "--solver", "chain", "--jobs", "1", "--out", str(out)])
    assert code == 0
    lines = (out / "rulecurve.csv").read_text().splitlines()
    assert lines[0] == "step,volume_m3" and len(lines) == 53
    data = json.loads((out / "rulecurve.json").read_text())
    assert data["schema_version"] == 1 and data["metadata"]["model"] == "stochastic-merge"
    assert len(data["values"]) == 52 and len(data["metadata"]["data_fingerprint"]) == 64
    log = (out / "run.log").read_text()
    assert "scenarios: 21" in log and "window 51:" in log and "wall time:" in log
    assert "status: ok" in log
    assert (out / "run.toml").exists()
    assert "52 steps" in capsys.readouterr().out


def test_robust_at_099_on_marginal_data_is_infeasible(tmp_path, data_dir, capsys):
    code = main(["rulecurve", "--data", str(data_dir / "marginal.csv"), "--model", "robust", "--level", "0.99",
                 "--jobs", "1", "--out", str(tmp_path / "r")])
    assert code == 2
    assert "infeasible at confidence level 0.99" in capsys.readouterr().err
    assert "status: infeasible" in (tmp_path / "r" / "run.log").read_text()
    assert main(["rulecurve", "--data", str(data_dir / "marginal.csv"), "--model", "robust", "--level", "0.95",
                 "--jobs", "1", "--out", str(tmp_path / "ok")]) == 0


def test_mixing_logs_cubed_scenario_count(tmp_path, data_dir):
    out = tmp_path / "mix"
    code = main(["rulecurve", "--data", str(data_dir / "default.csv"), "--model", "stochastic", "--gen", "mix",
                 "-k", "3", "--no-mpc", "--jobs", "1", "--out", str(out)])
    assert code == 0
    log = (out / "run.log").read_text()
    assert "scenarios: 12167" in log and "solver: chain" in log


def test_infeasible_stochastic_names_the_window(tmp_path, data_dir, capsys):
    res = tmp_path / "tiny.toml"
    res.write_text(
        'name = "tiny"\nmin_storage_hm3 = 2.25\nmax_storage_hm3 = 2.5\ndrinking_water_m3_per_day = 400000.0\n'
        "environmental_flow_m3s = 0.0\npenstock_m3s = 50.0\nbottom_outlet_m3s = 0.0\n"
        'tributaries = ["vesdre", "getzbach"]\n[[diverted]]\nriver = "helle"\nmax_discharge_m3s = 8.0\n'
        "environmental_flow_m3s = 0.1\n"
    )
    code = main(["rulecurve", "--data", str(data_dir / "short.csv"), "--reservoir", str(res), "--grid", "monthly",
                 "--jobs", "1", "--out", str(tmp_path / "x")])
    assert code == 2
    err = capsys.readouterr().err
    assert "window starting at step" in err and "scenarios: 1992+1993+1994" in err


def test_config_file_and_flag_override(tmp_path, data_dir):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f'data = "{data_dir / "short.csv"}"\ngrid = "monthly"\njobs = 1\n'
        '[rulecurve]\nmodel = "robust"\nlevel = 0.9\nout = "cfg-out"\n'
    )
    assert main(["rulecurve", "--config", str(cfg)]) == 0
    meta = json.loads((tmp_path / "cfg-out" / "rulecurve.json").read_text())["metadata"]
    assert meta["model"] == "robust-0.9-two-sided"
    assert main(["rulecurve", "--config", str(cfg), "--level", "0.8", "--one-sided"]) == 0
    meta = json.loads((tmp_path / "cfg-out" / "rulecurve.json").read_text())["metadata"]
    assert meta["model"] == "robust-0.8-one-sided"
    args = build_parser().parse_args(["rulecurve", "--config", str(cfg), "--no-mpc"])
    s = resolve_settings(args)
    assert s["mpc"] is False and s["grid"] == "monthly" and s["out"] == tmp_path / "cfg-out"


def test_usage_errors_exit_one(tmp_path, data_dir, capsys):
    assert main(["rulecurve", "--data", str(tmp_path / "nope.csv")]) == 1
    assert "not found" in capsys.readouterr().err
    assert main(["rulecurve"]) == 1
    assert main(["rulecurve", "--config", str(tmp_path / "missing.toml")]) == 1
    with pytest.raises(SystemExit) as info:
        main(["rulecurve", "--model", "bayesian"])
    assert info.value.code == 1
    assert main(["analyze", "--data", str(data_dir / "short.csv"), "--run", str(tmp_path / "empty")]) == 1
    assert "missing artifact" in capsys.readouterr().err
    assert main(["synth", "--years", "0", "--out", str(tmp_path / "z.csv")]) == 1


@pytest.fixture(scope="module")
def monthly_run(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("run")
    assert main(["rulecurve", "--data", str(data_dir / "default.csv"), "--grid", "monthly", "--jobs", "1",
                 "--out", str(out)]) == 0
    return out


def test_analyze_after_merge_run(tmp_path, monthly_run, capsys):
    current = tmp_path / "current.csv"
    values = json.loads((monthly_run / "rulecurve.json").read_text())["values"]
    flat = max(values) * 0.98
    current.write_text("step,volume_m3\n" + "".join(f"{t},{flat}\n" for t in range(12)))
    out = tmp_path / "analysis"
    code = main(["analyze", "--run", str(monthly_run), "--levels", "0.95", "0.975", "0.99",
                 "--current", str(current), "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(open(out / "support_report.csv")))
    assert len(rows) == 22
    assert sum(k.startswith("avg_") for k in rows[0]) == 6
    summary = (out / "support_summary.txt").read_text()
    for label in ("Year", "Wet season", "Dry season", "Driest six months", "Driest three months", "Driest month"):
        assert label in summary
    match = list(csv.DictReader(open(out / "confidence_match.csv")))
    assert sum(r["selected"] == "true" for r in match) == 1
    below = list(csv.DictReader(open(out / "below_current.csv")))
    model_row = next(r for r in below if r["curve"] == "stochastic-merge")
    assert int(model_row["steps_below_current"]) == sum(v < flat for v in values)
    assert (out / "curves_plot.csv").read_text().splitlines()[0].startswith("step,stochastic-merge")
    assert "unsafe" in (out / "comparison.txt").read_text()
    assert "closest robust level" in capsys.readouterr().out


def test_analyze_grid_mismatch(tmp_path, monthly_run, data_dir, capsys):
    code = main(["analyze", "--run", str(monthly_run), "--grid", "weekly", "--no-robust", "--out", str(tmp_path)])
    assert code == 1
    assert "grid mismatch" in capsys.readouterr().err
    bad = tmp_path / "weekly_current.csv"
    bad.write_text("step,volume_m3\n" + "".join(f"{t},3e6\n" for t in range(52)))
    code = main(["analyze", "--run", str(monthly_run), "--no-robust", "--current", str(bad), "--out", str(tmp_path)])
    assert code == 1
    assert "grid mismatch" in capsys.readouterr().err


def test_reproducible_artifacts(tmp_path, data_dir):
    args = ["rulecurve", "--data", str(data_dir / "short.csv"), "--grid", "monthly"]
    for name, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
        assert main(args + ["--jobs", jobs, "--out", str(tmp_path / name)]) == 0
    for f in ("rulecurve.csv", "rulecurve.json"):
        assert sha(tmp_path / "a" / f) == sha(tmp_path / "b" / f)
    va = json.loads((tmp_path / "a" / "rulecurve.json").read_text())["values"]
    vc = json.loads((tmp_path / "c" / "rulecurve.json").read_text())["values"]
    np.testing.assert_array_equal(va, vc)


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "rulecurve.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "rulecurve" in res.stdout
