import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from conftest import eupen, synthetic_years, toy_spec
from oracles import t_quantile_oracle
from rulecurve.exceptions import DataError, InfeasibleError
from rulecurve.hydrology import HydroYear, TimeGrid, load_discharge_csv
from rulecurve.reservoir import Scenario, solve_scenario
from rulecurve.robust import (
    ConfidenceSpec,
    betainc,
    ci_lower_bounds,
    export_worst_case,
    solve_robust,
    t_quantile,
    worst_case_profile,
    worst_case_scenario,
)


@pytest.mark.parametrize("p", [0.9, 0.95, 0.975, 0.995])
@pytest.mark.parametrize("dof", [1, 2, 5, 10, 22, 100])
def test_t_quantile_matches_integration(p, dof):
    assert abs(t_quantile(p, dof) - t_quantile_oracle(p, dof)) < 1e-6


def test_t_quantile_examples():
    assert t_quantile(0.5, 7) == 0.0
    assert t_quantile(0.975, 10) == pytest.approx(2.2281, abs=1e-4)
    assert abs(t_quantile(0.975, 10_000) - 1.959964) < 1e-3
    assert t_quantile(0.025, 10) == pytest.approx(-t_quantile(0.975, 10), abs=1e-12)
    assert t_quantile(0.975, 2) == pytest.approx(4.3027, abs=1e-4)


@pytest.mark.parametrize("p,dof", [(0.0, 3), (1.0, 3), (0.9, 0), (0.9, math.inf), (0.9, "x")])
def test_t_quantile_rejects_bad_input(p, dof):
    with pytest.raises(ValueError):
        t_quantile(p, dof)


def test_t_quantile_monotone():
    ps = [0.55, 0.7, 0.9, 0.95, 0.99, 0.999]
    for dof in (1, 3, 30):
        qs = [t_quantile(p, dof) for p in ps]
        assert all(a < b for a, b in zip(qs, qs[1:]))
    for p in (0.6, 0.95):
        qs = [t_quantile(p, d) for d in (1, 2, 5, 20, 200)]
        assert all(a > b for a, b in zip(qs, qs[1:]))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 60), st.floats(0.05, 60), st.floats(0, 1))
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)


def _years(values_by_year, grid=None):
    grid = grid or TimeGrid.toy(len(values_by_year[0]))
    return [HydroYear(str(2000 + i), grid, {"trib": np.asarray(v, float)}) for i, v in enumerate(values_by_year)]


def test_ci_lower_bound_examples():
    years = _years([[100.0, 5.0], [200.0, 5.0], [300.0, 5.0]])
    lb = ci_lower_bounds(years, "trib", 0.95)
    raw = 200 - t_quantile(0.975, 2) * 100 / math.sqrt(3)
    assert raw == pytest.approx(-48.4, abs=0.05)
    assert lb[0] == 0.0
    assert lb[1] == 5.0  # zero spread leaves the mean
    lo = ci_lower_bounds(years, "trib", 0.985)
    assert np.all(lo <= lb)


def test_ci_lower_bound_one_sided_is_tighter():
    years = _years([[100.0], [120.0], [130.0], [90.0]])
    two = ci_lower_bounds(years, "trib", 0.9)
    one = ci_lower_bounds(years, "trib", 0.9, one_sided=True)
    x = np.array([100.0, 120.0, 130.0, 90.0])
    want = x.mean() - t_quantile(0.9, 3) * x.std(ddof=1) / 2
    assert one[0] == pytest.approx(want)
    assert one[0] > two[0]


def test_ci_lower_bound_errors():
    years = _years([[1.0], [2.0]])
    with pytest.raises(DataError, match="two years"):
        ci_lower_bounds(years[:1], "trib", 0.95)
    with pytest.raises(DataError, match="absent"):
        ci_lower_bounds(years, "nile", 0.95)
    with pytest.raises(ValueError):
        ConfidenceSpec(1.0)
    with pytest.raises(ValueError):
        ConfidenceSpec(0.9, method="pooled")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.floats(0, 1e3), min_size=3, max_size=3), min_size=2, max_size=8),
       st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_lower_bounds_nonnegative_and_monotone(rows, l1, l2):
    years = _years(rows)
    a, b = sorted((l1, l2))
    lo_a = ci_lower_bounds(years, "trib", a)
    lo_b = ci_lower_bounds(years, "trib", b)
    assert np.all(lo_a >= 0) and np.all(lo_b >= 0)
    assert np.all(lo_b <= lo_a + 1e-9 * (1 + np.abs(lo_a)))


def test_worst_case_scenario_tiles_profile():
    years = synthetic_years("default", 6, 3, "monthly")
    wc = worst_case_scenario(years, ConfidenceSpec(0.9), horizon_years=3)
    prof = worst_case_profile(years, ConfidenceSpec(0.9))
    assert wc.sample_size == 6 and wc.level == 0.9
    for r, v in prof.items():
        np.testing.assert_array_equal(wc.underlying.flows[r], np.tile(v, 3))
    with pytest.raises(ValueError):
        worst_case_scenario(years, ConfidenceSpec(0.9), horizon_years=0)


def test_level_near_zero_equals_mean_year_solve():
    years = synthetic_years()
    spec = eupen()
    robust = solve_robust(spec, years, ConfidenceSpec(1e-6))
    mean = {r: np.mean([y.flows[r] for y in years], axis=0) for r in years[0].rivers}
    det = solve_scenario(spec, Scenario(years[0].grid, {r: np.tile(v, 2) for r, v in mean.items()}, "mean"))
    np.testing.assert_allclose(robust.storages, det.storages, rtol=1e-4)


def test_generous_fixture_feasible_and_monotone():
    years = synthetic_years("generous")
    spec = eupen()
    curves = [solve_robust(spec, years, ConfidenceSpec(lv)).storages for lv in (0.95, 0.965, 0.98, 0.985)]
    for lo, hi in zip(curves, curves[1:]):
        assert np.all(hi >= lo - 1e-6 * np.maximum(1.0, lo))
    for tr_lv in (0.95, 0.985):
        tr = solve_robust(spec, years, ConfidenceSpec(tr_lv))
        tr.check(spec)
        assert np.max(tr.mass_balance_residuals()) < 1e-6


def test_marginal_fixture_crosses_into_infeasibility():
    years = synthetic_years("marginal")
    spec = eupen()
    solve_robust(spec, years, ConfidenceSpec(0.95)).check(spec)
    with pytest.raises(InfeasibleError, match="infeasible at confidence level 0.99") as info:
        solve_robust(spec, years, ConfidenceSpec(0.99))
    assert info.value.level == 0.99


def test_backends_agree_on_robust_curve():
    years = synthetic_years()
    spec = eupen()
    a = solve_robust(spec, years, ConfidenceSpec(0.95), solver="simplex")
    b = solve_robust(spec, years, ConfidenceSpec(0.95), solver="chain")
    np.testing.assert_allclose(a.storages, b.storages, rtol=1e-9)


def test_toy_robust_curve_by_hand():
    # demand 4, floor 10, lower bound inflow 1 per step: storage must cover 3 per step
    g = TimeGrid.toy(3)
    years = _years([[1.0, 1.0, 1.0]] * 3, g)
    tr = solve_robust(toy_spec(g), years, ConfidenceSpec(0.95), horizon_years=1)
    np.testing.assert_allclose(tr.storages, [19.0, 16.0, 13.0, 10.0])


def test_export_round_trip(tmp_path):
    years = synthetic_years("default", 5, 9, "weekly")
    wc = worst_case_scenario(years, ConfidenceSpec(0.95), horizon_years=2)
    p = tmp_path / "wc.csv"
    export_worst_case(wc, p)
    back = load_discharge_csv(p, TimeGrid("weekly"))
    assert len(back) == 2
    for r in wc.underlying.flows:
        got = np.concatenate([y.flows[r] for y in back])
        np.testing.assert_allclose(got, wc.underlying.flows[r], rtol=1e-6, atol=1e-3)
