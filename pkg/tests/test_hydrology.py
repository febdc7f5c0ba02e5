import datetime as dt
import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bucket_sums
from rulecurve.exceptions import DataError, GridMismatchError
from rulecurve.hydrology import (
    HydroYear,
    InflowRecord,
    TimeGrid,
    aggregate_to_grid,
    load_discharge_csv,
    read_discharge_csv,
    stack_years,
    volumes_to_daily,
    write_discharge_csv,
)


def year_days(year, start_month=1):
    day = dt.date(year, start_month, 1)
    end = dt.date(year + 1, start_month, 1)
    out = []
    while day < end:
        out.append(day)
        day += dt.timedelta(days=1)
    return out


def write_csv(path, rows):
    path.write_text("river,date,discharge_m3s\n" + "".join(f"{r},{d},{q}\n" for r, d, q in rows))
    return path


@pytest.fixture
def one_year_file(tmp_path):
    return write_csv(tmp_path / "q.csv", [("vesdre", d.isoformat(), 1.0) for d in year_days(2001)])


def test_daily_grid_unit_arithmetic(one_year_file):
    years = load_discharge_csv(one_year_file, TimeGrid("daily"))
    assert len(years) == 1
    v = years[0].flows["vesdre"]
    assert v.shape == (365,) and np.all(v == 86_400.0)


def test_weekly_grid_last_week_absorbs_extra_day(one_year_file):
    v = load_discharge_csv(one_year_file, TimeGrid("weekly"))[0].flows["vesdre"]
    assert v.shape == (52,)
    assert np.all(v[:51] == 604_800.0) and v[51] == 691_200.0


def test_monthly_january_volume():
    days = [(d, 0.5) for d in year_days(2003)]
    v = aggregate_to_grid(days, TimeGrid("monthly"))
    assert v[0] == 31 * 43_200
    assert v.sum() == pytest.approx(365 * 0.5 * 86_400, rel=1e-12)


def test_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DataError, match="no complete year found"):
        load_discharge_csv(p, TimeGrid())
    p.write_text("river,date,discharge_m3s\n")
    with pytest.raises(DataError, match="no complete year found"):
        load_discharge_csv(p, TimeGrid())


@pytest.mark.parametrize("kind", ["daily", "weekly", "monthly"])
@pytest.mark.parametrize("year,start", [(2001, 1), (2004, 1), (2003, 10)])
def test_bucket_sums_match_oracle(kind, year, start):
    rng = np.random.default_rng(year + start)
    days = [(d, float(rng.gamma(2.0, 1.5))) for d in year_days(year, start)]
    got = aggregate_to_grid(days, TimeGrid(kind, start))
    want = bucket_sums(days, kind, start)
    np.testing.assert_allclose(got, want, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(0, 1e4, allow_nan=False), min_size=366, max_size=366),
    st.sampled_from(["daily", "weekly", "monthly"]),
    st.booleans(),
)
def test_volume_conservation(qs, kind, leap):
    days = year_days(2004 if leap else 2005)
    series = list(zip(days, qs))
    v = aggregate_to_grid(series, TimeGrid(kind))
    total = sum(q * 86_400.0 for _, q in series)
    assert v.sum() == pytest.approx(total, rel=1e-12, abs=1e-9)


def test_leap_day_joins_feb_28():
    days = [(d, 1.0 if (d.month, d.day) != (2, 29) else 5.0) for d in year_days(2004)]
    v = aggregate_to_grid(days, TimeGrid("daily"))
    assert v[58] == 6.0 * 86_400 and v.size == 365


def test_gap_duplicate_and_negative():
    days = [(d, 1.0) for d in year_days(2001)]
    with pytest.raises(DataError, match="gap"):
        aggregate_to_grid(days[:100] + days[101:], TimeGrid())
    with pytest.raises(DataError, match="duplicate"):
        aggregate_to_grid(days + [days[5]], TimeGrid())
    with pytest.raises(DataError, match="negative"):
        aggregate_to_grid([(days[0][0], -1.0)] + days[1:], TimeGrid())


def test_csv_errors_report_line_numbers(tmp_path):
    rows = [("vesdre", d.isoformat(), 1.0) for d in year_days(2001)]
    bad = rows[:3] + [("vesdre", "2001-13-40", 1.0)] + rows[3:]
    p = write_csv(tmp_path / "bad.csv", bad)
    with pytest.raises(DataError, match="line 5"):
        read_discharge_csv(p)
    # lenient mode drops the row and carries on
    assert len(read_discharge_csv(p, strict=False)) == 365
    neg = rows[:9] + [("vesdre", "2001-12-31", -2.0)]
    with pytest.raises(DataError, match="line 11.*negative"):
        read_discharge_csv(write_csv(tmp_path / "neg.csv", neg))
    dup = rows + [rows[0]]
    with pytest.raises(DataError, match="duplicate"):
        read_discharge_csv(write_csv(tmp_path / "dup.csv", dup))
    (tmp_path / "hdr.csv").write_text("a,b,c\n")
    with pytest.raises(DataError, match="header"):
        read_discharge_csv(tmp_path / "hdr.csv")


def test_incomplete_years_dropped(tmp_path, caplog):
    rows = [("vesdre", d.isoformat(), 1.0) for y in (2001, 2002) for d in year_days(y)]
    rows += [("vesdre", d.isoformat(), 1.0) for d in year_days(2003)[:200]]
    years = load_discharge_csv(write_csv(tmp_path / "q.csv", rows), TimeGrid())
    assert [y.label for y in years] == ["2001", "2002"]
    assert "2003" in caplog.text


def test_hydrological_year_labels(tmp_path):
    rows = [("r", d.isoformat(), 2.0) for d in year_days(2000, 10)]
    years = load_discharge_csv(write_csv(tmp_path / "q.csv", rows), TimeGrid("monthly", 10))
    assert years[0].label == "2000-2001"
    assert years[0].flows["r"][0] == 31 * 2 * 86_400  # October first


def test_grid_determinism(one_year_file):
    a = load_discharge_csv(one_year_file, TimeGrid("weekly"))[0].flows["vesdre"]
    b = load_discharge_csv(one_year_file, TimeGrid("weekly"))[0].flows["vesdre"]
    assert a.tobytes() == b.tobytes()


def test_grid_properties():
    w = TimeGrid("weekly")
    assert w.steps_per_year == 52 and w.step_length == 7 and w.step_days.sum() == 365
    assert TimeGrid("monthly").step_length == "month"
    assert list(TimeGrid("monthly").step_month) == list(range(1, 13))
    # week 5 covers Jan 29 - Feb 4; its midpoint (Feb 1) decides the month
    assert w.step_month[4] == 2
    assert TimeGrid.parse("W") == w
    with pytest.raises(ValueError):
        TimeGrid("hourly")
    with pytest.raises(GridMismatchError):
        TimeGrid.toy(4).step_month
    with pytest.raises(GridMismatchError, match="grid mismatch"):
        w.check_same(TimeGrid("daily"))


def test_hydro_year_invariants():
    g = TimeGrid("monthly")
    with pytest.raises(DataError):
        HydroYear("x", g, {"r": np.ones(11)})
    with pytest.raises(DataError):
        HydroYear("x", g, {"r": -np.ones(12)})
    with pytest.raises(DataError):
        InflowRecord("r", dt.date(2000, 1, 1), -0.1)
    y1 = HydroYear("a", g, {"r": np.ones(12)})
    y2 = HydroYear("b", TimeGrid("weekly"), {"r": np.ones(52)})
    with pytest.raises(GridMismatchError):
        stack_years([y1, y2])


@pytest.mark.parametrize("kind", ["daily", "weekly", "monthly"])
def test_volumes_round_trip_through_csv(tmp_path, kind):
    g = TimeGrid(kind)
    rng = np.random.default_rng(3)
    flows = {"a": rng.gamma(2, 1e5, 2 * g.steps_per_year), "b": rng.gamma(2, 1e4, 2 * g.steps_per_year)}
    p = tmp_path / "rt.csv"
    write_discharge_csv(volumes_to_daily(flows, g), p, decimals=12)
    years = load_discharge_csv(p, g)
    assert len(years) == 2
    for r in flows:
        np.testing.assert_allclose(np.concatenate([y.flows[r] for y in years]), flows[r], rtol=1e-9)
    digest = hashlib.sha256(p.read_bytes()).hexdigest()
    write_discharge_csv(volumes_to_daily(flows, g), p, decimals=12)
    assert hashlib.sha256(p.read_bytes()).hexdigest() == digest
