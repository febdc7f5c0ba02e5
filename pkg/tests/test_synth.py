import hashlib

import numpy as np
import pytest

from rulecurve.hydrology import TimeGrid, load_discharge_csv
from rulecurve.synth import PRESETS, SynthParams, generate_records, write_synthetic_csv


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_synthetic_csv(a, 23, seed=1)
    write_synthetic_csv(b, 23, seed=1)
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()


def test_records_are_complete_and_nonnegative():
    recs = generate_records(3, seed=5)
    assert all(r.discharge >= 0 for r in recs)
    assert {r.river for r in recs} == {"vesdre", "getzbach", "helle"}
    assert len(recs) == 3 * (366 + 365 + 365)  # three rivers; 1992 is a leap year


def test_winters_are_wetter_than_summers(tmp_path):
    p = tmp_path / "s.csv"
    write_synthetic_csv(p, 10, seed=2)
    years = load_discharge_csv(p, TimeGrid("monthly"))
    assert len(years) == 10
    total = np.array([sum(y.flows.values()) for y in years]).mean(axis=0)
    assert total[[0, 1, 11]].mean() > 2 * total[[6, 7, 8]].mean()


def test_stationary_years_are_identical():
    recs = generate_records(3, seed=9, preset="stationary")
    by_year = {}
    for r in recs:
        if r.river == "vesdre":
            by_year.setdefault(r.date.year, []).append(r.discharge)
    first, *rest = by_year.values()
    assert all(v == first for v in rest)


def test_presets_and_overrides(tmp_path):
    assert PRESETS["generous"].scale > PRESETS["default"].scale > PRESETS["marginal"].scale
    p = tmp_path / "o.csv"
    write_synthetic_csv(p, 1, seed=1, scale=2.0)
    write_synthetic_csv(tmp_path / "d.csv", 1, seed=1)
    big = load_discharge_csv(p, TimeGrid("monthly"))[0]
    base = load_discharge_csv(tmp_path / "d.csv", TimeGrid("monthly"))[0]
    np.testing.assert_allclose(big.flows["vesdre"], 2 * base.flows["vesdre"], rtol=1e-5)
    custom = SynthParams(rivers=(("only", 1.0),))
    assert {r.river for r in generate_records(1, 1, custom)} == {"only"}
    with pytest.raises(ValueError):
        generate_records(0)
    with pytest.raises(KeyError):
        generate_records(1, 1, "monsoon")
