import datetime as dt

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from aqicast.errors import ConfigError, InsufficientDataError, PipelineOrderError, SplitError
from aqicast.ingest import SchemaConfig
from aqicast.preprocess import (
    DEFAULT_DROP,
    POLLUTANT_FEATURES,
    EncodingMap,
    ScalerParams,
    SplitSpec,
    apply_scaler,
    fill_remaining_zero,
    fit_scaler,
    impute_group_mean,
    one_hot,
    outlier_report,
    quantile_linear,
    select_features,
    time_split,
)

from conftest import daily, make_table


def test_group_mean_fills_midpoint():
    t = make_table(daily("A", "2020-01-01", {"PM2.5": [10.0, np.nan, 20.0]}))
    out, log = impute_group_mean(t)
    assert out.column("PM2.5")[1] == 15.0
    assert log.mean_fills == 1 and log.entries[0].group_mean == 15.0


def test_fully_missing_group_stays_missing():
    t = make_table(daily("A", "2020-01-01", {"PM2.5": [np.nan, np.nan], "PM10": [1.0, 2.0]}))
    out, log = impute_group_mean(t)
    assert np.isnan(out.column("PM2.5")).all()
    assert log.mean_fills == 0


def test_groups_are_station_year_month():
    rows = daily("A", "2020-01-30", {"PM2.5": [1.0, 3.0, np.nan, 100.0]})  # Jan 30, 31, Feb 1, 2
    rows += daily("B", "2020-01-30", {"PM2.5": [50.0, 50.0, 50.0, 50.0]})
    out, _ = impute_group_mean(make_table(rows))
    a = out.frame.query("Station == 'A'")["PM2.5"].tolist()
    assert a == [1.0, 3.0, 100.0, 100.0]


def test_golden_temple_january_fills():
    pm = [float(v) for v in range(1, 32)]
    for i in (3, 10, 20):
        pm[i] = np.nan
    rows = daily("Golden Temple", "2019-01-01", {"PM2.5": pm}, state="Punjab", city="Amritsar")
    out, _ = impute_group_mean(make_table(rows))
    expected = np.nanmean(pm)
    got = out.column("PM2.5")
    assert all(got[i] == pytest.approx(expected, abs=1e-12) for i in (3, 10, 20))


def test_zero_fill_counts_and_full_months():
    nov = daily("A", "2021-11-01", {"PM10": [np.nan] * 30, "PM2.5": [1.0] * 30, "Temp": [np.nan] * 30})
    t, _ = impute_group_mean(make_table(nov))
    out, log = fill_remaining_zero(t)
    assert log.zero_fills == 30
    assert log.fully_zero_filled == [("A", 2021, 11, "PM10")]
    assert (out.column("PM10") == 0).all()
    # columns outside the retained pollutants are never zero-filled
    assert np.isnan(out.column("Temp")).all()


def test_zero_fill_dense_is_noop():
    t, _ = impute_group_mean(make_table(daily("A", "2021-11-01", {"PM10": [1.0, 2.0]})))
    out, log = fill_remaining_zero(t)
    assert log.zero_fills == 0 and out.equals(t.with_stage("fill_zero"))


def holey_table(rng, n_days=120, stations=3, p=0.2):
    rows = []
    for s in range(stations):
        vals = {c: rng.uniform(0, 100, n_days) for c in ("PM2.5", "PM10", "NO2")}
        for v in vals.values():
            v[rng.random(n_days) < p] = np.nan
        rows += daily(f"S{s}", "2020-01-01", {c: list(v) for c, v in vals.items()})
    return make_table(rows)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.9))
def test_imputation_properties(seed, p):
    t = holey_table(np.random.default_rng(seed), n_days=70, stations=2, p=p)
    once, log1 = impute_group_mean(t)
    twice, log2 = impute_group_mean(once)
    assert twice.frame.equals(once.frame) and log2.mean_fills == 0

    # brute-force group means over originally present values
    f = t.frame
    g = once.frame
    for c in ("PM2.5", "PM10", "NO2"):
        for i in np.flatnonzero(f[c].isna().to_numpy()):
            d = f["Date"].iloc[i]
            same = (f["Station"] == f["Station"].iloc[i]) & (f["Date"].dt.year == d.year) & (f["Date"].dt.month == d.month)
            present = [v for v in f.loc[same, c] if not np.isnan(v)]
            if present:
                assert g[c].iloc[i] == pytest.approx(sum(present) / len(present), abs=1e-9)
            else:
                assert np.isnan(g[c].iloc[i])

    filled, zlog = fill_remaining_zero(once)
    assert log1.mean_fills + zlog.zero_fills == int(t.missing_mask().sum().sum())
    assert not filled.missing_mask().any().any()


def full_schema_table():
    cols = {c: [1.0, 2.0] for c in SchemaConfig.load().numeric}
    cols["AQI"] = [50.0, 60.0]
    return make_table(daily("A", "2020-01-01", cols))


def test_default_drop_leaves_eight_pollutants():
    t = select_features(full_schema_table(), DEFAULT_DROP)
    assert t.numeric_columns == list(POLLUTANT_FEATURES) + ["AQI"]
    assert t.key_columns == ["State", "City", "Station", "Date"]


def test_empty_drop_is_identity():
    t = full_schema_table()
    assert select_features(t, []).frame.equals(t.frame)


def test_absent_drop_column_warns(caplog):
    t = full_schema_table()
    out = select_features(t, ["Nope"])
    assert out.frame.equals(t.frame)
    assert "absent" in caplog.text


def test_cannot_drop_target_or_keys():
    with pytest.raises(ConfigError):
        select_features(full_schema_table(), ["AQI"])
    with pytest.raises(ConfigError):
        select_features(full_schema_table(), ["Station"])


def test_outlier_worked_example():
    t = make_table(daily("A", "2020-01-01", {"x": [1, 2, 3, 4, 5, 6, 7, 100]}))
    before = t.frame
    col = outlier_report(t).columns["x"]
    assert (col.q1, col.q3, col.lower, col.upper) == (2.75, 6.25, -2.5, 11.5)
    assert col.flagged_values == [100.0] and col.flagged_rows == [7]
    assert t.frame.equals(before)


def test_outlier_constant_column():
    t = make_table(daily("A", "2020-01-01", {"x": [4.0] * 6}))
    col = outlier_report(t).columns["x"]
    assert col.iqr == 0 and col.lower == col.upper == 4.0 and col.flagged_rows == []


def test_outlier_needs_four_values():
    with pytest.raises(InsufficientDataError):
        outlier_report(make_table(daily("A", "2020-01-01", {"x": [1.0, 2.0, np.nan]})))


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0, 1))
def test_quantile_linear_matches_numpy(values, p):
    s = np.sort(np.array(values))
    assert quantile_linear(s, p) == pytest.approx(np.quantile(s, p, method="linear"), rel=1e-9, abs=1e-6)


def test_one_hot_states():
    rows = []
    for i, state in enumerate(["Punjab", "Delhi", "Haryana", "Delhi"]):
        rows += daily(f"S{i}", "2020-01-01", {"x": [1.0]}, state=state, city=f"c{i}")
    t, enc = one_hot(make_table(rows), ["State"])
    cols = enc.output_columns("State")
    assert cols == ["State=Delhi", "State=Haryana", "State=Punjab"]
    assert (t.frame[cols].sum(axis=1) == 1).all()
    assert "Station" in t.key_columns


def test_one_hot_single_category_and_many_cities():
    rows = []
    for i in range(22):
        rows += daily(f"S{i}", "2020-01-01", {"x": [1.0]}, city=f"city{i:02d}")
    t, enc = one_hot(make_table(rows), ["State", "City"])
    assert t.column("State=S").tolist() == [1.0] * 22
    assert len(enc.output_columns("City")) == 22
    assert not any(c.startswith("Station=") for c in t.numeric_columns)


def test_one_hot_unseen_category_is_zero_and_map_round_trips():
    train = make_table(daily("A", "2020-01-01", {"x": [1.0]}, city="X"))
    test = make_table(daily("B", "2020-01-01", {"x": [1.0]}, city="Y"))
    _, enc = one_hot(train, ["City"])
    enc2 = EncodingMap.from_json(enc.to_json())
    out, _ = one_hot(test, ["City"], enc2)
    assert out.column("City=X").tolist() == [0.0]


def test_scaler_example_and_leakage():
    train = make_table(daily("A", "2020-01-01", {"x": [0.0, 10.0]}))
    p = fit_scaler(train)
    assert p.mean["x"] == 5 and p.std["x"] == 5
    assert apply_scaler(p, train).column("x").tolist() == [-1.0, 1.0]
    test = make_table(daily("A", "2021-01-01", {"x": [20.0, 30.0]}))
    assert apply_scaler(p, test).column("x").mean() != 0
    assert ScalerParams.from_json(p.to_json()) == p


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50).filter(lambda v: np.std(v) > 1e-3))
def test_scaling_standardized_is_identity(values):
    t = make_table(daily("A", "2020-01-01", {"x": values}))
    z = apply_scaler(fit_scaler(t), t)
    again = apply_scaler(fit_scaler(z), z)
    np.testing.assert_allclose(again.column("x"), z.column("x"), atol=1e-12, rtol=0)


def test_split_boundary_goes_to_test():
    rows = daily("A", "2022-09-29", {"x": [1.0, 2.0, 3.0, 4.0]})
    train, test = time_split(make_table(rows), SplitSpec(dt.date(2019, 1, 1), dt.date(2022, 10, 1), dt.date(2023, 10, 15)))
    assert train.column("Date").max() == np.datetime64("2022-09-30")
    assert test.column("Date").min() == np.datetime64("2022-10-01")
    assert (train.role, test.role) == ("train", "test")
    assert len(train) + len(test) == 4


def test_split_reference_date_range():
    rows = [{"Station": "A", "Date": d, "x": 1.0} for d in pd.date_range("2019-01-01", "2023-10-15")]
    train, test = time_split(make_table(rows), SplitSpec(dt.date(2019, 1, 1), dt.date(2022, 10, 1), dt.date(2023, 10, 15)))
    assert str(train.column("Date").min())[:10] == "2019-01-01" and str(train.column("Date").max())[:10] == "2022-09-30"
    assert str(test.column("Date").min())[:10] == "2022-10-01" and str(test.column("Date").max())[:10] == "2023-10-15"


def test_split_errors():
    t = make_table(daily("A", "2020-01-01", {"x": [1.0, 2.0]}))
    with pytest.raises(SplitError):
        SplitSpec.around(t, dt.date(2019, 1, 1))
    with pytest.raises(SplitError):
        SplitSpec.around(t, dt.date(2021, 1, 1))
    with pytest.raises(ConfigError):
        SplitSpec(dt.date(2020, 1, 2), dt.date(2020, 1, 1), dt.date(2020, 1, 3))


def test_stage_order_enforced():
    t = make_table(daily("A", "2020-01-01", {"PM2.5": [1.0, np.nan, 3.0, 4.0]}))
    imp, _ = impute_group_mean(t)
    with pytest.raises(PipelineOrderError):
        fill_remaining_zero(t)  # before impute
    sel = select_features(imp, [])
    with pytest.raises(PipelineOrderError):
        fill_remaining_zero(sel)
    train, test = time_split(sel, SplitSpec(dt.date(2020, 1, 1), dt.date(2020, 1, 3), dt.date(2020, 1, 4)))
    with pytest.raises(PipelineOrderError):
        impute_group_mean(train)
    with pytest.raises(PipelineOrderError):
        time_split(train, SplitSpec(dt.date(2020, 1, 1), dt.date(2020, 1, 2), dt.date(2020, 1, 4)))
    with pytest.raises(PipelineOrderError):
        one_hot(test, ["City"])  # encoding fitted on test
    enc_train, _ = one_hot(train, ["City"])
    scaled = apply_scaler(fit_scaler(enc_train), enc_train)
    with pytest.raises(PipelineOrderError):
        one_hot(scaled, ["State"])
    with pytest.raises(PipelineOrderError):
        fit_scaler(test)
