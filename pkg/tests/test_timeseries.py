from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydroseq.dates import DateIndex, DateRange, SplitSpec
from hydroseq.timeseries import (STD_FLOOR, ForcingSeries, GaugeSeries, StaticAttributes,
                                 WindowPolicy, build_dataset, fit_normalizer, make_windows,
                                 monthly_aggregate, transform)


def make_gauge(values, missing=None, start=date(2001, 1, 1), sid="s1"):
    values = np.asarray(values, dtype=float)
    n = len(values)
    missing = np.zeros(n, bool) if missing is None else np.asarray(missing, bool)
    vals = values.copy()
    vals[missing] = np.nan
    return GaugeSeries(station_id=sid, dates=DateIndex(start, n), discharge=vals,
                       quality=["1"] * n, missing=missing)


def make_forcing(channels, missing=None, start=date(2001, 1, 1), sid="s1"):
    n = len(next(iter(channels.values())))
    if missing is None:
        missing = {k: np.zeros(n, bool) for k in channels}
    vals = {}
    for k, v in channels.items():
        a = np.asarray(v, dtype=float).copy()
        a[missing[k]] = np.nan
        vals[k] = a
    return ForcingSeries(station_id=sid, dates=DateIndex(start, n), channels=vals, missing=missing)


def split_for(n_train, n_val, n_test, start=date(2001, 1, 1)):
    t0 = start
    t1 = t0 + timedelta(days=n_train - 1)
    v0 = t1 + timedelta(days=1)
    v1 = v0 + timedelta(days=n_val - 1)
    s0 = v1 + timedelta(days=1)
    s1 = s0 + timedelta(days=n_test - 1)
    return SplitSpec(train=DateRange(t0, t1), validation=DateRange(v0, v1),
                     test=DateRange(s0, s1))


def simple_dataset(n=60, sids=("s1", "s2"), seed=0, mask_frac=0.0, statics=False):
    rng = np.random.default_rng(seed)
    split = split_for(n - 20, 10, 10)
    gauges, forcings, stats = [], [], []
    for sid in sids:
        m = rng.random(n) < mask_frac
        gauges.append(make_gauge(rng.uniform(0.5, 9.0, n), m, sid=sid))
        fm = {"precip_mm": rng.random(n) < mask_frac, "t2m_k": rng.random(n) < mask_frac}
        forcings.append(make_forcing(
            {"precip_mm": rng.uniform(0, 12, n), "t2m_k": rng.uniform(280, 300, n)},
            fm, sid=sid))
        stats.append(StaticAttributes(sid, ["area_km2", "slope"],
                                      np.array([100.0 + 10 * len(stats), 0.2])))
    return build_dataset(gauges, forcings, stats if statics else None, split), split


# ---------------------------------------------------------------------------
# build_dataset


def test_build_two_full_stations():
    ds, _ = simple_dataset()
    assert ds.station_ids() == ["s1", "s2"]
    assert not ds.exclusions


def test_missing_forcing_excludes_station():
    split = split_for(20, 5, 5)
    n = 30
    gauges = [make_gauge(np.ones(n) * 2, sid=s) for s in ("s1", "s2", "s3")]
    forcings = [make_forcing({"precip_mm": np.ones(n)}, sid=s) for s in ("s1", "s3")]
    ds = build_dataset(gauges, forcings, None, split)
    assert ds.station_ids() == ["s1", "s3"]
    assert ds.exclusions == [("s2", "no forcing series")]


def test_duplicate_station_rejected():
    split = split_for(20, 5, 5)
    g = [make_gauge(np.ones(30), sid="s1"), make_gauge(np.ones(30), sid="s1")]
    f = [make_forcing({"precip_mm": np.ones(30)}, sid="s1")]
    with pytest.raises(ValueError, match="duplicate"):
        build_dataset(g, f, None, split)


def test_no_coverage_is_an_error():
    split = split_for(20, 5, 5, start=date(2010, 1, 1))
    g = [make_gauge(np.ones(30), start=date(2001, 1, 1))]
    f = [make_forcing({"precip_mm": np.ones(30)}, start=date(2001, 1, 1))]
    with pytest.raises(ValueError, match="empty intersection"):
        build_dataset(g, f, None, split)


def test_series_reindexed_onto_split_calendar():
    split = split_for(20, 5, 5)
    # gauge starts 5 days late: first 5 calendar days must be masked
    g = [make_gauge(np.ones(40) * 3, start=date(2001, 1, 6))]
    f = [make_forcing({"precip_mm": np.ones(40)}, start=date(2001, 1, 6))]
    ds = build_dataset(g, f, None, split)
    st = ds.stations["s1"]
    assert ds.calendar.length == 30
    assert st.discharge_missing[:5].all()
    assert not st.discharge_missing[5:].any()


# ---------------------------------------------------------------------------
# Normalizer and transform


def test_fit_normalizer_population_std():
    split = split_for(3, 2, 2)
    g = [make_gauge([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])]
    f = [make_forcing({"precip_mm": [1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0]})]
    ds = build_dataset(g, f, None, split)
    stats = fit_normalizer(ds)
    mean, std = stats.channel_stats["precip_mm"]
    assert mean == pytest.approx(2.0, abs=1e-12)
    assert std == pytest.approx(0.816497, abs=1e-6)  # sqrt(2/3)
    dm, dstd = stats.discharge_stats["s1"]
    assert dm == pytest.approx(2.0, abs=1e-12)


def test_constant_channel_floored_and_flagged():
    split = split_for(4, 2, 2)
    g = [make_gauge([1, 2, 3, 4, 5, 6, 7, 8])]
    f = [make_forcing({"precip_mm": [5.0] * 8})]
    ds = build_dataset(g, f, None, split)
    stats = fit_normalizer(ds)
    assert stats.channel_stats["precip_mm"][1] == STD_FLOOR
    assert "precip_mm" in stats.constant_flags


def test_all_masked_channel_errors():
    split = split_for(4, 2, 2)
    g = [make_gauge([1, 2, 3, 4, 5, 6, 7, 8])]
    mask = np.array([True] * 4 + [False] * 4)
    f = [make_forcing({"precip_mm": np.ones(8)}, {"precip_mm": mask})]
    ds = build_dataset(g, f, None, split)
    with pytest.raises(ValueError, match="fewer than 2 unmasked"):
        fit_normalizer(ds)


def test_transform_formula_and_mean_maps_to_zero():
    split = split_for(3, 2, 2)
    g = [make_gauge([2.0, 2.0, 4.0, 1.0, 1.0, 1.0, 1.0])]
    f = [make_forcing({"precip_mm": [1.0, 2.0, 3.0, 4.0, 2.0, 2.0, 2.0]})]
    ds = build_dataset(g, f, None, split)
    stats = fit_normalizer(ds)
    nds = transform(stats, ds, "forward")
    z = nds.stations["s1"].channels["precip_mm"]
    assert z[1] == pytest.approx(0.0, abs=1e-12)            # x == mean -> 0
    assert z[3] == pytest.approx(2.449490, abs=1e-6)        # (4-2)/0.816497


def test_transform_round_trip_exact():
    ds, _ = simple_dataset(n=80, mask_frac=0.1, statics=True)
    stats = fit_normalizer(ds)
    back = transform(stats, transform(stats, ds, "forward"), "inverse")
    for sid in ds.stations:
        a, b = ds.stations[sid], back.stations[sid]
        keep = ~a.discharge_missing
        np.testing.assert_allclose(b.discharge[keep], a.discharge[keep], rtol=1e-12)
        for name in a.channels:
            keep = ~a.channel_missing[name]
            np.testing.assert_allclose(b.channels[name][keep], a.channels[name][keep], rtol=1e-12)
        np.testing.assert_allclose(b.static, a.static, rtol=1e-12)


def test_transform_round_trip_with_log_discharge():
    ds, _ = simple_dataset(n=80)
    stats = fit_normalizer(ds, log_discharge=True)
    back = transform(stats, transform(stats, ds, "forward"), "inverse")
    for sid in ds.stations:
        keep = ~ds.stations[sid].discharge_missing
        np.testing.assert_allclose(back.stations[sid].discharge[keep],
                                   ds.stations[sid].discharge[keep], rtol=1e-12)


def test_transform_unknown_channel_errors():
    ds, _ = simple_dataset()
    stats = fit_normalizer(ds)
    del stats.channel_stats["t2m_k"]
    with pytest.raises(ValueError, match="unknown channel"):
        transform(stats, ds, "forward")


def test_no_mutation_of_inputs():
    ds, _ = simple_dataset(n=40)
    stats = fit_normalizer(ds)
    before = {sid: st.discharge.copy() for sid, st in ds.stations.items()}
    transform(stats, ds, "forward")
    for sid in ds.stations:
        np.testing.assert_array_equal(ds.stations[sid].discharge[~ds.stations[sid].discharge_missing],
                                      before[sid][~ds.stations[sid].discharge_missing])


# ---------------------------------------------------------------------------
# Windowing


def windows_dataset(n, mask_frac=0.0, seed=0, target_mask=None):
    rng = np.random.default_rng(seed)
    split = split_for(n - 10, 5, 5)
    miss = {"precip_mm": rng.random(n) < mask_frac}
    forcing = make_forcing({"precip_mm": rng.uniform(0, 5, n)}, miss)
    gm = np.zeros(n, bool) if target_mask is None else np.asarray(target_mask, bool)
    gauge = make_gauge(rng.uniform(0.1, 3, n), gm)
    return build_dataset([gauge], [forcing], None, split), split


def test_window_count_boundary():
    ds, split = windows_dataset(31)
    w = make_windows(ds, 30, ["precip_mm"], split.full_range)
    assert len(w) == 1
    assert w[0].target_date == date(2001, 1, 31)


def test_window_count_forty_days():
    ds, split = windows_dataset(40)
    assert len(make_windows(ds, 30, ["precip_mm"], split.full_range)) == 10


def test_masked_target_drops_window():
    tm = np.zeros(40, bool)
    tm[35] = True
    ds, split = windows_dataset(40, target_mask=tm)
    w = make_windows(ds, 30, ["precip_mm"], split.full_range)
    assert len(w) == 9
    assert all(s.target_date != date(2001, 2, 5) for s in w)


def test_window_interpolation_is_linear():
    n = 12
    split = split_for(n - 4, 2, 2)
    vals = np.arange(n, dtype=float) * 10
    miss = np.zeros(n, bool)
    miss[4:6] = True  # 2-day gap inside every window that spans it
    forcing = make_forcing({"precip_mm": vals}, {"precip_mm": miss})
    gauge = make_gauge(np.ones(n))
    ds = build_dataset([gauge], [forcing], None, split)
    relaxed = WindowPolicy(max_gap_days=3, max_masked_frac=0.25)
    w = make_windows(ds, 10, ["precip_mm"], split.full_range, policy=relaxed)
    assert len(w) == 2
    # linear fill restores the ramp exactly
    np.testing.assert_allclose(w[0].inputs[:, 0], vals[:10], rtol=1e-12)
    # the default 10% cap drops the same windows
    assert make_windows(ds, 10, ["precip_mm"], split.full_range) == []


def test_static_suffix_replicated_on_every_row():
    ds, split = simple_dataset(n=50, statics=True)
    w = make_windows(ds, 10, ["precip_mm", "static:area_km2"], ds.split.train)
    for s in w:
        col = s.inputs[:, 1]
        assert np.all(col == col[0])


def brute_force_count(target_missing, row_missing, L, lo, hi, policy):
    count = 0
    for t in range(max(L, lo), hi):
        if target_missing[t]:
            continue
        rm = list(row_missing[t - L:t])
        n_masked = sum(rm)
        if n_masked == 0:
            count += 1
            continue
        if n_masked > policy.max_masked_frac * L:
            continue
        runs, start = [], None
        for i, m in enumerate(rm):
            if m and start is None:
                start = i
            elif not m and start is not None:
                runs.append((start, i - 1))
                start = None
        if start is not None:
            runs.append((start, L - 1))
        if any(b - a + 1 > policy.max_gap_days or a == 0 or b == L - 1 for a, b in runs):
            continue
        count += 1
    return count


@pytest.mark.parametrize("seed", range(8))
def test_window_count_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(50, 101))
    L = int(rng.choice([5, 10, 30]))
    mask_frac = float(rng.choice([0.0, 0.05, 0.15, 0.3]))
    ds, split = windows_dataset(n, mask_frac=mask_frac, seed=seed + 100)
    tm = np.random.default_rng(seed + 200).random(n) < 0.1
    ds.stations["s1"].discharge_missing |= tm
    policy = WindowPolicy()
    got = len(make_windows(ds, L, ["precip_mm"], split.full_range, policy=policy))
    want = brute_force_count(ds.stations["s1"].discharge_missing,
                             ds.stations["s1"].channel_missing["precip_mm"],
                             L, 0, n, policy)
    assert got == want


# ---------------------------------------------------------------------------
# Monthly aggregation


def test_monthly_precip_sum():
    f = make_forcing({"precip_mm": np.ones(31)})  # January 2001
    monthly = monthly_aggregate(f)["precip_mm"]
    assert monthly.values[0] == pytest.approx(31.0)
    assert not monthly.missing[0]


def test_monthly_discharge_mean_constant():
    g = make_gauge(np.full(31, 5.0))
    m = monthly_aggregate(g)
    assert m.values[0] == pytest.approx(5.0)


def test_monthly_mean_hand_case():
    # April 2001 has 30 days: 15 at 2 and 15 at 4 average to 3
    vals = np.array([2.0] * 15 + [4.0] * 15)
    g = make_gauge(vals, start=date(2001, 4, 1))
    m = monthly_aggregate(g)
    assert m.values[0] == pytest.approx(3.0)


def test_month_masked_above_threshold():
    miss = np.zeros(31, bool)
    miss[:7] = True  # 7/31 = 22.6% > 20%
    g = make_gauge(np.full(31, 2.0), miss)
    assert monthly_aggregate(g).missing[0]
    miss6 = np.zeros(31, bool)
    miss6[:6] = True  # 19.4% stays usable
    g2 = make_gauge(np.full(31, 2.0), miss6)
    m2 = monthly_aggregate(g2)
    assert not m2.missing[0]
    assert m2.values[0] == pytest.approx(2.0)


def test_monthly_constant_series_property():
    n = 365
    g = make_gauge(np.full(n, 7.0))
    m = monthly_aggregate(g)
    assert np.allclose(m.values[~m.missing], 7.0)
    f = make_forcing({"precip_mm": np.full(n, 2.0)})
    mp = monthly_aggregate(f)["precip_mm"]
    for i in range(mp.months.length):
        if not mp.missing[i]:
            y, mo = mp.months.year_month_at(i)
            from hydroseq.dates import days_in_month
            assert mp.values[i] == pytest.approx(2.0 * days_in_month(y, mo))


def test_monthly_requires_complete_month():
    g = make_gauge(np.ones(20), start=date(2001, 1, 10))
    with pytest.raises(ValueError, match="complete calendar month"):
        monthly_aggregate(g)


# ---------------------------------------------------------------------------
# Property: masking monotonicity through the stack


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_more_masking_never_increases_windows(seed):
    rng = np.random.default_rng(seed)
    n = 60
    base = rng.random(n) < 0.08
    extra = base | (rng.random(n) < 0.08)
    counts = []
    for miss in (base, extra):
        forcing = make_forcing({"precip_mm": rng.uniform(0, 5, n)}, {"precip_mm": miss.copy()})
        gauge = make_gauge(np.ones(n))
        ds = build_dataset([gauge], [forcing], None, split_for(n - 10, 5, 5))
        counts.append(len(make_windows(ds, 10, ["precip_mm"], ds.split.full_range)))
    assert counts[1] <= counts[0]
