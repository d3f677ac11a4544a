"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``. The heavy criteria share
two session-scoped synthetic datasets and a cross-criterion cache of trained
models, so the whole suite stays within its stated runtime bounds on a single
laptop-class core.
"""

import json
import time
from datetime import date, timedelta

import numpy as np
import pytest

from hydroseq.cli import main as cli_main
from hydroseq.dates import DateRange, SplitSpec
from hydroseq.experiments import ExperimentSpec, FeatureSet, evaluate_model, train_model
from hydroseq.ingest import (load_data_dir, parse_forcing_csv, parse_gauge_csv,
                             parse_natural_monthly_csv)
from hydroseq.lstm import TrainConfig, grad_check, init_params
from hydroseq.metrics import StationScore, nse, summarize, write_report
from hydroseq.seasonal import (SeasonalSpec, build_monthly_samples, fit_monthly_normalizer,
                               init_encoder_decoder, predict_hybrid, seasonal_grad_check,
                               train_hybrid)
from hydroseq.synthbasin import (BasinSpec, DamSpec, apply_dam, evaporation_loss,
                                 gen_weather, linear_reservoir, make_dataset)
from hydroseq.timeseries import build_dataset, monthly_aggregate


def report_line(num, name, ok, detail):
    print(f"\nCRITERION {num} ({name}): {'PASS' if ok else 'FAIL'} - {detail}")


def split_days(start, n_train, n_val, n_test):
    t0 = start
    t1 = t0 + timedelta(days=n_train - 1)
    v0, v1 = t1 + timedelta(days=1), t1 + timedelta(days=n_val)
    s0, s1 = v1 + timedelta(days=1), v1 + timedelta(days=n_test)
    return SplitSpec(train=DateRange(t0, t1), validation=DateRange(v0, v1),
                     test=DateRange(s0, s1))


# ---------------------------------------------------------------------------
# Shared fixtures


@pytest.fixture(scope="session")
def dataset_a(tmp_path_factory):
    """Noiseless single basin with 3,000 train days."""
    split = split_days(date(2001, 1, 1), 3000, 400, 600)
    spec = BasinSpec(basin_id="a1", area_km2=500.0, runoff_coefficient=0.5,
                     storage_coefficient=0.15, precip_mean_mm=4.0, precip_amplitude=0.6,
                     wet_day_prob=0.4, gamma_shape=1.8, noise_std=0.0)
    out = tmp_path_factory.mktemp("accept_a")
    make_dataset([spec], {}, split.full_range.n_days, split, seed=101, out_dir=out)
    dd = load_data_dir(out)
    ds = build_dataset(dd.gauges, dd.forcings, dd.statics, split, dam_levels=dd.dams)
    return ds, split


def heterogeneous_specs():
    rs = [0.30, 0.55, 0.40, 0.65, 0.25, 0.50, 0.35, 0.60, 0.45, 0.50]
    ks = [0.08, 0.30, 0.12, 0.22, 0.35, 0.10, 0.25, 0.15, 0.18, 0.12]
    pm = [3.0, 5.5, 4.0, 6.5, 2.5, 7.0, 3.5, 5.0, 4.5, 5.0]
    ampl = [0.45, 0.80, 0.55, 0.70, 0.60, 0.85, 0.50, 0.75, 0.65, 0.85]
    wetp = [0.30, 0.55, 0.35, 0.60, 0.25, 0.50, 0.40, 0.45, 0.55, 0.45]
    phase = [0.0, 30.0, 60.0, 90.0, 120.0, 15.0, 45.0, 75.0, 105.0, 0.0]
    evap = [0.30, 0.60, 0.40, 0.55, 0.35, 0.70, 0.45, 0.65, 0.50, 0.50]
    shape = [1.5, 2.0, 1.7, 2.2, 1.6, 1.9, 1.8, 2.1, 1.7, 1.8]
    specs = []
    for i in range(10):
        specs.append(BasinSpec(
            basin_id=f"b{i + 1:02d}", area_km2=300.0 + 60.0 * i,
            runoff_coefficient=rs[i], storage_coefficient=ks[i],
            precip_mean_mm=pm[i], precip_amplitude=ampl[i], wet_day_prob=wetp[i],
            gamma_shape=shape[i], season_phase_days=phase[i],
            temp_phase_days=phase[i] + 182.6, temp_noise_k=2.0,
            evap_coefficient=evap[i], noise_std=0.03, precip_obs_noise_std=0.10))
    return specs


@pytest.fixture(scope="session")
def dataset_b(tmp_path_factory):
    """Ten heterogeneous basins; b10 is regulated by a storage dam that
    withholds roughly 40% of its wet-season inflow."""
    split = split_days(date(2001, 1, 1), 1800, 400, 900)
    days = split.full_range.n_days
    specs = heterogeneous_specs()
    b10 = specs[9]
    w = gen_weather(b10, days, 202)
    p_eff = w.true_precip_mm * (1.0 - evaporation_loss(b10, w.channels["t2m_k"]))
    mean_q = linear_reservoir(p_eff, b10).mean()
    dam = DamSpec(dam_id="dam10", capacity=150.0 * mean_q, target_release=mean_q)
    out = tmp_path_factory.mktemp("accept_b")
    make_dataset(specs, {"b10": dam}, days, split, seed=202, out_dir=out)
    dd = load_data_dir(out)
    ds = build_dataset(dd.gauges, dd.forcings, dd.statics, split, dam_levels=dd.dams)
    return ds, split, out


_MODELS: dict = {}


def trained(ds, variant, seed, scope=None, dam_ids=(), hidden=32, epochs=20, patience=3):
    """Train-or-fetch: criteria 5, 6, and 7 share pooled and scoped models."""
    key = (variant, tuple(scope or ()), tuple(dam_ids), seed)
    if key not in _MODELS:
        fs = FeatureSet(variant)
        if dam_ids:
            fs = fs.plus_dam_release(dam_ids)
        spec = ExperimentSpec(
            feature_set=fs, scope=scope, hidden_size=hidden,
            train_config=TrainConfig(learning_rate=3e-3, batch_size=256,
                                     max_epochs=epochs, patience=patience, seed=seed))
        model = train_model(spec, ds)
        _MODELS[key] = (model, evaluate_model(model, ds))
    return _MODELS[key]


# ---------------------------------------------------------------------------
# Criteria


def test_criterion_1_gradient_correctness():
    t0 = time.perf_counter()
    worst_lstm = 0.0
    for seed in range(20):
        rng = np.random.default_rng([seed, 99])
        H = int(rng.integers(1, 9)); F = int(rng.integers(1, 7)); L = int(rng.integers(1, 11))
        p = init_params(H, F, seed)
        err = grad_check(p, rng.standard_normal((L, F)), float(rng.standard_normal()), eps=1e-5)
        worst_lstm = max(worst_lstm, err)

    worst_joint = 0.0
    for seed in range(20):
        rng = np.random.default_rng([seed, 98])
        H = int(rng.integers(1, 9)); E = int(rng.integers(1, 7)); D = int(rng.integers(1, 5))
        Te = int(rng.integers(1, 11)); Th = int(rng.integers(1, 5))
        spec = SeasonalSpec(encoder_length=Te, horizon=Th,
                            encoder_channels=tuple(f"e{i}" for i in range(E)),
                            decoder_channels=tuple(f"d{i}" for i in range(D)), hidden_size=H)
        p = init_encoder_decoder(spec, seed)
        err = seasonal_grad_check(p, rng.standard_normal((Te, E)),
                                  rng.standard_normal((Th, D)),
                                  rng.standard_normal(Th), eps=1e-5)
        worst_joint = max(worst_joint, err)
    wall = time.perf_counter() - t0
    ok = worst_lstm < 1e-4 and worst_joint < 1e-4 and wall < 30.0
    report_line(1, "gradient correctness", ok,
                f"lstm max rel err {worst_lstm:.2e}, joint {worst_joint:.2e}, {wall:.1f}s")
    assert worst_lstm < 1e-4
    assert worst_joint < 1e-4
    assert wall < 30.0


def test_criterion_2_nse_identities():
    obs = np.array([4.0, 7.0, 2.5, 9.0])
    perfect = nse(obs, obs.copy())
    mean_pred = nse(obs, np.full_like(obs, obs.mean()))
    hand = nse([1.0, 2.0, 3.0], [1.0, 1.0, 3.0])
    ok = perfect == 1.0 and abs(mean_pred) <= 1e-12 and abs(hand - 0.5) <= 1e-12
    report_line(2, "NSE identities", ok,
                f"perfect {perfect}, mean {mean_pred:.1e}, hand {hand}")
    assert perfect == 1.0
    assert abs(mean_pred) <= 1e-12
    assert abs(hand - 0.5) <= 1e-12


def test_criterion_3_oracle_conservation():
    rng = np.random.default_rng(7)
    days = 10_000
    spec = BasinSpec(basin_id="c", runoff_coefficient=0.45, storage_coefficient=0.18)
    precip = rng.gamma(1.6, 2.5, size=days)
    q = linear_reservoir(precip, spec)
    inflow = spec.runoff_coefficient * precip
    s = 0.0
    for t in range(days):  # same recursion replayed for the closing storage
        s = s + inflow[t] - spec.storage_coefficient * s
    res_resid = abs((inflow.sum() - q.sum()) - s)
    res_ok = res_resid <= 1e-9 * inflow.sum()

    dam = DamSpec(dam_id="d", capacity=60.0, target_release=1.1, initial_storage=5.0)
    out, level = apply_dam(q, dam)
    s_end = dam.initial_storage
    for t in range(days):
        s_end += q[t]
        rel = min(dam.target_release, s_end)
        s_end -= rel
        spill = max(s_end - dam.capacity, 0.0)
        s_end -= spill
    dam_resid = abs((q.sum() - out.sum()) - (s_end - dam.initial_storage))
    dam_ok = dam_resid <= 1e-9 * q.sum()
    level_ok = bool(np.all((level >= 0.0) & (level <= 1.0)))
    ok = res_ok and dam_ok and level_ok
    report_line(3, "oracle conservation", ok,
                f"reservoir residual {res_resid:.2e}, dam residual {dam_resid:.2e} "
                f"over {days} days")
    assert res_ok and dam_ok and level_ok


def test_criterion_4_single_basin_learnability(dataset_a):
    ds, _ = dataset_a
    t0 = time.perf_counter()
    scores = []
    for seed in (1, 2, 3):
        spec = ExperimentSpec(
            feature_set=FeatureSet("precip_only"), hidden_size=64,
            train_config=TrainConfig(learning_rate=3e-3, batch_size=256,
                                     max_epochs=20, patience=5, seed=seed))
        model = train_model(spec, ds)
        rep = evaluate_model(model, ds)
        scores.append(rep.stations[0].nse)
    wall = time.perf_counter() - t0
    med = float(np.median(scores))
    ok = med >= 0.7 and wall < 180.0
    report_line(4, "single-basin learnability", ok,
                f"test NSE per seed {[round(s, 3) for s in scores]}, median {med:.3f}, "
                f"{wall:.0f}s (H=64, <=20 epochs)")
    assert med >= 0.7
    assert wall < 180.0


def test_criterion_5_feature_regime_ordering(dataset_b):
    ds, _, _ = dataset_b
    t0 = time.perf_counter()
    medians = {}
    for variant in ("precip_only", "precip_plus_dynamic", "dynamic_plus_static"):
        per_seed = [trained(ds, variant, seed)[1].median_nse for seed in (1, 2, 3)]
        medians[variant] = float(np.median(per_seed))
    wall = time.perf_counter() - t0
    po, ppd, dps = (medians["precip_only"], medians["precip_plus_dynamic"],
                    medians["dynamic_plus_static"])
    ok = dps >= ppd >= po and (dps - po) >= 0.05 and wall < 600.0
    report_line(5, "feature-regime ordering", ok,
                f"median test NSE: precip_only {po:.3f} <= precip+dynamic {ppd:.3f} "
                f"<= dynamic+static {dps:.3f}; spread {dps - po:.3f}; {wall:.0f}s")
    assert dps >= ppd >= po
    assert dps - po >= 0.05
    assert wall < 600.0


def station_nse(report, sid):
    return next(s.nse for s in report.stations if s.station_id == sid)


def test_criterion_6_dam_channel_gain(dataset_b):
    ds, _, _ = dataset_b
    t0 = time.perf_counter()
    seeds = (1, 2, 3, 4, 5)
    without = [station_nse(trained(ds, "precip_plus_dynamic", s, scope=("b10",))[1], "b10")
               for s in seeds]
    withdam = [station_nse(trained(ds, "precip_plus_dynamic", s, scope=("b10",),
                                   dam_ids=("dam10",))[1], "b10")
               for s in seeds]
    wall = time.perf_counter() - t0
    gain = float(np.median(withdam) - np.median(without))
    ok = gain >= 0.05 and wall < 300.0
    report_line(6, "dam-level channel gain", ok,
                f"median NSE with dam {np.median(withdam):.3f} vs without "
                f"{np.median(without):.3f}; gain {gain:.3f}; {wall:.0f}s")
    assert gain >= 0.05
    assert wall < 300.0


def test_criterion_7_single_station_beats_pooled(dataset_b):
    ds, _, _ = dataset_b
    seeds = (1, 2, 3)
    pooled = [station_nse(trained(ds, "precip_plus_dynamic", s)[1], "b10") for s in seeds]
    single = [station_nse(trained(ds, "precip_plus_dynamic", s, scope=("b10",))[1], "b10")
              for s in seeds]
    ok = float(np.median(single)) > float(np.median(pooled))
    report_line(7, "single-station vs pooled", ok,
                f"at the regulated gauge: single median {np.median(single):.3f} > "
                f"pooled median {np.median(pooled):.3f}")
    assert np.median(single) > np.median(pooled)


def test_criterion_8_hybrid_gain(dataset_b):
    _, split, out = dataset_b
    gauge_m = monthly_aggregate(parse_gauge_csv(out / "gauges" / "b10.csv"))
    precip_m = monthly_aggregate(parse_forcing_csv(out / "forcing" / "b10.csv"))["precip_mm"]
    natural_m = parse_natural_monthly_csv(out / "natural_monthly.csv")["b10"]
    stats = fit_monthly_normalizer(gauge_m, precip_m, natural_m, split.train)
    tr = build_monthly_samples(gauge_m, precip_m, natural_m, split.train, stats)
    va = build_monthly_samples(gauge_m, precip_m, natural_m, split.validation, stats)
    te = build_monthly_samples(gauge_m, precip_m, natural_m, split.test, stats)
    obs = np.array([s.target for s in te])
    nat_by_month = {natural_m.months.year_month_at(i): natural_m.values[i]
                    for i in range(natural_m.months.length) if not natural_m.missing[i]}
    proxy_nse = nse(obs, np.array([nat_by_month[s.target_month] for s in te]))

    hybrid_scores = []
    for seed in (1, 2, 3):
        cfg = TrainConfig(learning_rate=3e-3, batch_size=64, max_epochs=120,
                          patience=20, seed=seed)
        model = train_hybrid(tr, va, cfg, hidden_size=16, stats=stats)
        hybrid_scores.append(nse(obs, predict_hybrid(model, te)))
    med = float(np.median(hybrid_scores))
    ok = med >= proxy_nse + 0.05
    report_line(8, "hybrid gain over naturalized proxy", ok,
                f"hybrid median test NSE {med:.3f} vs proxy {proxy_nse:.3f}")
    assert med >= proxy_nse + 0.05


def test_criterion_9_determinism(tmp_path):
    split = {"train": ["2001-01-01", "2001-07-19"],
             "validation": ["2001-07-20", "2001-09-17"],
             "test": ["2001-09-18", "2001-11-16"]}
    spec = {"split": split, "seed": 5,
            "basins": [{"basin_id": "s1", "noise_std": 0.05},
                       {"basin_id": "s2", "season_phase_days": 50.0}]}
    spec_path = tmp_path / "basins.json"
    spec_path.write_text(json.dumps(spec))

    def one_round(tag):
        data = tmp_path / f"data_{tag}"
        run = tmp_path / f"run_{tag}"
        ev = tmp_path / f"eval_{tag}"
        assert cli_main(["synth", "--spec", str(spec_path), "--out", str(data),
                         "--threads", "1"]) == 0
        cfgp = tmp_path / f"run_{tag}.json"
        cfgp.write_text(json.dumps({
            "data": str(data), "out": str(run),
            "experiment": {"feature_set": {"variant": "precip_only"},
                           "sequence_length": 10, "hidden_size": 8,
                           "train_config": {"max_epochs": 3, "batch_size": 64, "seed": 2},
                           "split": split}}))
        assert cli_main(["train", "--config", str(cfgp), "--threads", "1"]) == 0
        assert cli_main(["evaluate", "--checkpoint", str(run / "checkpoint.json"),
                         "--data", str(data), "--out", str(ev), "--threads", "1"]) == 0
        blobs = {}
        for rel in ("gauges/s1.csv", "forcing/s1.csv", "manifest.json"):
            blobs[f"data:{rel}"] = (data / rel).read_bytes()
        blobs["checkpoint"] = (run / "checkpoint.json").read_bytes()
        for rel in ("report.json", "nse_by_station.csv", "nse_cdf.csv"):
            blobs[f"eval:{rel}"] = (ev / rel).read_bytes()
        return blobs

    a = one_round("a")
    b = one_round("b")
    same = {k: a[k] == b[k] for k in a}
    ok = all(same.values())
    report_line(9, "byte-identical reruns", ok,
                f"{sum(same.values())}/{len(same)} artifacts identical "
                f"(dataset, checkpoint, report, CSVs)")
    assert ok, {k: v for k, v in same.items() if not v}


def test_criterion_10_report_fidelity(tmp_path):
    scores = [StationScore("s3", 0.42, 100), StationScore("s1", -0.8, 90),
              StationScore("s2", 0.11, 95)]
    rep = summarize(scores)
    doc = rep.to_json()
    fields_ok = all(k in doc for k in ("mean_nse", "median_nse", "n_below_zero"))
    write_report(rep, tmp_path)
    lines = (tmp_path / "nse_cdf.csv").read_text().strip().splitlines()[1:]
    probs = [float(l.split(",")[1]) for l in lines]
    n = len(scores)
    probs_ok = probs == [(i + 1) / n for i in range(n)]
    below_ok = doc["n_below_zero"] == 1
    ok = fields_ok and probs_ok and below_ok
    report_line(10, "report fidelity", ok,
                f"summary fields present; cdf probabilities {probs} == i/N; "
                f"n_below_zero {doc['n_below_zero']}")
    assert fields_ok and probs_ok and below_ok
