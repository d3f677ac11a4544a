"""Command-line pipeline runner.

Subcommands: ``synth`` (generate a synthetic dataset), ``train`` (daily,
hybrid, or seasonal model), ``evaluate`` (per-station report), ``forecast``
(write predictions), ``report`` (aggregate evaluation reports into one
comparison table), ``gradcheck`` (finite-difference gradient verification).

``--config FILE`` supplies values as JSON; explicit flags win over file
values. Exit codes: 0 success, 1 domain error (one machine-readable JSON line
on stderr), 2 usage error. Every run with an output directory appends a line
with its config hash and outcome to ``<out>/runs.log``. With ``--threads 1``
(the default) identical config and seed reproduce outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .dates import DateRange, SplitSpec, days_in_month
from .experiments import ExperimentSpec, TrainedModel, evaluate_model, predict_series, train_model
from .ingest import load_data_dir
from .lstm import TrainConfig, grad_check, init_params
from .metrics import evaluate_stations, write_report
from .seasonal import (HybridModel, SeasonalModel, SeasonalSpec, build_monthly_samples,
                       build_seasonal_samples, fit_monthly_normalizer, init_encoder_decoder,
                       predict_hybrid, seasonal_forecast, seasonal_grad_check, train_hybrid,
                       train_seasonal)
from .synthbasin import BasinSpec, DamSpec, make_dataset
from .timeseries import build_dataset, monthly_aggregate

GRADCHECK_TOLERANCE = 1e-4


@dataclass
class RunConfig:
    """One resolved invocation: the subcommand plus its merged options."""

    command: str
    options: dict


def _default_threads() -> int:
    env = os.environ.get("HYDROSEQ_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hydroseq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="JSON file with option values (flags win)")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: HYDROSEQ_THREADS or 1)")

    p = sub.add_parser("synth", help="generate a synthetic basin dataset")
    p.add_argument("--spec", help="JSON file: basins, dams, split")
    p.add_argument("--days", type=int, help="days to generate (>= split span)")
    p.add_argument("--seed", type=int, help="generator seed")
    common(p)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--data", help="data directory (gauges/, forcing/, ...)")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.add_argument("--mode", choices=["daily", "hybrid", "seasonal"], help="model kind")
    common(p)

    p = sub.add_parser("evaluate", help="score a checkpoint per station")
    p.add_argument("--checkpoint", help="checkpoint JSON")
    p.add_argument("--data", help="data directory")
    p.add_argument("--range", dest="range_name", choices=["train", "validation", "test"],
                   help="named split range (default test)")
    p.add_argument("--start", help="explicit range start (ISO date)")
    p.add_argument("--end", help="explicit range end (ISO date)")
    common(p)

    p = sub.add_parser("forecast", help="write model predictions")
    p.add_argument("--checkpoint", help="checkpoint JSON")
    p.add_argument("--data", help="data directory")
    p.add_argument("--range", dest="range_name", choices=["train", "validation", "test"])
    p.add_argument("--start", help="explicit range start (ISO date)")
    p.add_argument("--end", help="explicit range end (ISO date)")
    p.add_argument("--origin", help="seasonal only: last hindcast month YYYY-MM")
    common(p)

    p = sub.add_parser("report", help="aggregate evaluation reports into a table")
    p.add_argument("inputs", nargs="*", help="report.json files")
    p.add_argument("--names", help="comma-separated row names (default: file stems)")
    common(p)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--h", type=int, default=4, help="hidden size")
    p.add_argument("--f", type=int, default=3, help="feature count")
    p.add_argument("--l", type=int, default=5, help="sequence length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seasonal", action="store_true",
                   help="check the joint encoder-decoder gradients instead")
    common(p)

    return parser


def parse_args(argv) -> RunConfig:
    """Strict parse + config-file merge; flags win over file values."""
    ns = _build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config") and v is not None}
    merged: dict = {}
    if ns.config:
        with open(ns.config, encoding="utf-8") as fh:
            merged.update(json.load(fh))
    merged.update(flags)
    merged.setdefault("threads", _default_threads())
    return RunConfig(command=ns.command, options=merged)


# ---------------------------------------------------------------------------
# Helpers


def _config_hash(config: RunConfig) -> str:
    blob = json.dumps({"command": config.command, "options": config.options},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _log_run(out_dir, config: RunConfig, outcome: str):
    if not out_dir:
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(out_dir / "runs.log", "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} command={config.command} config_sha256={_config_hash(config)} "
                 f"outcome={outcome}\n")


def _require(opts: dict, key: str):
    if key not in opts or opts[key] in (None, ""):
        raise ValueError(f"missing required option --{key.replace('_', '-')} "
                         f"(or config key {key!r})")
    return opts[key]


def _resolve_range(opts: dict, split: SplitSpec | None) -> DateRange:
    if opts.get("start") or opts.get("end"):
        if not (opts.get("start") and opts.get("end")):
            raise ValueError("--start and --end must be given together")
        return DateRange.parse([opts["start"], opts["end"]])
    name = opts.get("range_name", "test")
    if split is None:
        raise ValueError("no split available to resolve the range; "
                         "pass --start/--end explicitly")
    return split.range_for(name)


def _split_from_manifest(data_dir) -> SplitSpec | None:
    manifest = Path(data_dir) / "manifest.json"
    if manifest.exists():
        with open(manifest, encoding="utf-8") as fh:
            return SplitSpec.from_json(json.load(fh)["split"])
    return None


def _allowlist(opts: dict) -> set[str] | None:
    codes = opts.get("quality_allowlist")
    return set(codes) if codes else None


def _monthly_inputs(opts: dict, station: str):
    """Monthly gauge/precip/naturalized series for one station."""
    dd = load_data_dir(_require(opts, "data"), _allowlist(opts))
    gauge = next((g for g in dd.gauges if g.station_id == station), None)
    forcing = next((f for f in dd.forcings if f.station_id == station), None)
    if gauge is None or forcing is None:
        raise ValueError(f"station {station} not found in the data directory")
    if station not in dd.natural_monthly:
        raise ValueError(f"no naturalized monthly series for station {station}")
    precip_channel = opts.get("precip_channel", "precip_mm")
    gauge_m = monthly_aggregate(gauge)
    precip_m = monthly_aggregate(forcing)[precip_channel]
    return gauge_m, precip_m, dd.natural_monthly[station]


def _write_monthly_csv(path, months: list[str], values: np.ndarray):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["month", "prediction_m3s"])
        for label, v in zip(months, values):
            w.writerow([label, repr(float(v))])


# ---------------------------------------------------------------------------
# Commands


def _cmd_synth(opts: dict) -> int:
    spec_path = _require(opts, "spec")
    with open(spec_path, encoding="utf-8") as fh:
        spec = json.load(fh)
    split = SplitSpec.from_json(spec["split"])
    days = int(opts.get("days") or spec.get("days") or split.full_range.n_days)
    seed = int(opts["seed"] if opts.get("seed") is not None else spec.get("seed", 0))
    basins = [BasinSpec.from_json(b) for b in spec["basins"]]
    dams = {bid: DamSpec.from_json(d) for bid, d in spec.get("dams", {}).items()}
    out = Path(_require(opts, "out"))
    make_dataset(basins, dams, days, split, seed, out)
    print(f"[hydroseq] wrote {len(basins)} basins ({days} days) under {out}")
    return 0


def _train_daily(opts: dict) -> TrainedModel:
    spec = ExperimentSpec.from_json(_require(opts, "experiment"))
    if spec.split is None:
        raise ValueError("experiment config must include the split")
    if opts.get("seed") is not None:
        spec.train_config.seed = int(opts["seed"])
    dd = load_data_dir(_require(opts, "data"), _allowlist(opts))
    dataset = build_dataset(dd.gauges, dd.forcings, dd.statics, spec.split, dam_levels=dd.dams)
    for sid, reason in dataset.exclusions:
        print(f"[hydroseq] excluded station {sid}: {reason}")
    return train_model(spec, dataset)


def _cmd_train(opts: dict) -> int:
    mode = opts.get("mode", "daily")
    out = Path(_require(opts, "out"))
    out.mkdir(parents=True, exist_ok=True)

    if mode == "daily":
        model = _train_daily(opts)
        label = f"best_epoch={model.best_epoch} validation_nse={model.validation_nse:.4f}"
    else:
        station = _require(opts, "station")
        split = SplitSpec.from_json(_require(opts, "split"))
        cfg = TrainConfig.from_json(opts.get("train_config", {}))
        if opts.get("seed") is not None:
            cfg.seed = int(opts["seed"])
        gauge_m, precip_m, natural_m = _monthly_inputs(opts, station)
        stats = fit_monthly_normalizer(gauge_m, precip_m, natural_m, split.train)
        if mode == "hybrid":
            train_s = build_monthly_samples(gauge_m, precip_m, natural_m, split.train, stats)
            val_s = build_monthly_samples(gauge_m, precip_m, natural_m, split.validation, stats)
            model = train_hybrid(train_s, val_s, cfg,
                                 hidden_size=int(opts.get("hidden_size", 32)), stats=stats)
        else:
            sspec = SeasonalSpec.from_json(opts["seasonal"]) if opts.get("seasonal") \
                else SeasonalSpec()
            train_s = build_seasonal_samples(gauge_m, precip_m, natural_m, split.train, stats, sspec)
            val_s = build_seasonal_samples(gauge_m, precip_m, natural_m, split.validation, stats, sspec)
            model = train_seasonal(train_s, val_s, cfg, sspec, stats)
        label = f"best_epoch={model.best_epoch} validation_nse={model.validation_nse:.4f}"

    ckpt = out / "checkpoint.json"
    save_checkpoint(model, ckpt)
    print(f"[hydroseq] trained {mode} model: {label}")
    print(f"[hydroseq] checkpoint: {ckpt}")
    return 0


def _hybrid_eval_samples(model: HybridModel, opts: dict, rng: DateRange):
    gauge_m, precip_m, natural_m = _monthly_inputs(opts, model.station_id)
    return build_monthly_samples(gauge_m, precip_m, natural_m, rng, model.stats)


def _cmd_evaluate(opts: dict) -> int:
    model = load_checkpoint(_require(opts, "checkpoint"))
    out = Path(_require(opts, "out"))

    if isinstance(model, TrainedModel):
        rng = _resolve_range(opts, model.spec.split)
        dd = load_data_dir(_require(opts, "data"), _allowlist(opts))
        dataset = build_dataset(dd.gauges, dd.forcings, dd.statics, model.spec.split,
                                dam_levels=dd.dams)
        report = evaluate_model(model, dataset, rng, threads=int(opts.get("threads", 1)))
    elif isinstance(model, HybridModel):
        rng = _resolve_range(opts, _split_from_manifest(_require(opts, "data")))
        samples = _hybrid_eval_samples(model, opts, rng)
        if not samples:
            raise ValueError("no monthly samples inside the evaluation range")
        obs = np.array([s.target for s in samples])
        preds = predict_hybrid(model, samples)
        report = evaluate_stations({model.station_id: obs}, {model.station_id: preds})
    elif isinstance(model, SeasonalModel):
        rng = _resolve_range(opts, _split_from_manifest(_require(opts, "data")))
        gauge_m, precip_m, natural_m = _monthly_inputs(opts, model.station_id)
        samples = build_seasonal_samples(gauge_m, precip_m, natural_m, rng, model.stats, model.spec)
        if not samples:
            raise ValueError("no seasonal samples inside the evaluation range")
        obs = np.stack([s.targets for s in samples]).ravel()
        preds = np.concatenate([
            model.stats.denormalize_discharge(
                model.station_id,
                seasonal_forecast(model.params, s.encoder_inputs, s.decoder_inputs))
            for s in samples])
        report = evaluate_stations({model.station_id: obs}, {model.station_id: preds})
    else:
        raise ValueError(f"cannot evaluate a {type(model).__name__}")

    paths = write_report(report, out)
    print(f"[hydroseq] mean NSE {report.mean_nse:.4f}  median {report.median_nse:.4f}  "
          f"below zero {report.n_below_zero}/{len(report.stations)}")
    print(f"[hydroseq] report: {paths['report']}")
    return 0


def _cmd_forecast(opts: dict) -> int:
    model = load_checkpoint(_require(opts, "checkpoint"))
    out = Path(_require(opts, "out"))
    out.mkdir(parents=True, exist_ok=True)

    if isinstance(model, TrainedModel):
        rng = _resolve_range(opts, model.spec.split)
        dd = load_data_dir(_require(opts, "data"), _allowlist(opts))
        dataset = build_dataset(dd.gauges, dd.forcings, dd.statics, model.spec.split,
                                dam_levels=dd.dams)
        preds = predict_series(model, dataset, rng, threads=int(opts.get("threads", 1)))
        pred_dir = out / "predictions"
        pred_dir.mkdir(exist_ok=True)
        days = [rng.start.fromordinal(rng.start.toordinal() + i) for i in range(rng.n_days)]
        for sid in sorted(preds):
            p = preds[sid]
            with open(pred_dir / f"{sid}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["date", "prediction_m3s"])
                for i, d in enumerate(days):
                    if not p.missing[i]:
                        w.writerow([d.isoformat(), repr(float(p.values[i]))])
        print(f"[hydroseq] wrote {len(preds)} prediction series under {pred_dir}")
        return 0

    if isinstance(model, HybridModel):
        rng = _resolve_range(opts, _split_from_manifest(_require(opts, "data")))
        samples = _hybrid_eval_samples(model, opts, rng)
        if not samples:
            raise ValueError("no monthly samples inside the forecast range")
        preds = predict_hybrid(model, samples)
        labels = [f"{y:04d}-{m:02d}" for y, m in (s.target_month for s in samples)]
        path = out / "forecast_monthly.csv"
        _write_monthly_csv(path, labels, preds)
        print(f"[hydroseq] wrote {len(preds)} month-ahead predictions: {path}")
        return 0

    if isinstance(model, SeasonalModel):
        gauge_m, precip_m, natural_m = _monthly_inputs(opts, model.station_id)
        # widest usable range: every month present in the data
        last_y, last_m = gauge_m.months.year_month_at(gauge_m.months.length - 1)
        full = DateRange(date(gauge_m.months.year, gauge_m.months.month, 1),
                         date(last_y, last_m, days_in_month(last_y, last_m)))
        samples = build_seasonal_samples(gauge_m, precip_m, natural_m, full, model.stats, model.spec)
        if not samples:
            raise ValueError("no seasonal sample can be built from the data")
        if opts.get("origin"):
            y, m = (int(x) for x in opts["origin"].split("-"))
            chosen = None
            for s in samples:
                fy, fm = s.first_target_month
                if (fy * 12 + fm) == (y * 12 + m) + 1:
                    chosen = s
                    break
            if chosen is None:
                raise ValueError(f"no seasonal sample with hindcast ending at {opts['origin']}")
        else:
            chosen = samples[-1]
        z = seasonal_forecast(model.params, chosen.encoder_inputs, chosen.decoder_inputs)
        preds = model.stats.denormalize_discharge(model.station_id, z)
        fy, fm = chosen.first_target_month
        labels = []
        for i in range(model.spec.horizon):
            mm = (fy * 12 + fm - 1) + i
            labels.append(f"{mm // 12:04d}-{mm % 12 + 1:02d}")
        path = out / "forecast_seasonal.csv"
        _write_monthly_csv(path, labels, preds)
        print(f"[hydroseq] wrote {model.spec.horizon}-month forecast: {path}")
        return 0

    raise ValueError(f"cannot forecast with a {type(model).__name__}")


def _cmd_report(opts: dict) -> int:
    inputs = opts.get("inputs") or []
    if not inputs:
        raise ValueError("no report files given")
    names = opts["names"].split(",") if opts.get("names") else [Path(p).stem for p in inputs]
    if len(names) != len(inputs):
        raise ValueError(f"{len(names)} names for {len(inputs)} reports")
    out = Path(_require(opts, "out"))
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, path in zip(names, inputs):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        rows.append((name, doc["mean_nse"], doc["median_nse"], doc["n_below_zero"]))
    table = out / "summary_table.csv"
    with open(table, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "mean_nse", "median_nse", "n_below_zero"])
        for name, mean, median, below in rows:
            w.writerow([name, repr(float(mean)), repr(float(median)), below])
    print(f"{'model':<24} {'mean':>8} {'median':>8} {'n<0':>5}")
    for name, mean, median, below in rows:
        print(f"{name:<24} {mean:>8.3f} {median:>8.3f} {below:>5d}")
    print(f"[hydroseq] table: {table}")
    return 0


def _cmd_gradcheck(opts: dict) -> int:
    H, F, L = int(opts.get("h", 4)), int(opts.get("f", 3)), int(opts.get("l", 5))
    seed, eps = int(opts.get("seed", 0)), float(opts.get("eps", 1e-5))
    rng = np.random.default_rng([seed, 7])
    if opts.get("seasonal"):
        spec = SeasonalSpec(encoder_length=L, horizon=max(2, L // 2),
                            encoder_channels=tuple(f"e{i}" for i in range(F)),
                            decoder_channels=tuple(f"d{i}" for i in range(max(1, F - 1))),
                            hidden_size=H)
        params = init_encoder_decoder(spec, seed)
        hind = rng.standard_normal((spec.encoder_length, F))
        drivers = rng.standard_normal((spec.horizon, max(1, F - 1)))
        targets = rng.standard_normal(spec.horizon)
        err = seasonal_grad_check(params, hind, drivers, targets, eps=eps)
        what = "encoder-decoder"
    else:
        params = init_params(H, F, seed)
        inputs = rng.standard_normal((L, F))
        target = float(rng.standard_normal())
        err = grad_check(params, inputs, target, eps=eps)
        what = "lstm"
    ok = err < GRADCHECK_TOLERANCE
    print(f"[hydroseq] {what} gradcheck H={H} F={F} L={L} seed={seed} eps={eps:g}: "
          f"max relative error {err:.3e} ({'OK' if ok else 'FAIL'})")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# Dispatch


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "forecast": _cmd_forecast,
    "report": _cmd_report,
    "gradcheck": _cmd_gradcheck,
}


def run(config: RunConfig) -> int:
    """Dispatch a parsed config; returns the process exit code."""
    out_dir = config.options.get("out")
    try:
        code = _COMMANDS[config.command](config.options)
    except (ValueError, OSError, KeyError) as e:
        _log_run(out_dir, config, f"error:{type(e).__name__}")
        sys.stderr.write(json.dumps(
            {"error": {"type": type(e).__name__, "message": str(e)}}) + "\n")
        return 1
    _log_run(out_dir, config, "ok" if code == 0 else f"exit:{code}")
    return code


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        config = parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
