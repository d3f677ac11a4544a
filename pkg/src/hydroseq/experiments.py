"""Experiment orchestration: feature regimes, pooled vs station-scoped
training, dam-level augmentation, and model evaluation.

A feature regime names which inputs the model sees:

- ``precip_only``: the primary precipitation channel;
- ``precip_plus_dynamic``: precipitation plus the dynamic driver channels;
- ``dynamic_plus_static``: dynamic drivers plus the static catchment
  attributes, replicated on every timestep.

Any regime can additionally append per-dam level-below-max channels.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dates import DateRange, SplitSpec
from .lstm import (LstmParams, OptimState, TrainConfig, adam_step, backward,
                   clip_gradients, forward_batch, init_params, predict_batch)
from .metrics import EvalReport, UndefinedNSE, evaluate_stations, nse
from .timeseries import (Dataset, FeatureMatrix, NormStats, WindowPolicy, WindowSample,
                         fit_normalizer, make_windows, resolve_schema, stack_windows, transform)

VARIANTS = ("precip_only", "precip_plus_dynamic", "dynamic_plus_static")

DEFAULT_PRECIP_CHANNEL = "precip_mm"
DEFAULT_DYNAMIC_CHANNELS = ("t2m_k", "ssr_jm2", "str_jm2", "tp_mm", "sp_pa")


@dataclass(frozen=True)
class FeatureSet:
    """Input regime, optionally augmented with dam level channels."""

    variant: str
    dam_ids: tuple[str, ...] = ()
    precip_channel: str = DEFAULT_PRECIP_CHANNEL
    dynamic_channels: tuple[str, ...] = DEFAULT_DYNAMIC_CHANNELS

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown feature variant {self.variant!r}; expected one of {VARIANTS}")

    def plus_dam_release(self, dam_ids) -> "FeatureSet":
        ids = tuple(dam_ids)
        if not ids:
            raise ValueError("dam_ids must be nonempty")
        return replace(self, dam_ids=ids)

    def to_json(self) -> dict:
        return {"variant": self.variant, "dam_ids": list(self.dam_ids),
                "precip_channel": self.precip_channel,
                "dynamic_channels": list(self.dynamic_channels)}

    @staticmethod
    def from_json(obj: dict) -> "FeatureSet":
        return FeatureSet(
            variant=obj["variant"],
            dam_ids=tuple(obj.get("dam_ids", ())),
            precip_channel=obj.get("precip_channel", DEFAULT_PRECIP_CHANNEL),
            dynamic_channels=tuple(obj.get("dynamic_channels", DEFAULT_DYNAMIC_CHANNELS)),
        )


@dataclass
class ExperimentSpec:
    """Everything that defines one training run besides the data itself."""

    feature_set: FeatureSet
    scope: tuple[str, ...] | None = None  # None = all stations pooled
    sequence_length: int = 30
    hidden_size: int = 256
    train_config: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec | None = None  # None = take the dataset's split
    log_discharge: bool = False
    window_policy: WindowPolicy = field(default_factory=WindowPolicy)

    def __post_init__(self):
        if self.sequence_length < 1:
            raise ValueError("sequence_length must be >= 1")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.scope is not None:
            self.scope = tuple(self.scope)
            if not self.scope:
                raise ValueError("scoped station list must be nonempty")

    def to_json(self) -> dict:
        return {
            "feature_set": self.feature_set.to_json(),
            "scope": list(self.scope) if self.scope is not None else "all",
            "sequence_length": self.sequence_length,
            "hidden_size": self.hidden_size,
            "train_config": self.train_config.to_json(),
            "split": self.split.to_json() if self.split is not None else None,
            "log_discharge": self.log_discharge,
            "window_policy": {"max_gap_days": self.window_policy.max_gap_days,
                              "max_masked_frac": self.window_policy.max_masked_frac},
        }

    @staticmethod
    def from_json(obj: dict) -> "ExperimentSpec":
        scope = obj.get("scope", "all")
        wp = obj.get("window_policy", {})
        return ExperimentSpec(
            feature_set=FeatureSet.from_json(obj["feature_set"]),
            scope=None if scope in ("all", None) else tuple(scope),
            sequence_length=int(obj.get("sequence_length", 30)),
            hidden_size=int(obj.get("hidden_size", 256)),
            train_config=TrainConfig.from_json(obj.get("train_config", {})),
            split=SplitSpec.from_json(obj["split"]) if obj.get("split") else None,
            log_discharge=bool(obj.get("log_discharge", False)),
            window_policy=WindowPolicy(max_gap_days=int(wp.get("max_gap_days", 3)),
                                       max_masked_frac=float(wp.get("max_masked_frac", 0.10))),
        )


@dataclass
class TrainedModel:
    params: LstmParams
    norm: NormStats
    feature_schema: list[str]
    spec: ExperimentSpec
    best_epoch: int
    validation_nse: float
    history: list[dict] = field(default_factory=list)
    n_train_windows: int = 0


@dataclass
class PredictionSeries:
    """Daily predictions in m3/s; days without a valid window are masked."""

    station_id: str
    start: "DateRange"
    values: np.ndarray
    missing: np.ndarray


def feature_schema_for(dataset: Dataset, feature_set: FeatureSet) -> list[str]:
    """Ordered feature names for a regime against a concrete dataset."""
    fs = feature_set
    if fs.variant == "precip_only":
        schema = [fs.precip_channel]
    elif fs.variant == "precip_plus_dynamic":
        schema = [fs.precip_channel] + list(fs.dynamic_channels)
    else:  # dynamic_plus_static
        if not dataset.static_names:
            raise ValueError("missing required channel: static attributes "
                             "(dataset has none but the regime needs them)")
        schema = list(fs.dynamic_channels) + [f"static:{a}" for a in dataset.static_names]
    schema += [f"dam:{dam_id}" for dam_id in fs.dam_ids]
    return schema


def assemble_features(dataset: Dataset, feature_set: FeatureSet) -> tuple[list[str], dict[str, FeatureMatrix]]:
    """Resolve a regime to its schema and per-station input matrices."""
    schema = feature_schema_for(dataset, feature_set)
    return schema, resolve_schema(dataset, schema)


# ---------------------------------------------------------------------------
# Training


def _validation_nse(params: LstmParams, val_groups: list[tuple[str, np.ndarray, np.ndarray]],
                    stats: NormStats) -> float:
    """Mean NSE over stations with a defined value; physical units."""
    values = []
    for sid, Xg, y_phys in val_groups:
        z = predict_batch(params, Xg)
        q = stats.denormalize_discharge(sid, z)
        try:
            values.append(nse(y_phys, q))
        except UndefinedNSE:
            continue
    if not values:
        raise ValueError("validation NSE undefined for every station")
    return float(np.mean(values))


def fit_windows(params: LstmParams, X: np.ndarray, y: np.ndarray,
                val_groups: list[tuple[str, np.ndarray, np.ndarray]],
                stats: NormStats, cfg: TrainConfig) -> tuple[LstmParams, int, float, list[dict]]:
    """Adam training loop with early stopping on mean validation NSE.

    Windows are reshuffled every epoch with a generator seeded by
    (cfg.seed, epoch), and batches run in that order, so a fixed seed gives a
    bit-identical training trajectory. Returns the parameters of the best
    validation epoch.
    """
    N = y.shape[0]
    best_nse = -math.inf
    best_params = params.copy()
    best_epoch = 0
    bad_epochs = 0
    history: list[dict] = []
    optim = OptimState.zeros_like(params)

    for epoch in range(1, cfg.max_epochs + 1):
        rng = np.random.default_rng([cfg.seed, epoch])
        perm = rng.permutation(N)
        sse = 0.0
        for s0 in range(0, N, cfg.batch_size):
            idx = perm[s0:s0 + cfg.batch_size]
            preds, trace = forward_batch(params, X[idx])
            loss, grads = backward(params, y[idx], trace)
            grads, _ = clip_gradients(grads, cfg.grad_clip_norm)
            params, optim = adam_step(params, grads, optim, cfg)
            sse += loss * idx.size
        train_loss = sse / N
        val_nse = _validation_nse(params, val_groups, stats)
        history.append({"epoch": epoch, "train_loss": train_loss, "validation_nse": val_nse})
        if val_nse > best_nse:
            best_nse = val_nse
            best_params = params.copy()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break
    return best_params, best_epoch, best_nse, history


def _group_windows(samples: list[WindowSample]) -> dict[str, list[WindowSample]]:
    groups: dict[str, list[WindowSample]] = {}
    for s in samples:
        groups.setdefault(s.station_id, []).append(s)
    return groups


def train_model(spec: ExperimentSpec, dataset: Dataset) -> TrainedModel:
    """Fit one sequence-to-value model on the dataset's train range.

    Pooled scope gives every valid window equal weight; a station scope
    restricts windows to the listed stations. Normalization is fitted on the
    train range of the whole dataset, never on validation or test days.
    """
    if dataset.normalized:
        raise ValueError("train_model expects a physical-unit dataset")
    if spec.split is not None and spec.split != dataset.split:
        raise ValueError("experiment split differs from the dataset split")
    scope = list(spec.scope) if spec.scope is not None else None
    if scope:
        unknown = sorted(set(scope) - set(dataset.stations))
        if unknown:
            raise ValueError(f"scoped stations not in dataset: {unknown}")

    schema = feature_schema_for(dataset, spec.feature_set)
    stats = fit_normalizer(dataset, log_discharge=spec.log_discharge)
    nds = transform(stats, dataset, "forward")

    train_w = make_windows(nds, spec.sequence_length, schema, dataset.split.train,
                           policy=spec.window_policy, stations=scope)
    if not train_w:
        raise ValueError("zero training windows")
    val_w = make_windows(nds, spec.sequence_length, schema, dataset.split.validation,
                         policy=spec.window_policy, stations=scope)
    if not val_w:
        raise ValueError("zero validation windows")

    X, y = stack_windows(train_w)
    val_groups = []
    for sid, group in sorted(_group_windows(val_w).items()):
        Xg, zg = stack_windows(group)
        val_groups.append((sid, Xg, stats.denormalize_discharge(sid, zg)))

    params = init_params(spec.hidden_size, len(schema), spec.train_config.seed)
    best_params, best_epoch, best_nse, history = fit_windows(
        params, X, y, val_groups, stats, spec.train_config)

    return TrainedModel(params=best_params, norm=stats, feature_schema=schema,
                        spec=spec, best_epoch=best_epoch, validation_nse=best_nse,
                        history=history, n_train_windows=len(train_w))


# ---------------------------------------------------------------------------
# Prediction and evaluation


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def predict_series(model: TrainedModel, dataset: Dataset, split_range: DateRange,
                   threads: int = 1) -> dict[str, PredictionSeries]:
    """Predict daily discharge in m3/s over ``split_range`` for every station.

    A day gets a prediction only when it has an unmasked observation and a
    policy-compliant input window; everything else is masked. Stations the
    model never saw still predict, through their own normalization stats.
    """
    if dataset.normalized:
        raise ValueError("predict_series expects a physical-unit dataset")
    nds = transform(model.norm, dataset, "forward")
    L = model.spec.sequence_length
    n_days = split_range.n_days

    def one(sid: str) -> tuple[str, PredictionSeries]:
        windows = make_windows(nds, L, model.feature_schema, split_range,
                               policy=model.spec.window_policy, stations=[sid])
        values = np.full(n_days, np.nan)
        missing = np.ones(n_days, dtype=bool)
        if windows:
            Xg, _ = stack_windows(windows)
            z = predict_batch(model.params, Xg)
            q = model.norm.denormalize_discharge(sid, z)
            for w, qv in zip(windows, q):
                i = (w.target_date - split_range.start).days
                values[i] = qv
                missing[i] = False
        return sid, PredictionSeries(station_id=sid, start=split_range,
                                     values=values, missing=missing)

    return dict(_pmap(one, dataset.station_ids(), threads))


def evaluate_model(model: TrainedModel, dataset: Dataset,
                   split_range: DateRange | None = None, threads: int = 1) -> EvalReport:
    """Score the model per station over a range (default: the test range)."""
    rng_ = split_range if split_range is not None else dataset.split.test
    preds = predict_series(model, dataset, rng_, threads=threads)
    i0, i1 = dataset.range_indices(rng_)
    observed, predicted = {}, {}
    for sid, st in dataset.stations.items():
        obs = st.discharge[i0:i1].copy()
        obs[st.discharge_missing[i0:i1]] = np.nan
        observed[sid] = obs
        predicted[sid] = preds[sid].values
    return evaluate_stations(observed, predicted)
