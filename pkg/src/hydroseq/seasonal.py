"""Monthly hybrid correction of a naturalized-flow model, and an
encoder-decoder forecaster for multi-month horizons.

The hybrid model is sequence-to-value at monthly resolution: 12 months of
(cumulative precipitation, naturalized-model mean discharge) predict the next
month's observed mean discharge. It corrects the naturalized series toward
observations, which is where regulation effects live.

The seasonal forecaster runs an encoder over the monthly hindcast, hands its
final (h, c) to a decoder bit-for-bit, and the decoder emits one prediction
per forecast month while consuming one row of forecast drivers per step. The
decoder never feeds its own predictions back in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .dates import DateRange, MonthIndex, days_in_month
from .lstm import (Gradients, LstmParams, OptimState, TrainConfig, adam_step, bptt,
                   forward_batch, init_params)
from .metrics import UndefinedNSE, nse
from .timeseries import STD_FLOOR, MonthlySeries


# ---------------------------------------------------------------------------
# Monthly alignment and normalization


def _align_months(series: list[MonthlySeries]) -> tuple[MonthIndex, list[tuple[np.ndarray, np.ndarray]]]:
    """Intersect the month ranges of several series; returns aligned views."""
    firsts = [s.months.year * 12 + s.months.month - 1 for s in series]
    lasts = [f + s.months.length - 1 for f, s in zip(firsts, series)]
    lo, hi = max(firsts), min(lasts)
    if hi < lo:
        raise ValueError("monthly series do not overlap")
    idx = MonthIndex(lo // 12, lo % 12 + 1, hi - lo + 1)
    aligned = []
    for f, s in zip(firsts, series):
        a = lo - f
        b = a + idx.length
        aligned.append((s.values[a:b], s.missing[a:b]))
    return idx, aligned


def _months_in_range(idx: MonthIndex, rng: DateRange) -> np.ndarray:
    """Boolean mask of months fully contained in a daily range."""
    out = np.zeros(idx.length, dtype=bool)
    for i in range(idx.length):
        y, m = idx.year_month_at(i)
        first = date(y, m, 1)
        last = date(y, m, days_in_month(y, m))
        out[i] = rng.contains(first) and rng.contains(last)
    return out


@dataclass
class MonthlyNormStats:
    """Standardization for the monthly pipeline, fitted on train months only."""

    station_id: str
    precip: tuple[float, float]
    natural: tuple[float, float]
    discharge: tuple[float, float]

    def normalize_discharge(self, station_id: str, q: np.ndarray) -> np.ndarray:
        mean, std = self.discharge
        return (np.asarray(q, dtype=np.float64) - mean) / std

    def denormalize_discharge(self, station_id: str, z: np.ndarray) -> np.ndarray:
        mean, std = self.discharge
        return np.asarray(z, dtype=np.float64) * std + mean

    def to_json(self) -> dict:
        return {"station_id": self.station_id, "precip": list(self.precip),
                "natural": list(self.natural), "discharge": list(self.discharge)}

    @staticmethod
    def from_json(obj: dict) -> "MonthlyNormStats":
        return MonthlyNormStats(station_id=obj["station_id"],
                                precip=tuple(obj["precip"]),
                                natural=tuple(obj["natural"]),
                                discharge=tuple(obj["discharge"]))


def _fit_stat(vals: np.ndarray, what: str) -> tuple[float, float]:
    if vals.size < 2:
        raise ValueError(f"{what}: fewer than 2 unmasked train months")
    std = float(vals.std())
    return float(vals.mean()), max(std, STD_FLOOR)


def fit_monthly_normalizer(gauge_monthly: MonthlySeries, precip_monthly: MonthlySeries,
                           natural_monthly: MonthlySeries, train_range: DateRange) -> MonthlyNormStats:
    idx, (g, p, n) = _align_months([gauge_monthly, precip_monthly, natural_monthly])
    in_train = _months_in_range(idx, train_range)
    return MonthlyNormStats(
        station_id=gauge_monthly.station_id,
        precip=_fit_stat(p[0][in_train & ~p[1]], "monthly precip"),
        natural=_fit_stat(n[0][in_train & ~n[1]], "monthly naturalized"),
        discharge=_fit_stat(g[0][in_train & ~g[1]], "monthly discharge"),
    )


# ---------------------------------------------------------------------------
# Hybrid monthly samples and training


@dataclass
class MonthlySample:
    """12 months of (precip, naturalized) predicting the next month's mean flow.

    ``inputs`` is normalized (12, 2); ``target`` stays in m3/s.
    """

    station_id: str
    inputs: np.ndarray
    target: float
    target_month: tuple[int, int]

    def __post_init__(self):
        if self.inputs.shape[0] != 12 or self.inputs.ndim != 2:
            raise ValueError(f"expected 12 input rows, got {self.inputs.shape}")
        if not np.all(np.isfinite(self.inputs)) or not np.isfinite(self.target):
            raise ValueError("masked or non-finite entries in a monthly sample")


def build_monthly_samples(gauge_monthly: MonthlySeries, precip_monthly: MonthlySeries,
                          natural_monthly: MonthlySeries, split_range: DateRange,
                          stats: MonthlyNormStats) -> list[MonthlySample]:
    """One sample per month inside ``split_range`` with 12 complete preceding
    months (inputs may reach before the range) and an unmasked target."""
    idx, (g, p, n) = _align_months([gauge_monthly, precip_monthly, natural_monthly])
    in_range = _months_in_range(idx, split_range)
    row_masked = p[1] | n[1]
    samples = []
    for m in range(12, idx.length):
        if not in_range[m] or g[1][m]:
            continue
        if row_masked[m - 12:m].any():
            continue
        pz = (p[0][m - 12:m] - stats.precip[0]) / stats.precip[1]
        nz = (n[0][m - 12:m] - stats.natural[0]) / stats.natural[1]
        samples.append(MonthlySample(
            station_id=gauge_monthly.station_id,
            inputs=np.column_stack([pz, nz]),
            target=float(g[0][m]),
            target_month=idx.year_month_at(m),
        ))
    return samples


@dataclass
class HybridModel:
    params: LstmParams
    stats: MonthlyNormStats
    station_id: str
    best_epoch: int
    validation_nse: float
    history: list[dict] = field(default_factory=list)


def train_hybrid(train_samples: list[MonthlySample], val_samples: list[MonthlySample],
                 cfg: TrainConfig, hidden_size: int = 32,
                 stats: MonthlyNormStats | None = None) -> HybridModel:
    """Same loop contract as the daily trainer, at monthly scale.

    Pass the ``stats`` the samples were built with so the model can normalize
    fresh inputs later; without it, only target scaling is refitted from the
    train targets and the model can still score but not ingest raw series.
    """
    if not train_samples or not val_samples:
        raise ValueError("need at least one train and one validation sample")
    sid = train_samples[0].station_id
    mixed = {s.station_id for s in train_samples + val_samples}
    if mixed != {sid}:
        raise ValueError(f"hybrid training is single-station; got {sorted(mixed)}")
    from .experiments import fit_windows  # shared loop; import here to avoid a cycle

    X = np.stack([s.inputs for s in train_samples])
    y_phys = np.array([s.target for s in train_samples])
    Xv = np.stack([s.inputs for s in val_samples])
    yv_phys = np.array([s.target for s in val_samples])

    if stats is None:
        stats = MonthlyNormStats(station_id=sid, precip=(0.0, 1.0), natural=(0.0, 1.0),
                                 discharge=_fit_stat(y_phys, "monthly discharge"))
    y = stats.normalize_discharge(sid, y_phys)
    params = init_params(hidden_size, X.shape[2], cfg.seed)
    best_params, best_epoch, best_nse, history = fit_windows(
        params, X, y, [(sid, Xv, yv_phys)], stats, cfg)
    return HybridModel(params=best_params, stats=stats, station_id=sid,
                       best_epoch=best_epoch, validation_nse=best_nse, history=history)


def predict_hybrid(model: HybridModel, samples: list[MonthlySample]) -> np.ndarray:
    """Month-ahead mean discharge in m3/s, one value per sample."""
    from .lstm import predict_batch

    X = np.stack([s.inputs for s in samples])
    z = predict_batch(model.params, X)
    return model.stats.denormalize_discharge(model.station_id, z)


# ---------------------------------------------------------------------------
# Encoder-decoder seasonal forecaster


@dataclass
class SeasonalSpec:
    """Shape of the encoder-decoder pair; channel names are documentation."""

    encoder_length: int = 12
    horizon: int = 3
    encoder_channels: tuple[str, ...] = ("precip_mm_monthly", "natural_q_m3s")
    decoder_channels: tuple[str, ...] = ("precip_mm_monthly",)
    hidden_size: int = 32

    def __post_init__(self):
        if self.encoder_length < 1 or self.horizon < 1:
            raise ValueError("encoder_length and horizon must be >= 1")

    def to_json(self) -> dict:
        return {"encoder_length": self.encoder_length, "horizon": self.horizon,
                "encoder_channels": list(self.encoder_channels),
                "decoder_channels": list(self.decoder_channels),
                "hidden_size": self.hidden_size}

    @staticmethod
    def from_json(obj: dict) -> "SeasonalSpec":
        return SeasonalSpec(encoder_length=int(obj["encoder_length"]),
                            horizon=int(obj["horizon"]),
                            encoder_channels=tuple(obj["encoder_channels"]),
                            decoder_channels=tuple(obj["decoder_channels"]),
                            hidden_size=int(obj["hidden_size"]))


@dataclass
class EncoderDecoderParams:
    """Encoder and decoder cells sharing one hidden size.

    The encoder's head is unused (kept zero); the decoder's head is applied at
    every step.
    """

    encoder: LstmParams
    decoder: LstmParams

    def __post_init__(self):
        if self.encoder.H != self.decoder.H:
            raise ValueError(f"encoder H={self.encoder.H} != decoder H={self.decoder.H}")

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.encoder.flatten(), self.decoder.flatten()])


def init_encoder_decoder(spec: SeasonalSpec, seed: int) -> EncoderDecoderParams:
    enc = init_params(spec.hidden_size, len(spec.encoder_channels), seed)
    enc.w_out = np.zeros_like(enc.w_out)  # encoder emits state only
    dec = init_params(spec.hidden_size, len(spec.decoder_channels), seed + 1)
    return EncoderDecoderParams(encoder=enc, decoder=dec)


@dataclass
class SeasonalTrace:
    encoder: object
    decoder: object
    preds: np.ndarray  # (B, horizon)


def seasonal_forward_batch(params: EncoderDecoderParams, Xe: np.ndarray,
                           Xd: np.ndarray) -> tuple[np.ndarray, SeasonalTrace]:
    """Encoder over (B, Te, E) hindcast, decoder over (B, Th, D) drivers.

    The decoder state at step 0 is exactly the encoder's final state; each
    decoder step's hidden vector goes through the decoder head.
    """
    Xe = np.asarray(Xe, dtype=np.float64)
    Xd = np.asarray(Xd, dtype=np.float64)
    if Xe.ndim != 3 or Xd.ndim != 3 or Xe.shape[0] != Xd.shape[0]:
        raise ValueError(f"expected (B, Te, E) and (B, Th, D), got {Xe.shape} and {Xd.shape}")
    _, enc_trace = forward_batch(params.encoder, Xe)
    h_enc, c_enc = enc_trace.final_state
    _, dec_trace = forward_batch(params.decoder, Xd, state0=(h_enc, c_enc))
    # per-step head over the decoder hidden states: (Th, B, H) @ (H,) -> (Th, B)
    preds = (dec_trace.h @ params.decoder.w_out + params.decoder.b_out).T
    return preds, SeasonalTrace(encoder=enc_trace, decoder=dec_trace, preds=preds)


def seasonal_forecast(params: EncoderDecoderParams, hindcast: np.ndarray,
                      forecast_drivers: np.ndarray) -> np.ndarray:
    """One horizon of predictions for a single hindcast/driver pair."""
    hindcast = np.asarray(hindcast, dtype=np.float64)
    forecast_drivers = np.asarray(forecast_drivers, dtype=np.float64)
    if hindcast.ndim != 2 or forecast_drivers.ndim != 2:
        raise ValueError("hindcast and forecast_drivers must be 2-D (steps, channels)")
    preds, _ = seasonal_forward_batch(params, hindcast[None], forecast_drivers[None])
    return preds[0]


def seasonal_backward(params: EncoderDecoderParams, targets: np.ndarray,
                      trace: SeasonalTrace) -> tuple[float, Gradients, Gradients]:
    """Joint BPTT of the mean-over-horizon MSE through decoder then encoder."""
    y = np.asarray(targets, dtype=np.float64)
    preds = trace.preds
    if y.shape != preds.shape:
        raise ValueError(f"expected targets {preds.shape}, got {y.shape}")
    B, Th = preds.shape
    resid = preds - y
    loss = float(np.mean(resid ** 2))
    dpred = 2.0 * resid / (B * Th)  # (B, Th)

    dec = params.decoder
    dec_trace = trace.decoder
    dw_out = np.einsum("tbh,bt->h", dec_trace.h, dpred)
    db_out = float(dpred.sum())
    dh_steps = dpred.T[:, :, None] * dec.w_out[None, None, :]  # (Th, B, H)
    dec_grads, dh0, dc0 = bptt(dec, dec_trace, dh_steps=dh_steps)
    dec_grads.w_out = dw_out
    dec_grads.b_out = db_out

    enc_grads, _, _ = bptt(params.encoder, trace.encoder, dh_final=dh0, dc_final=dc0)
    return loss, enc_grads, dec_grads


def seasonal_grad_check(params: EncoderDecoderParams, hindcast: np.ndarray,
                        drivers: np.ndarray, targets: np.ndarray,
                        eps: float = 1e-5) -> float:
    """Central-difference check over every encoder and decoder parameter.

    The numeric side runs in the widest available float precision
    (:func:`hydroseq.lstm.wide_loss`).
    """
    from .lstm import wide_loss

    Xe = np.asarray(hindcast, dtype=np.float64)[None]
    Xd = np.asarray(drivers, dtype=np.float64)[None]
    y = np.asarray(targets, dtype=np.float64)[None]

    _, trace = seasonal_forward_batch(params, Xe, Xd)
    _, enc_g, dec_g = seasonal_backward(params, y, trace)
    analytic = np.concatenate([enc_g.flatten(), dec_g.flatten()])

    He, Fe = params.encoder.H, params.encoder.F
    Hd, Fd = params.decoder.H, params.decoder.F
    n_enc = params.encoder.flatten().size
    theta = params.flatten().astype(np.longdouble)
    y_zero = np.zeros(Xe.shape[0])

    def loss_at(vec: np.ndarray) -> np.longdouble:
        _, state = wide_loss(vec[:n_enc], He, Fe, Xe, y_zero)
        loss, _ = wide_loss(vec[n_enc:], Hd, Fd, Xd, y, state0=state, per_step=True)
        return loss

    numeric = np.empty(theta.size)
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = eps
        numeric[j] = float((loss_at(theta + step) - loss_at(theta - step))
                           / (2.0 * np.longdouble(eps)))

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric) / denom))


# ---------------------------------------------------------------------------
# Seasonal samples and training


@dataclass
class SeasonalSample:
    """Hindcast window plus the drivers and targets of the forecast horizon."""

    station_id: str
    encoder_inputs: np.ndarray  # (Te, E) normalized
    decoder_inputs: np.ndarray  # (Th, D) normalized
    targets: np.ndarray         # (Th,) m3/s
    first_target_month: tuple[int, int]


def build_seasonal_samples(gauge_monthly: MonthlySeries, precip_monthly: MonthlySeries,
                           natural_monthly: MonthlySeries, split_range: DateRange,
                           stats: MonthlyNormStats, spec: SeasonalSpec) -> list[SeasonalSample]:
    """Sliding encoder/decoder windows; the decoder consumes the actual precip
    of the forecast months, standing in for a driver forecast."""
    idx, (g, p, n) = _align_months([gauge_monthly, precip_monthly, natural_monthly])
    in_range = _months_in_range(idx, split_range)
    Te, Th = spec.encoder_length, spec.horizon
    pz = (p[0] - stats.precip[0]) / stats.precip[1]
    nz = (n[0] - stats.natural[0]) / stats.natural[1]
    samples = []
    for m in range(Te, idx.length - Th + 1):
        block = slice(m, m + Th)
        if not in_range[block].all():
            continue
        if g[1][block].any() or p[1][block].any():
            continue
        if (p[1] | n[1])[m - Te:m].any():
            continue
        samples.append(SeasonalSample(
            station_id=gauge_monthly.station_id,
            encoder_inputs=np.column_stack([pz[m - Te:m], nz[m - Te:m]]),
            decoder_inputs=pz[block, None].copy(),
            targets=g[0][block].copy(),
            first_target_month=idx.year_month_at(m),
        ))
    return samples


@dataclass
class SeasonalModel:
    params: EncoderDecoderParams
    spec: SeasonalSpec
    stats: MonthlyNormStats
    station_id: str
    best_epoch: int
    validation_nse: float
    history: list[dict] = field(default_factory=list)


def train_seasonal(train_samples: list[SeasonalSample], val_samples: list[SeasonalSample],
                   cfg: TrainConfig, spec: SeasonalSpec,
                   stats: MonthlyNormStats) -> SeasonalModel:
    """Adam on the mean-over-horizon MSE; early stopping on validation NSE
    pooled over every (sample, step) pair."""
    if not train_samples or not val_samples:
        raise ValueError("need at least one train and one validation sample")
    sid = train_samples[0].station_id
    Xe = np.stack([s.encoder_inputs for s in train_samples])
    Xd = np.stack([s.decoder_inputs for s in train_samples])
    y = stats.normalize_discharge(sid, np.stack([s.targets for s in train_samples]))
    Xe_v = np.stack([s.encoder_inputs for s in val_samples])
    Xd_v = np.stack([s.decoder_inputs for s in val_samples])
    yv_phys = np.stack([s.targets for s in val_samples])

    params = init_encoder_decoder(spec, cfg.seed)
    enc_opt = OptimState.zeros_like(params.encoder)
    dec_opt = OptimState.zeros_like(params.decoder)
    N = y.shape[0]
    best = (-math.inf, EncoderDecoderParams(params.encoder.copy(), params.decoder.copy()), 0)
    bad = 0
    history: list[dict] = []

    for epoch in range(1, cfg.max_epochs + 1):
        rng = np.random.default_rng([cfg.seed, epoch])
        perm = rng.permutation(N)
        sse = 0.0
        for s0 in range(0, N, cfg.batch_size):
            idx_b = perm[s0:s0 + cfg.batch_size]
            _, trace = seasonal_forward_batch(params, Xe[idx_b], Xd[idx_b])
            loss, enc_g, dec_g = seasonal_backward(params, y[idx_b], trace)
            # clip the joint gradient so the two halves stay consistently scaled
            joint = float(np.sqrt(np.sum(enc_g.flatten() ** 2) + np.sum(dec_g.flatten() ** 2)))
            if joint > cfg.grad_clip_norm:
                enc_g = enc_g.scaled(cfg.grad_clip_norm / joint)
                dec_g = dec_g.scaled(cfg.grad_clip_norm / joint)
            enc_new, enc_opt = adam_step(params.encoder, enc_g, enc_opt, cfg)
            dec_new, dec_opt = adam_step(params.decoder, dec_g, dec_opt, cfg)
            params = EncoderDecoderParams(encoder=enc_new, decoder=dec_new)
            sse += loss * idx_b.size
        preds_v, _ = seasonal_forward_batch(params, Xe_v, Xd_v)
        q_v = stats.denormalize_discharge(sid, preds_v)
        try:
            val_nse = nse(yv_phys.ravel(), q_v.ravel())
        except UndefinedNSE:
            val_nse = -math.inf
        history.append({"epoch": epoch, "train_loss": sse / N, "validation_nse": val_nse})
        if val_nse > best[0]:
            best = (val_nse, EncoderDecoderParams(params.encoder.copy(), params.decoder.copy()), epoch)
            bad = 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break

    return SeasonalModel(params=best[1], spec=spec, stats=stats, station_id=sid,
                         best_epoch=best[2], validation_nse=best[0], history=history)
