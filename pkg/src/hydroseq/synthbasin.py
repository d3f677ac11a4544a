"""Deterministic synthetic regulated-basin generator.

The generative truth is transparent on purpose: seasonal stochastic forcing, a
single linear reservoir routing effective rainfall to discharge, and an
optional storage dam with a fixed release target. Every behavioral claim about
the forecasting pipeline can be checked against these known dynamics.

Units: the reservoir works in depth units (mm of water over the catchment per
day, storage in mm); discharge files are converted to m3/s with
``q_m3s = q_mm_day * area_km2 / 86.4``. Dam volumes share the depth units of
their inflow.

Emitted forcing channels: ``precip_mm`` (primary precipitation product) plus
the dynamic set ``t2m_k``, ``ssr_jm2``, ``str_jm2``, ``tp_mm`` (secondary
precipitation product), ``sp_pa``.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, asdict
from datetime import date
from pathlib import Path

import numpy as np

from .dates import DateIndex, SplitSpec
from .timeseries import ForcingSeries, GaugeSeries, StaticAttributes, monthly_aggregate

DAYS_PER_YEAR = 365.25
MM_DAY_TO_M3S_PER_KM2 = 1.0 / 86.4

DYNAMIC_CHANNELS = ("t2m_k", "ssr_jm2", "str_jm2", "tp_mm", "sp_pa")
PRECIP_CHANNEL = "precip_mm"

STATIC_ATTR_NAMES = ("area_km2", "runoff_coeff", "storage_coeff", "precip_mean_mm",
                     "precip_amplitude", "wet_day_prob", "evap_coeff")


@dataclass(frozen=True)
class BasinSpec:
    """Generative parameters of one synthetic catchment.

    The static attribute vector is a deterministic function of these fields
    (see :func:`static_attributes`), so attribute-aware models genuinely have
    access to the basin's dynamics.
    """

    basin_id: str
    area_km2: float = 500.0
    runoff_coefficient: float = 0.4
    storage_coefficient: float = 0.15
    precip_mean_mm: float = 4.0
    precip_amplitude: float = 0.6
    wet_day_prob: float = 0.35
    gamma_shape: float = 1.6
    season_phase_days: float = 0.0
    temp_mean_k: float = 293.0
    temp_amplitude_k: float = 6.0
    temp_phase_days: float | None = None  # None: in phase with precipitation
    temp_noise_k: float = 1.0
    evap_coefficient: float = 0.0
    noise_std: float = 0.1
    precip_obs_noise_std: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.storage_coefficient < 1.0:
            raise ValueError(f"{self.basin_id}: storage_coefficient must be in (0, 1)")
        if not 0.0 < self.runoff_coefficient <= 1.0:
            raise ValueError(f"{self.basin_id}: runoff_coefficient must be in (0, 1]")
        if not 0.0 <= self.precip_amplitude < 1.0:
            raise ValueError(f"{self.basin_id}: precip_amplitude must be in [0, 1)")
        if not 0.0 <= self.wet_day_prob <= 1.0:
            raise ValueError(f"{self.basin_id}: wet_day_prob must be in [0, 1]")
        if not 0.0 <= self.evap_coefficient < 1.0:
            raise ValueError(f"{self.basin_id}: evap_coefficient must be in [0, 1)")
        if self.evap_coefficient > 0.0 and self.temp_amplitude_k <= 0.0:
            raise ValueError(f"{self.basin_id}: evap_coefficient needs temp_amplitude_k > 0")

    @staticmethod
    def from_json(obj: dict) -> "BasinSpec":
        return BasinSpec(**obj)


@dataclass(frozen=True)
class DamSpec:
    """Storage dam with a constant release target; volumes in inflow units."""

    dam_id: str
    capacity: float
    target_release: float
    initial_storage: float = 0.0

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"{self.dam_id}: capacity must be > 0")
        if self.target_release < 0:
            raise ValueError(f"{self.dam_id}: target_release must be >= 0")
        if not 0.0 <= self.initial_storage <= self.capacity:
            raise ValueError(f"{self.dam_id}: initial_storage outside [0, capacity]")

    @staticmethod
    def from_json(obj: dict) -> "DamSpec":
        return DamSpec(**obj)


def static_attributes(spec: BasinSpec) -> StaticAttributes:
    """Attribute vector exposed to attribute-aware models."""
    values = np.array([spec.area_km2, spec.runoff_coefficient, spec.storage_coefficient,
                       spec.precip_mean_mm, spec.precip_amplitude, spec.wet_day_prob,
                       spec.evap_coefficient])
    return StaticAttributes(station_id=spec.basin_id, names=list(STATIC_ATTR_NAMES), values=values)


def _basin_rng(seed: int, basin_id: str, stream: int = 0) -> np.random.Generator:
    # stable per-basin substream: fold the id through sha256 so renaming or
    # reordering basins never silently reuses a stream
    digest = hashlib.sha256(basin_id.encode("utf-8")).digest()
    key = int.from_bytes(digest[:4], "big")
    return np.random.default_rng([seed, key, stream])


@dataclass
class SynthWeather:
    """Latent truth plus the observation channels derived from it."""

    true_precip_mm: np.ndarray
    channels: dict[str, np.ndarray]


def gen_weather(spec: BasinSpec, days: int, seed: int) -> SynthWeather:
    """Seasonal stochastic forcing; deterministic for fixed (spec, days, seed).

    Precipitation is a wet-day Bernoulli times gamma depths whose scale tracks
    a seasonal sinusoid, so the long-run daily mean equals
    ``precip_mean_mm * (1 + amplitude * sin(...))`` day by day.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = _basin_rng(seed, spec.basin_id)
    t = np.arange(days, dtype=np.float64)
    season = np.sin(2.0 * np.pi * (t - spec.season_phase_days) / DAYS_PER_YEAR)

    if spec.wet_day_prob > 0.0:
        wet = rng.random(days) < spec.wet_day_prob
        depth_mean = spec.precip_mean_mm * (1.0 + spec.precip_amplitude * season) / spec.wet_day_prob
        scale = depth_mean / spec.gamma_shape
        depths = rng.gamma(spec.gamma_shape, 1.0, size=days) * scale
        precip = np.where(wet, depths, 0.0)
    else:
        precip = np.zeros(days)

    temp_phase = spec.season_phase_days if spec.temp_phase_days is None else spec.temp_phase_days
    temp_season = np.sin(2.0 * np.pi * (t - temp_phase) / DAYS_PER_YEAR)
    temp = spec.temp_mean_k + spec.temp_amplitude_k * temp_season \
        + spec.temp_noise_k * rng.standard_normal(days)

    def product_noise(sigma: float) -> np.ndarray:
        return np.exp(sigma * rng.standard_normal(days)) if sigma > 0 else np.ones(days)

    channels = {
        PRECIP_CHANNEL: precip * product_noise(spec.precip_obs_noise_std),
        "t2m_k": temp,
        "ssr_jm2": 2.0e7 + 4.0e6 * season + 5.0e5 * rng.standard_normal(days),
        "str_jm2": -5.0e6 + 1.0e6 * season + 2.0e5 * rng.standard_normal(days),
        "tp_mm": precip * product_noise(spec.precip_obs_noise_std),
        "sp_pa": 101325.0 + 250.0 * season + 40.0 * rng.standard_normal(days),
    }
    return SynthWeather(true_precip_mm=precip, channels=channels)


def gen_forcing(spec: BasinSpec, days: int, seed: int,
                start: date = date(2001, 1, 1)) -> ForcingSeries:
    """Forcing channels as a series (the file-facing view of gen_weather)."""
    weather = gen_weather(spec, days, seed)
    dates = DateIndex(start, days)
    missing = {name: np.zeros(days, dtype=bool) for name in weather.channels}
    return ForcingSeries(station_id=spec.basin_id, dates=dates,
                         channels=weather.channels, missing=missing)


def evaporation_loss(spec: BasinSpec, temp_k: np.ndarray) -> np.ndarray:
    """Fraction of rainfall lost before routing, rising linearly with temperature.

    Zero at (mean - amplitude), the full ``evap_coefficient`` at
    (mean + amplitude), clipped in between.
    """
    if spec.evap_coefficient <= 0.0:
        return np.zeros_like(temp_k)
    lo = spec.temp_mean_k - spec.temp_amplitude_k
    frac = (temp_k - lo) / (2.0 * spec.temp_amplitude_k)
    return spec.evap_coefficient * np.clip(frac, 0.0, 1.0)


def linear_reservoir(precip: np.ndarray, spec: BasinSpec,
                     initial_storage: float = 0.0) -> np.ndarray:
    """Route rainfall through one linear store.

    Per day: Q_t = k * S_t, then S_{t+1} = S_t + r * P_t - Q_t. Inputs and
    outputs are depth/day; storage is depth.
    """
    precip = np.asarray(precip, dtype=np.float64)
    k = spec.storage_coefficient
    r = spec.runoff_coefficient
    q = np.empty(precip.shape[0])
    s = float(initial_storage)
    for t in range(precip.shape[0]):
        q[t] = k * s
        s = s + r * precip[t] - q[t]
    return q


def apply_dam(inflow: np.ndarray, dam: DamSpec) -> tuple[np.ndarray, np.ndarray]:
    """Run the fixed-target release rule over a daily inflow series.

    Per day: storage takes the inflow, the release is min(target, storage),
    and anything above capacity spills into the same day's outflow. Returns
    (outflow, level_below_max fraction). Mass is conserved by construction.
    """
    inflow = np.asarray(inflow, dtype=np.float64)
    if np.any(inflow < 0):
        raise ValueError("inflow must be non-negative")
    out = np.empty(inflow.shape[0])
    level = np.empty(inflow.shape[0])
    s = dam.initial_storage
    for t in range(inflow.shape[0]):
        s += inflow[t]
        release = min(dam.target_release, s)
        s -= release
        spill = max(s - dam.capacity, 0.0)
        release += spill
        s -= spill
        out[t] = release
        level[t] = (dam.capacity - s) / dam.capacity
    return out, level


@dataclass
class SynthRecord:
    """One basin's generated truth on a shared daily index."""

    basin_id: str
    dates: DateIndex
    precip_mm: np.ndarray            # latent true precipitation
    temp_k: np.ndarray
    naturalized_m3s: np.ndarray
    regulated_m3s: np.ndarray | None
    level_below_max: np.ndarray | None
    observed_m3s: np.ndarray
    channels: dict[str, np.ndarray] = field(default_factory=dict)


def simulate_basin(spec: BasinSpec, dam: DamSpec | None, days: int, seed: int,
                   start: date = date(2001, 1, 1)) -> SynthRecord:
    """Generate weather, route it, regulate it (optionally), and observe it."""
    weather = gen_weather(spec, days, seed)
    temp = weather.channels["t2m_k"]
    p_eff = weather.true_precip_mm * (1.0 - evaporation_loss(spec, temp))
    q_nat_mm = linear_reservoir(p_eff, spec)
    to_m3s = spec.area_km2 * MM_DAY_TO_M3S_PER_KM2

    regulated_m3s = None
    level = None
    truth_mm = q_nat_mm
    if dam is not None:
        q_reg_mm, level = apply_dam(q_nat_mm, dam)
        regulated_m3s = q_reg_mm * to_m3s
        truth_mm = q_reg_mm

    obs_rng = _basin_rng(seed, spec.basin_id, stream=1)
    factor = np.exp(spec.noise_std * obs_rng.standard_normal(days)) if spec.noise_std > 0 \
        else np.ones(days)
    observed = truth_mm * to_m3s * factor

    return SynthRecord(
        basin_id=spec.basin_id, dates=DateIndex(start, days),
        precip_mm=weather.true_precip_mm, temp_k=temp,
        naturalized_m3s=q_nat_mm * to_m3s,
        regulated_m3s=regulated_m3s, level_below_max=level,
        observed_m3s=observed, channels=weather.channels,
    )


# ---------------------------------------------------------------------------
# File emission


def _fmt(x: float) -> str:
    # repr round-trips float64 exactly, which keeps written files bit-faithful
    return repr(float(x))


def write_gauge_csv(path, dates: DateIndex, values: np.ndarray, missing: np.ndarray,
                    quality: list[str] | None = None):
    days = dates.dates()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "discharge_m3s", "quality"])
        for i, d in enumerate(days):
            code = quality[i] if quality else "1"
            w.writerow([d.isoformat(), "" if missing[i] else _fmt(values[i]), code])


def write_forcing_csv(path, dates: DateIndex, channels: dict[str, np.ndarray],
                      missing: dict[str, np.ndarray] | None = None):
    days = dates.dates()
    names = list(channels)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date"] + names)
        for i, d in enumerate(days):
            row = [d.isoformat()]
            for n in names:
                if missing is not None and missing[n][i]:
                    row.append("")
                else:
                    row.append(_fmt(channels[n][i]))
            w.writerow(row)


def make_dataset(basin_specs: list[BasinSpec], dam_assignments: dict[str, DamSpec],
                 days: int, split: SplitSpec, seed: int, out_dir) -> dict:
    """Generate every basin and write the full ingest layout under ``out_dir``.

    Layout: gauges/<id>.csv, forcing/<id>.csv, naturalized/<id>.csv (the
    natural-flow truth in gauge format), static_attributes.csv,
    dam_levels.csv (when any basin is regulated), natural_monthly.csv, and
    manifest.json. Identical (specs, seed) produce byte-identical files.
    """
    if not basin_specs:
        raise ValueError("no basin specs")
    ids = [s.basin_id for s in basin_specs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate basin_id")
    unknown = sorted(set(dam_assignments) - set(ids))
    if unknown:
        raise ValueError(f"dam assigned to unknown basin: {unknown}")
    if days < split.full_range.n_days:
        raise ValueError(f"days={days} shorter than the split span {split.full_range.n_days}")

    out_dir = Path(out_dir)
    (out_dir / "gauges").mkdir(parents=True, exist_ok=True)
    (out_dir / "forcing").mkdir(exist_ok=True)
    (out_dir / "naturalized").mkdir(exist_ok=True)

    start = split.full_range.start
    dam_rows: list[tuple[str, str, float]] = []
    monthly_rows: list[tuple[str, str, float]] = []
    no_missing = None

    for spec in basin_specs:
        dam = dam_assignments.get(spec.basin_id)
        rec = simulate_basin(spec, dam, days, seed, start=start)
        no_missing = np.zeros(days, dtype=bool)

        write_gauge_csv(out_dir / "gauges" / f"{spec.basin_id}.csv",
                        rec.dates, rec.observed_m3s, no_missing)
        write_forcing_csv(out_dir / "forcing" / f"{spec.basin_id}.csv",
                          rec.dates, rec.channels)
        write_gauge_csv(out_dir / "naturalized" / f"{spec.basin_id}.csv",
                        rec.dates, rec.naturalized_m3s, no_missing)

        if dam is not None:
            day_list = rec.dates.dates()
            for i, d in enumerate(day_list):
                dam_rows.append((d.isoformat(), dam.dam_id, rec.level_below_max[i]))

        nat_gauge = GaugeSeries(station_id=spec.basin_id, dates=rec.dates,
                                discharge=rec.naturalized_m3s,
                                quality=["1"] * days, missing=no_missing)
        monthly = monthly_aggregate(nat_gauge)
        for mi, label in enumerate(monthly.months.labels()):
            if not monthly.missing[mi]:
                monthly_rows.append((label, spec.basin_id, monthly.values[mi]))

    with open(out_dir / "static_attributes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id"] + list(STATIC_ATTR_NAMES))
        for spec in basin_specs:
            attrs = static_attributes(spec)
            w.writerow([spec.basin_id] + [_fmt(v) for v in attrs.values])

    if dam_rows:
        with open(out_dir / "dam_levels.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "dam_id", "level_below_max_frac"])
            for d, dam_id, lvl in dam_rows:
                w.writerow([d, dam_id, _fmt(lvl)])

    monthly_rows.sort(key=lambda r: (r[0], r[1]))
    with open(out_dir / "natural_monthly.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["month", "station_id", "natural_q_m3s"])
        for label, sid, v in monthly_rows:
            w.writerow([label, sid, _fmt(v)])

    manifest = {
        "seed": seed,
        "days": days,
        "start": start.isoformat(),
        "split": split.to_json(),
        "basins": [asdict(s) for s in basin_specs],
        "dams": {bid: asdict(d) for bid, d in sorted(dam_assignments.items())},
        "channels": [PRECIP_CHANNEL] + list(DYNAMIC_CHANNELS),
        "static_attributes": list(STATIC_ATTR_NAMES),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
