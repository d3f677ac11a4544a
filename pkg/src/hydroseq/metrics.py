"""Nash-Sutcliffe efficiency and per-station evaluation reports.

NSE = 1 - sum((obs - pred)^2) / sum((obs - mean(obs))^2), computed over the
jointly unmasked timesteps (non-finite entries count as masked). 1 is a
perfect fit, 0 matches the observed mean, negative is worse than the mean.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class UndefinedNSE(ValueError):
    """Raised when NSE has no value (constant observations or too few points)."""


def nse(observed, predicted) -> float:
    obs = np.asarray(observed, dtype=np.float64)
    pred = np.asarray(predicted, dtype=np.float64)
    if obs.shape != pred.shape:
        raise ValueError(f"length mismatch: {obs.shape} vs {pred.shape}")
    keep = np.isfinite(obs) & np.isfinite(pred)
    obs, pred = obs[keep], pred[keep]
    if obs.size < 2:
        raise UndefinedNSE(f"needs >= 2 jointly unmasked points, got {obs.size}")
    den = np.sum((obs - obs.mean()) ** 2)
    if den == 0.0:
        raise UndefinedNSE("observed series is constant")
    num = np.sum((obs - pred) ** 2)
    return float(1.0 - num / den)


@dataclass
class StationScore:
    station_id: str
    nse: float
    n_obs: int


@dataclass
class EvalReport:
    """Per-station scores plus the summary row: mean, median, count below zero,
    and the empirical CDF of the defined NSE values."""

    stations: list[StationScore]
    mean_nse: float
    median_nse: float
    n_below_zero: int
    cdf: list[tuple[float, float]]
    undefined_stations: list[tuple[str, str]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "stations": [{"station_id": s.station_id, "nse": s.nse, "n_obs": s.n_obs}
                         for s in self.stations],
            "mean_nse": self.mean_nse,
            "median_nse": self.median_nse,
            "n_below_zero": self.n_below_zero,
            "cdf": [[v, p] for v, p in self.cdf],
            "undefined_stations": [{"station_id": s, "reason": r}
                                   for s, r in self.undefined_stations],
        }


def cdf_points(nse_values) -> list[tuple[float, float]]:
    """Ascending (value, i/N) pairs; ties keep their input order."""
    vals = np.asarray(nse_values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("no values")
    order = np.argsort(vals, kind="stable")
    n = vals.size
    return [(float(vals[j]), (i + 1) / n) for i, j in enumerate(order)]


def summarize(per_station: list[StationScore],
              undefined: list[tuple[str, str]] | None = None) -> EvalReport:
    """Summary statistics over the defined per-station NSE values.

    Median of an even count is the mean of the two middle values. Stations are
    sorted by id before the CDF so ties come out in a stable order.
    """
    if not per_station:
        raise ValueError("no station has a defined NSE")
    scores = sorted(per_station, key=lambda s: s.station_id)
    vals = np.array([s.nse for s in scores])
    return EvalReport(
        stations=scores,
        mean_nse=float(vals.mean()),
        median_nse=float(np.median(vals)),
        n_below_zero=int((vals < 0).sum()),
        cdf=cdf_points(vals),
        undefined_stations=sorted(undefined or []),
    )


def evaluate_stations(observed_by_station: dict[str, np.ndarray],
                      predicted_by_station: dict[str, np.ndarray]) -> EvalReport:
    """Score every station, collecting undefined ones with their reason."""
    scores, undefined = [], []
    for sid in sorted(observed_by_station):
        obs = np.asarray(observed_by_station[sid], dtype=np.float64)
        pred = np.asarray(predicted_by_station[sid], dtype=np.float64)
        try:
            value = nse(obs, pred)
        except UndefinedNSE as e:
            undefined.append((sid, str(e)))
            continue
        n_obs = int((np.isfinite(obs) & np.isfinite(pred)).sum())
        scores.append(StationScore(station_id=sid, nse=value, n_obs=n_obs))
    return summarize(scores, undefined)


# ---------------------------------------------------------------------------
# Report artifacts


def write_report(report: EvalReport, out_dir,
                 coords: dict[str, tuple[float, float]] | None = None) -> dict[str, str]:
    """Write report.json, nse_by_station.csv, and nse_cdf.csv under ``out_dir``.

    ``coords`` optionally adds lat/lon columns for external mapping. Files are
    byte-for-byte reproducible for identical reports.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    by_station = out_dir / "nse_by_station.csv"
    with open(by_station, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if coords:
            w.writerow(["station_id", "nse", "n_obs", "lat", "lon"])
            for s in report.stations:
                lat, lon = coords.get(s.station_id, ("", ""))
                w.writerow([s.station_id, repr(s.nse), s.n_obs, lat, lon])
        else:
            w.writerow(["station_id", "nse", "n_obs"])
            for s in report.stations:
                w.writerow([s.station_id, repr(s.nse), s.n_obs])

    cdf_path = out_dir / "nse_cdf.csv"
    with open(cdf_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["nse", "cum_prob"])
        for v, p in report.cdf:
            w.writerow([repr(v), repr(p)])

    return {"report": str(report_path), "by_station": str(by_station), "cdf": str(cdf_path)}
