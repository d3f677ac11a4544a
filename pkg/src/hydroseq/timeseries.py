"""Station time series: containers, dataset assembly, normalization, windowing,
and monthly aggregation.

Missing values are carried as a boolean mask (True = no usable value) and the
value slot itself holds NaN, so accidental use of a masked entry surfaces
immediately. No function here mutates its inputs; everything returns new
objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .dates import DateIndex, DateRange, MonthIndex, SplitSpec, days_in_month, month_span

# Floor applied to any fitted standard deviation so constant series stay usable.
STD_FLOOR = 1e-8


def _as_float(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def _as_bool(a) -> np.ndarray:
    return np.asarray(a, dtype=bool)


# ---------------------------------------------------------------------------
# Series containers


@dataclass
class GaugeSeries:
    """One station's daily discharge record.

    ``discharge`` is in m3/s; entries where ``missing`` is True hold NaN.
    Unmasked values must be finite and non-negative.
    """

    station_id: str
    dates: DateIndex
    discharge: np.ndarray
    quality: list[str]
    missing: np.ndarray

    def __post_init__(self):
        self.discharge = _as_float(self.discharge)
        self.missing = _as_bool(self.missing)
        n = self.dates.length
        if not (len(self.discharge) == len(self.quality) == len(self.missing) == n):
            raise ValueError(f"gauge {self.station_id}: series lengths do not match dates ({n})")
        valid = self.discharge[~self.missing]
        if valid.size and (not np.all(np.isfinite(valid)) or np.any(valid < 0)):
            raise ValueError(f"gauge {self.station_id}: unmasked discharge must be finite and >= 0")

    def n_unmasked(self) -> int:
        return int((~self.missing).sum())


@dataclass
class ForcingSeries:
    """Aligned meteorological driver channels for one station.

    Channel names carry unit suffixes (``precip_mm``, ``t2m_k``, ``ssr_jm2``,
    ``str_jm2``, ``sp_pa``); dict order is the channel order.
    """

    station_id: str
    dates: DateIndex
    channels: dict[str, np.ndarray]
    missing: dict[str, np.ndarray]

    def __post_init__(self):
        n = self.dates.length
        self.channels = {k: _as_float(v) for k, v in self.channels.items()}
        self.missing = {k: _as_bool(v) for k, v in self.missing.items()}
        if set(self.channels) != set(self.missing):
            raise ValueError(f"forcing {self.station_id}: channel/mask name mismatch")
        for name, vals in self.channels.items():
            if len(vals) != n or len(self.missing[name]) != n:
                raise ValueError(f"forcing {self.station_id}: channel {name} length != {n}")


@dataclass
class StaticAttributes:
    """Time-invariant catchment descriptors for one station."""

    station_id: str
    names: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_float(self.values)
        if len(self.names) != len(self.values):
            raise ValueError(f"statics {self.station_id}: {len(self.names)} names vs {len(self.values)} values")


@dataclass
class DamLevelSeries:
    """Daily reservoir level-below-max fraction (0 = full, 1 = empty)."""

    dam_id: str
    dates: DateIndex
    level_below_max: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        self.level_below_max = _as_float(self.level_below_max)
        self.missing = _as_bool(self.missing)
        n = self.dates.length
        if len(self.level_below_max) != n or len(self.missing) != n:
            raise ValueError(f"dam {self.dam_id}: series lengths do not match dates ({n})")
        valid = self.level_below_max[~self.missing]
        if valid.size and (np.any(valid < 0) or np.any(valid > 1)):
            raise ValueError(f"dam {self.dam_id}: level fraction outside [0, 1]")


@dataclass
class MonthlySeries:
    """Calendar-month aggregate of a daily series."""

    station_id: str
    months: MonthIndex
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        self.values = _as_float(self.values)
        self.missing = _as_bool(self.missing)
        if len(self.values) != self.months.length or len(self.missing) != self.months.length:
            raise ValueError(f"monthly {self.station_id}: lengths do not match month index")


# ---------------------------------------------------------------------------
# Dataset assembly


@dataclass
class Station:
    """One station's gauge + forcing (+ optional statics) on the dataset calendar."""

    station_id: str
    discharge: np.ndarray
    discharge_missing: np.ndarray
    channels: dict[str, np.ndarray]
    channel_missing: dict[str, np.ndarray]
    static: np.ndarray | None = None


@dataclass
class Dataset:
    """Stations aligned on one calendar covering the full split span."""

    calendar: DateIndex
    split: SplitSpec
    stations: dict[str, Station]
    static_names: list[str] = field(default_factory=list)
    dam_levels: dict[str, DamLevelSeries] = field(default_factory=dict)
    exclusions: list[tuple[str, str]] = field(default_factory=list)
    normalized: bool = False

    def channel_names(self) -> list[str]:
        first = next(iter(self.stations.values()))
        return list(first.channels)

    def station_ids(self) -> list[str]:
        return sorted(self.stations)

    def range_indices(self, rng: DateRange) -> tuple[int, int]:
        """Half-open (i0, i1) calendar indices covering ``rng`` (clipped)."""
        i0 = max(0, (rng.start - self.calendar.start).days)
        i1 = min(self.calendar.length, (rng.end - self.calendar.start).days + 1)
        if i1 <= i0:
            raise ValueError(f"range {rng.to_pair()} does not intersect the dataset calendar")
        return i0, i1


def _reindex(src_dates: DateIndex, values: np.ndarray, missing: np.ndarray,
             calendar: DateIndex) -> tuple[np.ndarray, np.ndarray]:
    """Place a series onto ``calendar``; days outside the source are masked NaN."""
    out = np.full(calendar.length, np.nan)
    out_missing = np.ones(calendar.length, dtype=bool)
    lo = max(src_dates.start, calendar.start)
    hi = min(src_dates.end, calendar.end)
    if lo <= hi:
        s0 = (lo - src_dates.start).days
        s1 = (hi - src_dates.start).days + 1
        c0 = (lo - calendar.start).days
        c1 = (hi - calendar.start).days + 1
        out[c0:c1] = values[s0:s1]
        out_missing[c0:c1] = missing[s0:s1]
        out[c0:c1][out_missing[c0:c1]] = np.nan
    return out, out_missing


def build_dataset(gauges: list[GaugeSeries], forcings: list[ForcingSeries],
                  statics: list[StaticAttributes] | None, split: SplitSpec,
                  dam_levels: list[DamLevelSeries] | None = None) -> Dataset:
    """Align gauges with their forcings on the calendar spanning all three splits.

    Stations are matched by ``station_id``. A station is excluded (with a
    reason recorded in ``Dataset.exclusions``) rather than failing the whole
    build when it has no forcing, no static attributes while statics are in
    use, or no usable discharge inside the split span.

    Raises ValueError on duplicate station ids, inconsistent channel or
    attribute sets, or when no station survives.
    """
    ids = [g.station_id for g in gauges]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate station_id in gauges: {dupes}")
    forcing_by_id = {}
    for f in forcings:
        if f.station_id in forcing_by_id:
            raise ValueError(f"duplicate station_id in forcings: {f.station_id}")
        forcing_by_id[f.station_id] = f

    static_by_id: dict[str, StaticAttributes] = {}
    static_names: list[str] = []
    if statics:
        static_names = list(statics[0].names)
        for s in statics:
            if list(s.names) != static_names:
                raise ValueError(f"statics {s.station_id}: attribute names differ from {statics[0].station_id}")
            if s.station_id in static_by_id:
                raise ValueError(f"duplicate station_id in statics: {s.station_id}")
            static_by_id[s.station_id] = s

    calendar = DateIndex(split.full_range.start, split.full_range.n_days)
    stations: dict[str, Station] = {}
    exclusions: list[tuple[str, str]] = []
    channel_names: list[str] | None = None

    for g in gauges:
        f = forcing_by_id.get(g.station_id)
        if f is None:
            exclusions.append((g.station_id, "no forcing series"))
            continue
        if channel_names is None:
            channel_names = list(f.channels)
        elif list(f.channels) != channel_names:
            raise ValueError(f"forcing {g.station_id}: channels {list(f.channels)} differ from {channel_names}")

        q, q_missing = _reindex(g.dates, g.discharge, g.missing, calendar)
        if not (~q_missing).any():
            exclusions.append((g.station_id, "no usable discharge within the split span"))
            continue
        chans, chan_missing = {}, {}
        for name in f.channels:
            chans[name], chan_missing[name] = _reindex(f.dates, f.channels[name], f.missing[name], calendar)

        static_vec = None
        if statics:
            s = static_by_id.get(g.station_id)
            if s is None:
                exclusions.append((g.station_id, "no static attributes"))
                continue
            static_vec = s.values.copy()

        stations[g.station_id] = Station(
            station_id=g.station_id,
            discharge=q, discharge_missing=q_missing,
            channels=chans, channel_missing=chan_missing,
            static=static_vec,
        )

    if not stations:
        raise ValueError("no station covers the split span (empty intersection); "
                         f"exclusions: {exclusions}")

    dams: dict[str, DamLevelSeries] = {}
    for d in dam_levels or []:
        if d.dam_id in dams:
            raise ValueError(f"duplicate dam_id: {d.dam_id}")
        vals, miss = _reindex(d.dates, d.level_below_max, d.missing, calendar)
        dams[d.dam_id] = DamLevelSeries(d.dam_id, calendar, vals, miss)

    return Dataset(calendar=calendar, split=split, stations=stations,
                   static_names=static_names, dam_levels=dams, exclusions=exclusions)


# ---------------------------------------------------------------------------
# Normalization


@dataclass
class NormStats:
    """Per-channel and per-station standardization statistics.

    ``channel_stats`` is keyed by channel name and also carries the
    pseudo-channels ``static:<attr>`` (fitted across stations) and
    ``dam:<dam_id>`` (fitted over the train range). ``discharge_stats`` is per
    station. Stds are population (divide by N) and floored at ``STD_FLOOR``;
    floored names are recorded in ``constant_flags``.
    """

    channel_stats: dict[str, tuple[float, float]]
    discharge_stats: dict[str, tuple[float, float]]
    fitted_on: str = "train"
    log_discharge: bool = False
    constant_flags: list[str] = field(default_factory=list)

    def normalize_discharge(self, station_id: str, q: np.ndarray) -> np.ndarray:
        mean, std = self.discharge_stats[station_id]
        x = np.log1p(q) if self.log_discharge else q
        return (x - mean) / std

    def denormalize_discharge(self, station_id: str, z: np.ndarray) -> np.ndarray:
        mean, std = self.discharge_stats[station_id]
        x = z * std + mean
        return np.expm1(x) if self.log_discharge else x

    def to_json(self) -> dict:
        return {
            "channel_stats": {k: list(v) for k, v in self.channel_stats.items()},
            "discharge_stats": {k: list(v) for k, v in self.discharge_stats.items()},
            "fitted_on": self.fitted_on,
            "log_discharge": self.log_discharge,
            "constant_flags": list(self.constant_flags),
        }

    @staticmethod
    def from_json(obj: dict) -> "NormStats":
        return NormStats(
            channel_stats={k: (float(v[0]), float(v[1])) for k, v in obj["channel_stats"].items()},
            discharge_stats={k: (float(v[0]), float(v[1])) for k, v in obj["discharge_stats"].items()},
            fitted_on=obj.get("fitted_on", "train"),
            log_discharge=bool(obj.get("log_discharge", False)),
            constant_flags=list(obj.get("constant_flags", [])),
        )


def _mean_std(values: np.ndarray, name: str, flags: list[str]) -> tuple[float, float]:
    mean = float(values.mean())
    std = float(values.std())  # population
    if std < STD_FLOOR:
        std = STD_FLOOR
        flags.append(name)
    return mean, std


def fit_normalizer(dataset: Dataset, log_discharge: bool = False) -> NormStats:
    """Fit standardization stats on the train range only.

    Driver channels are pooled across stations; discharge is per station;
    static attributes are fitted across the station population; dam levels per
    dam. Every (station, channel) needs >= 2 unmasked train values.
    """
    if dataset.normalized:
        raise ValueError("dataset is already normalized")
    i0, i1 = dataset.range_indices(dataset.split.train)
    flags: list[str] = []
    channel_stats: dict[str, tuple[float, float]] = {}

    for name in dataset.channel_names():
        pooled = []
        for sid, st in sorted(dataset.stations.items()):
            vals = st.channels[name][i0:i1]
            keep = ~st.channel_missing[name][i0:i1]
            if keep.sum() < 2:
                raise ValueError(f"channel {name} at station {sid}: fewer than 2 unmasked train values")
            pooled.append(vals[keep])
        channel_stats[name] = _mean_std(np.concatenate(pooled), name, flags)

    for attr_i, attr in enumerate(dataset.static_names):
        vals = np.array([st.static[attr_i] for _, st in sorted(dataset.stations.items())
                         if st.static is not None])
        channel_stats[f"static:{attr}"] = _mean_std(vals, f"static:{attr}", flags)

    for dam_id, dam in sorted(dataset.dam_levels.items()):
        vals = dam.level_below_max[i0:i1]
        keep = ~dam.missing[i0:i1]
        if keep.sum() < 2:
            raise ValueError(f"dam {dam_id}: fewer than 2 unmasked train values")
        channel_stats[f"dam:{dam_id}"] = _mean_std(vals[keep], f"dam:{dam_id}", flags)

    discharge_stats: dict[str, tuple[float, float]] = {}
    for sid, st in sorted(dataset.stations.items()):
        vals = st.discharge[i0:i1]
        keep = ~st.discharge_missing[i0:i1]
        if keep.sum() < 2:
            raise ValueError(f"discharge at station {sid}: fewer than 2 unmasked train values")
        v = np.log1p(vals[keep]) if log_discharge else vals[keep]
        discharge_stats[sid] = _mean_std(v, f"discharge:{sid}", flags)

    return NormStats(channel_stats=channel_stats, discharge_stats=discharge_stats,
                     fitted_on="train", log_discharge=log_discharge, constant_flags=flags)


def transform(stats: NormStats, dataset: Dataset, direction: str = "forward") -> Dataset:
    """Standardize (``forward``) or de-standardize (``inverse``) a dataset.

    forward: z = (x - mean) / std on every unmasked value (discharge goes
    through log1p first when the stats were fitted that way). inverse is the
    exact round trip.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    if direction == "forward" and dataset.normalized:
        raise ValueError("dataset is already normalized")
    if direction == "inverse" and not dataset.normalized:
        raise ValueError("dataset is not normalized")

    for name in dataset.channel_names():
        if name not in stats.channel_stats:
            raise ValueError(f"unknown channel name: {name}")
    for attr in dataset.static_names:
        if f"static:{attr}" not in stats.channel_stats:
            raise ValueError(f"unknown channel name: static:{attr}")
    for dam_id in dataset.dam_levels:
        if f"dam:{dam_id}" not in stats.channel_stats:
            raise ValueError(f"unknown channel name: dam:{dam_id}")
    for sid in dataset.stations:
        if sid not in stats.discharge_stats:
            raise ValueError(f"no discharge stats for station {sid}")

    def fwd(x, mean, std):
        return (x - mean) / std

    def inv(x, mean, std):
        return x * std + mean

    f = fwd if direction == "forward" else inv

    stations = {}
    for sid, st in dataset.stations.items():
        mean, std = stats.discharge_stats[sid]
        q = st.discharge
        if direction == "forward":
            q = np.log1p(q) if stats.log_discharge else q
            q = fwd(q, mean, std)
        else:
            q = inv(q, mean, std)
            q = np.expm1(q) if stats.log_discharge else q
        chans = {name: f(vals, *stats.channel_stats[name]) for name, vals in st.channels.items()}
        static = None
        if st.static is not None:
            static = np.array([f(st.static[i], *stats.channel_stats[f"static:{attr}"])
                               for i, attr in enumerate(dataset.static_names)])
        stations[sid] = Station(
            station_id=sid,
            discharge=q, discharge_missing=st.discharge_missing.copy(),
            channels=chans,
            channel_missing={k: v.copy() for k, v in st.channel_missing.items()},
            static=static,
        )

    dams = {}
    for dam_id, dam in dataset.dam_levels.items():
        vals = f(dam.level_below_max, *stats.channel_stats[f"dam:{dam_id}"])
        d = DamLevelSeries.__new__(DamLevelSeries)  # skip [0,1] check on z-scores
        d.dam_id, d.dates, d.level_below_max, d.missing = dam_id, dam.dates, vals, dam.missing.copy()
        dams[dam_id] = d

    return Dataset(calendar=dataset.calendar, split=dataset.split, stations=stations,
                   static_names=list(dataset.static_names), dam_levels=dams,
                   exclusions=list(dataset.exclusions),
                   normalized=(direction == "forward"))


# ---------------------------------------------------------------------------
# Windowing


@dataclass(frozen=True)
class WindowPolicy:
    """Missing-input handling inside a window.

    Gaps of at most ``max_gap_days`` consecutive masked rows are linearly
    interpolated per channel; a longer gap, a gap touching the window edge
    (no anchor on one side), or more than ``max_masked_frac`` masked rows
    drops the window.
    """

    max_gap_days: int = 3
    max_masked_frac: float = 0.10


@dataclass
class WindowSample:
    """One training example: L input days ending the day before ``target_date``."""

    station_id: str
    inputs: np.ndarray  # (L, F)
    target: float
    target_date: date


def _masked_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) index pairs of consecutive True runs."""
    runs = []
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def _window_ok(rmask: np.ndarray, policy: WindowPolicy) -> bool:
    L = len(rmask)
    n_masked = int(rmask.sum())
    if n_masked == 0:
        return True
    if n_masked > policy.max_masked_frac * L:
        return False
    for a, b in _masked_runs(rmask):
        if b - a + 1 > policy.max_gap_days:
            return False
        if a == 0 or b == L - 1:
            return False
    return True


def _fill_window(win: np.ndarray, col_masks: np.ndarray) -> np.ndarray:
    """Linearly interpolate masked entries per column; anchors are guaranteed."""
    out = win.copy()
    L = win.shape[0]
    xs = np.arange(L, dtype=np.float64)
    for j in range(win.shape[1]):
        m = col_masks[:, j]
        if m.any():
            out[m, j] = np.interp(xs[m], xs[~m], win[~m, j])
    return out


@dataclass
class FeatureMatrix:
    """Per-station input matrix for a resolved feature schema."""

    schema: list[str]
    values: np.ndarray        # (T, F); masked entries NaN
    col_missing: np.ndarray   # (T, F) bool
    row_missing: np.ndarray   # (T,) bool, any channel masked that day


def resolve_schema(dataset: Dataset, feature_schema: list[str]) -> dict[str, FeatureMatrix]:
    """Build the (T, F) input matrix per station for an ordered feature schema.

    Schema entries name a forcing channel, a ``static:<attr>`` (replicated on
    every timestep), or a ``dam:<dam_id>`` level series. Missing sources raise
    ValueError naming the entry.
    """
    if not feature_schema:
        raise ValueError("empty feature schema")
    T = dataset.calendar.length
    out = {}
    for sid, st in dataset.stations.items():
        cols, masks = [], []
        for name in feature_schema:
            if name.startswith("static:"):
                attr = name.split(":", 1)[1]
                if attr not in dataset.static_names:
                    raise ValueError(f"missing required channel: {name}")
                if st.static is None:
                    raise ValueError(f"station {sid} has no static attributes for {name}")
                idx = dataset.static_names.index(attr)
                cols.append(np.full(T, st.static[idx]))
                masks.append(np.zeros(T, dtype=bool))
            elif name.startswith("dam:"):
                dam_id = name.split(":", 1)[1]
                if dam_id not in dataset.dam_levels:
                    raise ValueError(f"missing required channel: {name}")
                dam = dataset.dam_levels[dam_id]
                cols.append(dam.level_below_max)
                masks.append(dam.missing)
            else:
                if name not in st.channels:
                    raise ValueError(f"missing required channel: {name}")
                cols.append(st.channels[name])
                masks.append(st.channel_missing[name])
        values = np.column_stack(cols)
        col_missing = np.column_stack(masks)
        out[sid] = FeatureMatrix(schema=list(feature_schema), values=values,
                                 col_missing=col_missing,
                                 row_missing=col_missing.any(axis=1))
    return out


def make_windows(dataset: Dataset, L: int, feature_schema: list[str],
                 split_range: DateRange, policy: WindowPolicy = WindowPolicy(),
                 stations: list[str] | None = None) -> list[WindowSample]:
    """Slide L-day input windows over each station.

    For each day t inside ``split_range`` with at least L preceding calendar
    days, the candidate window has input rows t-L..t-1 and target day t.
    Windows with a masked target or inputs violating ``policy`` are dropped.
    Returned samples are ordered by station id, then date.
    """
    if L < 1:
        raise ValueError(f"sequence length must be >= 1, got {L}")
    mats = resolve_schema(dataset, feature_schema)
    i0 = max(L, (split_range.start - dataset.calendar.start).days)
    i1 = min(dataset.calendar.length, (split_range.end - dataset.calendar.start).days + 1)
    samples: list[WindowSample] = []
    ids = sorted(stations) if stations is not None else dataset.station_ids()
    for sid in ids:
        if sid not in dataset.stations:
            raise ValueError(f"unknown station: {sid}")
        st = dataset.stations[sid]
        mat = mats[sid]
        for t in range(i0, i1):
            if st.discharge_missing[t]:
                continue
            rmask = mat.row_missing[t - L:t]
            if not _window_ok(rmask, policy):
                continue
            win = mat.values[t - L:t]
            if rmask.any():
                win = _fill_window(win, mat.col_missing[t - L:t])
            samples.append(WindowSample(
                station_id=sid,
                inputs=win,
                target=float(st.discharge[t]),
                target_date=dataset.calendar.date_at(t),
            ))
    return samples


def stack_windows(samples: list[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (N, L, F) inputs and (N,) targets."""
    X = np.stack([s.inputs for s in samples])
    y = np.array([s.target for s in samples])
    return X, y


# ---------------------------------------------------------------------------
# Monthly aggregation


def _aggregate_daily(dates: DateIndex, values: np.ndarray, missing: np.ndarray,
                     how: str, max_masked_frac: float) -> tuple[MonthIndex, np.ndarray, np.ndarray]:
    months = month_span(dates)
    out = np.full(months.length, np.nan)
    out_missing = np.ones(months.length, dtype=bool)
    for i in range(months.length):
        y, m = months.year_month_at(i)
        n_days = days_in_month(y, m)
        first = date(y, m, 1)
        lo = max(first, dates.start)
        hi = min(date(y, m, n_days), dates.end)
        a = (lo - dates.start).days
        b = (hi - dates.start).days + 1
        in_series = b - a
        keep = ~missing[a:b]
        n_masked = (n_days - in_series) + int(missing[a:b].sum())
        if n_masked > max_masked_frac * n_days or keep.sum() == 0:
            continue
        vals = values[a:b][keep]
        out[i] = vals.sum() if how == "sum" else vals.mean()
        out_missing[i] = False
    return months, out, out_missing


def _check_complete_month(dates: DateIndex):
    first = dates.start
    if first.day != 1:
        first = date(first.year + first.month // 12, first.month % 12 + 1, 1)
    last_full_end = date(dates.end.year, dates.end.month, days_in_month(dates.end.year, dates.end.month))
    if last_full_end != dates.end:
        prev = date(dates.end.year, dates.end.month, 1) - timedelta(days=1)
        last_full_end = prev
    if first > last_full_end:
        raise ValueError("series spans no complete calendar month")


def monthly_aggregate(series, max_masked_frac: float = 0.20):
    """Aggregate a daily series to calendar months.

    Cumulative channels (names ending ``_mm``, i.e. daily depths) are summed
    over unmasked days; everything else, including discharge, is averaged. A
    month with more than ``max_masked_frac`` of its days masked (days outside
    the series count as masked) comes out masked.

    GaugeSeries -> MonthlySeries; ForcingSeries -> dict of channel name to
    MonthlySeries.
    """
    if isinstance(series, GaugeSeries):
        _check_complete_month(series.dates)
        months, vals, miss = _aggregate_daily(series.dates, series.discharge,
                                              series.missing, "mean", max_masked_frac)
        return MonthlySeries(series.station_id, months, vals, miss)
    if isinstance(series, ForcingSeries):
        _check_complete_month(series.dates)
        out = {}
        for name, vals in series.channels.items():
            how = "sum" if name.endswith("_mm") else "mean"
            months, mvals, mmiss = _aggregate_daily(series.dates, vals,
                                                    series.missing[name], how, max_masked_frac)
            out[name] = MonthlySeries(series.station_id, months, mvals, mmiss)
        return out
    raise TypeError(f"cannot aggregate {type(series).__name__}")
