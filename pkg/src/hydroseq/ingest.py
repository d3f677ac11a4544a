"""CSV readers for the on-disk data layout.

Formats (all UTF-8, header required, ISO-8601 dates, empty field = missing):

- gauge:   ``date,discharge_m3s,quality``
- forcing: ``date,<channel>...`` with unit-suffixed channel names
- statics: ``station_id,<attr>...``
- dam:     ``date,dam_id,level_below_max_frac`` (long format, many dams)
- naturalized monthly: ``month,station_id,natural_q_m3s`` with month ``YYYY-MM``

Parse errors carry the offending file and 1-based line number.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .dates import DateIndex, MonthIndex
from .timeseries import DamLevelSeries, ForcingSeries, GaugeSeries, MonthlySeries, StaticAttributes


class ParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass
class DataDir:
    """Everything parsed from one data directory."""

    gauges: list[GaugeSeries]
    forcings: list[ForcingSeries]
    statics: list[StaticAttributes] | None
    dams: list[DamLevelSeries]
    natural_monthly: dict[str, MonthlySeries] = field(default_factory=dict)


def load_data_dir(root, allowlist: set[str] | None = None) -> DataDir:
    """Parse the standard layout: gauges/, forcing/, static_attributes.csv,
    dam_levels.csv (optional), natural_monthly.csv (optional)."""
    root = Path(root)
    gauge_files = sorted((root / "gauges").glob("*.csv"))
    if not gauge_files:
        raise FileNotFoundError(f"no gauge files under {root / 'gauges'}")
    gauges = [parse_gauge_csv(p, allowlist) for p in gauge_files]
    forcings = [parse_forcing_csv(p) for p in sorted((root / "forcing").glob("*.csv"))]
    statics = None
    if (root / "static_attributes.csv").exists():
        statics = parse_static_csv(root / "static_attributes.csv")
    dams = []
    if (root / "dam_levels.csv").exists():
        dams = parse_dam_csv(root / "dam_levels.csv")
    natural = {}
    if (root / "natural_monthly.csv").exists():
        natural = parse_natural_monthly_csv(root / "natural_monthly.csv")
    return DataDir(gauges=gauges, forcings=forcings, statics=statics,
                   dams=dams, natural_monthly=natural)


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if row]
    return header, rows


def _parse_date(path, lineno: int, text: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(path, lineno, f"malformed date {text!r}") from None


def _parse_float(path, lineno: int, text: str, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(path, lineno, f"malformed {what} {text!r}") from None
    if not np.isfinite(v):
        raise ParseError(path, lineno, f"non-finite {what} {text!r}")
    return v


def _gap_fill(path, entries: list[tuple[int, date, object]]):
    """Expand (line, date, payload) rows to a contiguous daily index.

    Returns (DateIndex, list of payload-or-None per day). Dates must be
    strictly increasing.
    """
    prev = None
    for lineno, d, _ in entries:
        if prev is not None and d <= prev:
            raise ParseError(path, lineno, f"non-monotonic date {d.isoformat()}")
        prev = d
    start = entries[0][1]
    length = (entries[-1][1] - start).days + 1
    slots: list = [None] * length
    for _, d, payload in entries:
        slots[(d - start).days] = payload
    return DateIndex(start, length), slots


def parse_gauge_csv(path, allowlist: set[str] | None = None) -> GaugeSeries:
    """Read one station's gauge file; the station id is the file stem.

    Rows with an empty value or a quality code outside ``allowlist`` are
    masked, not dropped; date gaps are filled with masked days. ``allowlist``
    None accepts every code present.
    """
    path = Path(path)
    header, rows = _read_rows(path)
    if [h.strip() for h in header[:3]] != ["date", "discharge_m3s", "quality"]:
        raise ParseError(path, 1, f"expected header date,discharge_m3s,quality, got {','.join(header)}")
    if not rows:
        raise ParseError(path, 2, "no data rows")

    entries = []
    for lineno, row in rows:
        if len(row) < 3:
            raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
        d = _parse_date(path, lineno, row[0])
        raw, code = row[1].strip(), row[2].strip()
        if raw == "":
            entries.append((lineno, d, (np.nan, code, True)))
            continue
        v = _parse_float(path, lineno, raw, "discharge")
        if v < 0:
            raise ParseError(path, lineno, f"negative discharge {v}")
        masked = allowlist is not None and code not in allowlist
        entries.append((lineno, d, (np.nan if masked else v, code, masked)))

    dates, slots = _gap_fill(path, entries)
    discharge = np.full(dates.length, np.nan)
    quality = [""] * dates.length
    missing = np.ones(dates.length, dtype=bool)
    for i, payload in enumerate(slots):
        if payload is not None:
            discharge[i], quality[i], missing[i] = payload
    return GaugeSeries(station_id=path.stem, dates=dates, discharge=discharge,
                       quality=quality, missing=missing)


def parse_forcing_csv(path) -> ForcingSeries:
    """Read one station's driver channels; the station id is the file stem."""
    path = Path(path)
    header, rows = _read_rows(path)
    if not header or header[0].strip() != "date" or len(header) < 2:
        raise ParseError(path, 1, f"expected header date,<channel>..., got {','.join(header)}")
    names = [h.strip() for h in header[1:]]
    if len(set(names)) != len(names):
        raise ParseError(path, 1, "duplicate channel names")
    if not rows:
        raise ParseError(path, 2, "no data rows")

    entries = []
    for lineno, row in rows:
        if len(row) != len(names) + 1:
            raise ParseError(path, lineno, f"expected {len(names) + 1} fields, got {len(row)}")
        d = _parse_date(path, lineno, row[0])
        vals = []
        for name, cell in zip(names, row[1:]):
            cell = cell.strip()
            vals.append(None if cell == "" else _parse_float(path, lineno, cell, name))
        entries.append((lineno, d, vals))

    dates, slots = _gap_fill(path, entries)
    channels = {n: np.full(dates.length, np.nan) for n in names}
    missing = {n: np.ones(dates.length, dtype=bool) for n in names}
    for i, payload in enumerate(slots):
        if payload is None:
            continue
        for n, v in zip(names, payload):
            if v is not None:
                channels[n][i] = v
                missing[n][i] = False
    return ForcingSeries(station_id=path.stem, dates=dates, channels=channels, missing=missing)


def parse_static_csv(path) -> list[StaticAttributes]:
    """Read the per-station attribute table (one row per station)."""
    path = Path(path)
    header, rows = _read_rows(path)
    if not header or header[0].strip() != "station_id" or len(header) < 2:
        raise ParseError(path, 1, f"expected header station_id,<attr>..., got {','.join(header)}")
    names = [h.strip() for h in header[1:]]
    out, seen = [], set()
    for lineno, row in rows:
        if len(row) != len(names) + 1:
            raise ParseError(path, lineno, f"expected {len(names) + 1} fields, got {len(row)}")
        sid = row[0].strip()
        if sid in seen:
            raise ParseError(path, lineno, f"duplicate station_id {sid}")
        seen.add(sid)
        values = [_parse_float(path, lineno, cell, name) for name, cell in zip(names, row[1:])]
        out.append(StaticAttributes(station_id=sid, names=list(names), values=np.array(values)))
    if not out:
        raise ParseError(path, 2, "no data rows")
    return out


def parse_dam_csv(path) -> list[DamLevelSeries]:
    """Read daily level-below-max fractions for one or more dams."""
    path = Path(path)
    header, rows = _read_rows(path)
    if [h.strip() for h in header[:3]] != ["date", "dam_id", "level_below_max_frac"]:
        raise ParseError(path, 1, f"expected header date,dam_id,level_below_max_frac, got {','.join(header)}")
    by_dam: dict[str, list] = {}
    for lineno, row in rows:
        if len(row) < 3:
            raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
        d = _parse_date(path, lineno, row[0])
        dam_id = row[1].strip()
        cell = row[2].strip()
        if cell == "":
            by_dam.setdefault(dam_id, []).append((lineno, d, None))
            continue
        v = _parse_float(path, lineno, cell, "level_below_max_frac")
        if not 0.0 <= v <= 1.0:
            raise ParseError(path, lineno, f"level fraction {v} outside [0, 1]")
        by_dam.setdefault(dam_id, []).append((lineno, d, v))
    if not by_dam:
        raise ParseError(path, 2, "no data rows")

    out = []
    for dam_id in sorted(by_dam):
        dates, slots = _gap_fill(path, by_dam[dam_id])
        vals = np.full(dates.length, np.nan)
        miss = np.ones(dates.length, dtype=bool)
        for i, payload in enumerate(slots):
            if payload is not None:
                vals[i] = payload
                miss[i] = False
        out.append(DamLevelSeries(dam_id=dam_id, dates=dates, level_below_max=vals, missing=miss))
    return out


def parse_natural_monthly_csv(path) -> dict[str, MonthlySeries]:
    """Read naturalized-model monthly mean discharge, keyed by station."""
    path = Path(path)
    header, rows = _read_rows(path)
    if [h.strip() for h in header[:3]] != ["month", "station_id", "natural_q_m3s"]:
        raise ParseError(path, 1, f"expected header month,station_id,natural_q_m3s, got {','.join(header)}")
    by_station: dict[str, list] = {}
    for lineno, row in rows:
        if len(row) < 3:
            raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
        try:
            y, m = row[0].strip().split("-")
            y, m = int(y), int(m)
            if not 1 <= m <= 12:
                raise ValueError
        except ValueError:
            raise ParseError(path, lineno, f"malformed month {row[0]!r}") from None
        sid = row[1].strip()
        cell = row[2].strip()
        v = None if cell == "" else _parse_float(path, lineno, cell, "natural_q_m3s")
        by_station.setdefault(sid, []).append((lineno, y, m, v))
    if not by_station:
        raise ParseError(path, 2, "no data rows")

    out = {}
    for sid, entries in by_station.items():
        prev = None
        for lineno, y, m, _ in entries:
            key = y * 12 + m
            if prev is not None and key <= prev:
                raise ParseError(path, lineno, f"non-monotonic month {y:04d}-{m:02d} for {sid}")
            prev = key
        y0, m0 = entries[0][1], entries[0][2]
        length = (entries[-1][1] * 12 + entries[-1][2]) - (y0 * 12 + m0) + 1
        vals = np.full(length, np.nan)
        miss = np.ones(length, dtype=bool)
        for _, y, m, v in entries:
            i = (y * 12 + m) - (y0 * 12 + m0)
            if v is not None:
                vals[i] = v
                miss[i] = False
        out[sid] = MonthlySeries(station_id=sid, months=MonthIndex(y0, m0, length),
                                 values=vals, missing=miss)
    return out
