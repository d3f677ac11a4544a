"""Daily and monthly calendar indexing.

All date arithmetic is proleptic Gregorian via :mod:`datetime`. A series is
anchored by its start date and a length; there is no per-day date array, which
keeps alignment checks cheap and unambiguous.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass
from datetime import date, timedelta


@dataclass(frozen=True)
class DateIndex:
    """Contiguous run of calendar days: ``start``, ``start+1``, ... (daily spacing)."""

    start: date
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"DateIndex length must be >= 1, got {self.length}")

    @property
    def end(self) -> date:
        """Last day covered (inclusive)."""
        return self.start + timedelta(days=self.length - 1)

    def date_at(self, i: int) -> date:
        if not 0 <= i < self.length:
            raise IndexError(f"day index {i} out of range [0, {self.length})")
        return self.start + timedelta(days=i)

    def index_of(self, d: date) -> int:
        """Offset of ``d`` within the index; raises KeyError if outside."""
        off = (d - self.start).days
        if not 0 <= off < self.length:
            raise KeyError(f"{d.isoformat()} outside index {self.start}..{self.end}")
        return off

    def contains(self, d: date) -> bool:
        return 0 <= (d - self.start).days < self.length

    def dates(self) -> list[date]:
        return [self.start + timedelta(days=i) for i in range(self.length)]


@dataclass(frozen=True)
class DateRange:
    """Inclusive calendar-day range."""

    start: date
    end: date

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"range end {self.end} before start {self.start}")

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    def contains(self, d: date) -> bool:
        return self.start <= d <= self.end

    @staticmethod
    def parse(pair) -> "DateRange":
        """Build from an ``[start, end]`` pair of ISO-8601 strings."""
        s, e = pair
        return DateRange(date.fromisoformat(s), date.fromisoformat(e))

    def to_pair(self) -> list[str]:
        return [self.start.isoformat(), self.end.isoformat()]


@dataclass(frozen=True)
class SplitSpec:
    """Chronologically ordered, non-overlapping train/validation/test ranges."""

    train: DateRange
    validation: DateRange
    test: DateRange

    def __post_init__(self):
        if not (self.train.end < self.validation.start and self.validation.end < self.test.start):
            raise ValueError(
                "split ranges must be ordered and non-overlapping: "
                f"train {self.train.to_pair()}, validation {self.validation.to_pair()}, "
                f"test {self.test.to_pair()}"
            )

    @property
    def full_range(self) -> DateRange:
        return DateRange(self.train.start, self.test.end)

    def range_for(self, name: str) -> DateRange:
        try:
            return {"train": self.train, "validation": self.validation, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split name {name!r}") from None

    @staticmethod
    def from_json(obj: dict) -> "SplitSpec":
        return SplitSpec(
            train=DateRange.parse(obj["train"]),
            validation=DateRange.parse(obj["validation"]),
            test=DateRange.parse(obj["test"]),
        )

    def to_json(self) -> dict:
        return {
            "train": self.train.to_pair(),
            "validation": self.validation.to_pair(),
            "test": self.test.to_pair(),
        }


@dataclass(frozen=True)
class MonthIndex:
    """Contiguous run of calendar months starting at (year, month)."""

    year: int
    month: int
    length: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")
        if self.length < 1:
            raise ValueError(f"MonthIndex length must be >= 1, got {self.length}")

    def year_month_at(self, i: int) -> tuple[int, int]:
        if not 0 <= i < self.length:
            raise IndexError(f"month index {i} out of range [0, {self.length})")
        m0 = (self.year * 12 + self.month - 1) + i
        return m0 // 12, m0 % 12 + 1

    def index_of(self, year: int, month: int) -> int:
        off = (year * 12 + month) - (self.year * 12 + self.month)
        if not 0 <= off < self.length:
            raise KeyError(f"{year:04d}-{month:02d} outside month index")
        return off

    def labels(self) -> list[str]:
        return [f"{y:04d}-{m:02d}" for y, m in (self.year_month_at(i) for i in range(self.length))]


def days_in_month(year: int, month: int) -> int:
    return calendar.monthrange(year, month)[1]


def month_span(idx: DateIndex) -> MonthIndex:
    """Months overlapped by a daily index, first to last."""
    first = idx.start
    last = idx.end
    length = (last.year * 12 + last.month) - (first.year * 12 + first.month) + 1
    return MonthIndex(first.year, first.month, length)
