"""Candle ingestion and the index arithmetic for leakage-controlled evaluation.

Input files are comma-separated with a ``Datetime,Open,High,Low,Close``
header (``Time`` is accepted as an alias for the timestamp column, matching
common intraday exports; extra columns are ignored). Splitting is purely
positional: the first ``train_fraction`` of rows trains, the rest tests,
and the first ``horizon_h`` rows of the test block are discarded before
evaluation so that no training label's forward-looking close overlaps an
evaluated prediction.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timezone

__all__ = [
    "Candle",
    "SplitSpec",
    "CandleParseError",
    "CandleValidationError",
    "parse_candles",
    "parse_timestamp",
    "temporal_split",
    "leakage_trim",
    "chunk",
]

log = logging.getLogger(__name__)


class CandleParseError(ValueError):
    pass


class CandleValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Candle:
    timestamp: datetime
    open: float
    high: float
    low: float
    close: float


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    horizon_h: int = 50
    chunk_size: int | None = None

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.horizon_h < 1:
            raise ValueError("horizon_h must be >= 1")
        if self.chunk_size is not None:
            # a chunk must leave room for the horizon trim inside its test block
            minimum = self.horizon_h / (1.0 - self.train_fraction)
            if self.chunk_size <= minimum:
                raise ValueError(
                    f"chunk_size {self.chunk_size} too small for horizon "
                    f"{self.horizon_h} at train_fraction {self.train_fraction}"
                )


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 or ``YYYY-MM-DD HH:MM`` timestamps; naive values are UTC."""
    cleaned = text.strip()
    if cleaned.endswith("Z"):
        cleaned = cleaned[:-1] + "+00:00"
    ts = datetime.fromisoformat(cleaned)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


_REQUIRED = ("Open", "High", "Low", "Close")


def parse_candles(text: str, lenient: bool = False) -> list[Candle]:
    """Parse a candle file into validated, time-ordered candles.

    Strict mode raises on the first malformed row, OHLC violation, or
    non-increasing timestamp (errors carry the 1-based line number).
    Lenient mode drops offending rows with a log message instead.
    """
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise CandleParseError("empty input: missing header") from None
    names = [h.strip() for h in header]
    columns: dict[str, int] = {}
    for i, name in enumerate(names):
        columns.setdefault(name, i)
    ts_col = columns.get("Datetime", columns.get("Time"))
    if ts_col is None:
        raise CandleParseError("header must contain a Datetime (or Time) column")
    for name in _REQUIRED:
        if name not in columns:
            raise CandleParseError(f"header missing required column {name!r}")

    candles: list[Candle] = []
    needed = max(ts_col, *(columns[n] for n in _REQUIRED)) + 1
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            if len(row) < needed:
                raise ValueError(f"expected at least {needed} fields, got {len(row)}")
            ts = parse_timestamp(row[ts_col])
            o, h, l, c = (float(row[columns[n]]) for n in _REQUIRED)
        except ValueError as exc:
            if lenient:
                log.warning("dropping malformed row at line %d: %s", lineno, exc)
                continue
            raise CandleParseError(f"line {lineno}: {exc}") from None

        problem = None
        if min(o, h, l, c) <= 0.0:
            problem = "non-positive price"
        elif l > min(o, c) or h < max(o, c):
            problem = f"OHLC violation (H={h}, L={l}, O={o}, C={c})"
        elif candles and ts <= candles[-1].timestamp:
            problem = f"timestamp {ts.isoformat()} does not increase"
        if problem is not None:
            if lenient:
                log.warning("dropping invalid row at line %d: %s", lineno, problem)
                continue
            raise CandleValidationError(f"line {lineno}: {problem}")
        candles.append(Candle(ts, o, h, l, c))
    return candles


def temporal_split(n_rows: int, spec: SplitSpec) -> tuple[range, range]:
    """Contiguous, disjoint train/test index ranges in time order."""
    if n_rows < 10:
        raise ValueError(f"need at least 10 rows to split, got {n_rows}")
    cut = int(n_rows * spec.train_fraction)
    return range(0, cut), range(cut, n_rows)


def leakage_trim(test_range: range, h: int) -> range:
    """Evaluation range: the test block minus its first ``h`` rows."""
    if h < 1:
        raise ValueError("h must be >= 1")
    if len(test_range) <= h:
        raise ValueError(
            f"test block of {len(test_range)} rows leaves no evaluation rows after trimming {h}"
        )
    return range(test_range.start + h, test_range.stop)


def chunk(n_rows: int, size: int = 3225) -> list[range]:
    """Maximal full chunks in time order; a short trailing remainder is dropped."""
    if size < 1:
        raise ValueError("chunk size must be >= 1")
    full = n_rows // size
    return [range(i * size, (i + 1) * size) for i in range(full)]
