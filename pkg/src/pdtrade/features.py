"""Derives the per-bar feature vector and forward-horizon labels from candles.

Everything here is causal: each value at index t is a function of candles
at indices <= t only. A local price extreme needs its right neighbour to
be observed before it exists, so a swing formed at bar i is first
reported at bar i+1. Warm-up rows where any indicator is still undefined
are dropped from the assembled frame; rows whose forward label is not yet
known are kept (they are still predictable) but flagged unlabeled.

Feature column order is fixed:
``Dist_SH, Dist_SL, OB, MA_20, MA_50, RSI, diff``.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import Candle, parse_timestamp

__all__ = [
    "FeatureConfig",
    "FeatureFrame",
    "InsufficientHistoryError",
    "swing_points",
    "order_block",
    "moving_average",
    "rsi",
    "make_labels",
    "assemble_features",
]

CSV_HEADER = "Datetime,Dist_SH,Dist_SL,OB,MA_20,MA_50,RSI,diff,Close,Label"


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    ma_fast: int = 20
    ma_slow: int = 50
    rsi_period: int = 14
    ob_window: int = 5
    ob_pct: float = 0.002
    horizon: int = 50

    def __post_init__(self):
        for name in ("ma_fast", "ma_slow", "rsi_period", "ob_window", "horizon"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.ob_pct <= 0.0:
            raise ValueError("ob_pct must be positive")


def _ffill(values: np.ndarray) -> np.ndarray:
    idx = np.where(~np.isnan(values), np.arange(values.size), -1)
    np.maximum.accumulate(idx, out=idx)
    return np.where(idx >= 0, values[np.maximum(idx, 0)], np.nan)


def swing_points(highs, lows) -> tuple[np.ndarray, np.ndarray]:
    """Most recent confirmed local extreme at each index, NaN before any exists.

    Bar i is a swing high iff high[i] strictly exceeds both neighbours
    (swing low symmetrically on the lows); it becomes visible at i+1.
    """
    h = np.asarray(highs, dtype=np.float64)
    l = np.asarray(lows, dtype=np.float64)
    n = h.size
    sh = np.full(n, np.nan)
    sl = np.full(n, np.nan)
    if n >= 3:
        hi = np.flatnonzero((h[1:-1] > h[:-2]) & (h[1:-1] > h[2:])) + 1
        sh[hi + 1] = h[hi]
        sh = _ffill(sh)
        lo = np.flatnonzero((l[1:-1] < l[:-2]) & (l[1:-1] < l[2:])) + 1
        sl[lo + 1] = l[lo]
        sl = _ffill(sl)
    return sh, sl


def order_block(highs, lows, closes, window: int = 5, pct: float = 0.002) -> np.ndarray:
    """1.0 where the trailing window's high-low range is below pct of the close.

    Strict comparison; the window includes the current bar. NaN for the
    first window-1 bars.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    h = np.asarray(highs, dtype=np.float64)
    l = np.asarray(lows, dtype=np.float64)
    c = np.asarray(closes, dtype=np.float64)
    out = np.full(c.size, np.nan)
    if c.size >= window:
        rolling_high = sliding_window_view(h, window).max(axis=1)
        rolling_low = sliding_window_view(l, window).min(axis=1)
        spread = rolling_high - rolling_low
        out[window - 1 :] = (spread < pct * c[window - 1 :]).astype(np.float64)
    return out


def moving_average(closes, window: int) -> np.ndarray:
    """Trailing arithmetic mean ending at each index; NaN during warm-up."""
    if window < 1:
        raise ValueError("window must be >= 1")
    c = np.asarray(closes, dtype=np.float64)
    out = np.full(c.size, np.nan)
    if c.size >= window:
        out[window - 1 :] = sliding_window_view(c, window).mean(axis=1)
    return out


def rsi(closes, period: int = 14) -> np.ndarray:
    """Relative strength from simple trailing means of gains and losses.

    RSI = 100 - 100/(1+RS) with RS = mean gain / mean loss over the last
    ``period`` one-bar changes. All-gain windows read 100, flat windows 50.
    Undefined (NaN) for the first ``period`` indices.
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    c = np.asarray(closes, dtype=np.float64)
    if c.size <= period:
        raise ValueError(f"need more than {period} closes, got {c.size}")
    delta = np.diff(c)
    gains = np.where(delta > 0.0, delta, 0.0)
    losses = np.where(delta < 0.0, -delta, 0.0)
    avg_gain = sliding_window_view(gains, period).mean(axis=1)
    avg_loss = sliding_window_view(losses, period).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rs = avg_gain / avg_loss
        value = 100.0 - 100.0 / (1.0 + rs)
    value = np.where((avg_loss == 0.0) & (avg_gain > 0.0), 100.0, value)
    value = np.where((avg_loss == 0.0) & (avg_gain == 0.0), 50.0, value)
    out = np.full(c.size, np.nan)
    out[period:] = value
    return out


def make_labels(closes, h: int = 50) -> np.ndarray:
    """1.0 where the close ``h`` bars ahead strictly exceeds the current close.

    The final ``h`` entries are NaN: their horizon lies beyond the data.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    c = np.asarray(closes, dtype=np.float64)
    out = np.full(c.size, np.nan)
    if c.size > h:
        out[: c.size - h] = (c[h:] > c[: c.size - h]).astype(np.float64)
    return out


@dataclass
class FeatureFrame:
    """Time-aligned feature matrix plus close, timestamp and optional label."""

    timestamps: list[datetime]
    features: np.ndarray  # (n, 7), column order as in CSV_HEADER
    closes: np.ndarray
    labels: np.ndarray  # 0.0 / 1.0, NaN where the horizon is unknown

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def labeled_mask(self) -> np.ndarray:
        return ~np.isnan(self.labels)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for i, ts in enumerate(self.timestamps):
            f = self.features[i]
            label = "" if np.isnan(self.labels[i]) else str(int(self.labels[i]))
            lines.append(
                ",".join(
                    [
                        ts.isoformat(),
                        repr(float(f[0])),
                        repr(float(f[1])),
                        str(int(f[2])),
                        repr(float(f[3])),
                        repr(float(f[4])),
                        repr(float(f[5])),
                        repr(float(f[6])),
                        repr(float(self.closes[i])),
                        label,
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "FeatureFrame":
        lines = text.splitlines()
        if not lines or lines[0] != CSV_HEADER:
            raise ValueError(f"feature file must start with header {CSV_HEADER!r}")
        timestamps = []
        rows = []
        closes = []
        labels = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 10:
                raise ValueError(f"line {lineno}: expected 10 fields, got {len(parts)}")
            timestamps.append(parse_timestamp(parts[0]))
            rows.append([float(v) for v in parts[1:8]])
            closes.append(float(parts[8]))
            labels.append(float(parts[9]) if parts[9] != "" else np.nan)
        return cls(
            timestamps,
            np.asarray(rows, dtype=np.float64).reshape(len(rows), 7),
            np.asarray(closes, dtype=np.float64),
            np.asarray(labels, dtype=np.float64),
        )


def assemble_features(candles: Sequence[Candle], cfg: FeatureConfig | None = None) -> FeatureFrame:
    """Full feature frame for a candle series.

    Rows are dropped while any of swing high/low, the slow moving average,
    RSI or the order-block flag is still undefined. Raises
    InsufficientHistoryError when nothing survives the warm-up.
    """
    cfg = cfg if cfg is not None else FeatureConfig()
    highs = np.array([c.high for c in candles], dtype=np.float64)
    lows = np.array([c.low for c in candles], dtype=np.float64)
    closes = np.array([c.close for c in candles], dtype=np.float64)
    n = closes.size
    if n <= cfg.rsi_period or n < cfg.ma_slow:
        raise InsufficientHistoryError(
            f"{n} candles cannot cover the indicator warm-up"
        )

    sh, sl = swing_points(highs, lows)
    ob = order_block(highs, lows, closes, cfg.ob_window, cfg.ob_pct)
    ma_fast = moving_average(closes, cfg.ma_fast)
    ma_slow = moving_average(closes, cfg.ma_slow)
    strength = rsi(closes, cfg.rsi_period)

    valid = (
        ~np.isnan(sh)
        & ~np.isnan(sl)
        & ~np.isnan(ma_fast)
        & ~np.isnan(ma_slow)
        & ~np.isnan(strength)
        & ~np.isnan(ob)
    )
    if not valid.any():
        raise InsufficientHistoryError("no rows survive the indicator warm-up")

    dist_sh = closes - sh
    dist_sl = closes - sl
    diff = ma_fast - ma_slow
    features = np.column_stack([dist_sh, dist_sl, ob, ma_fast, ma_slow, strength, diff])
    labels = make_labels(closes, cfg.horizon)

    idx = np.flatnonzero(valid)
    return FeatureFrame(
        [candles[i].timestamp for i in idx],
        features[idx],
        closes[idx],
        labels[idx],
    )
