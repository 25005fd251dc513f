"""Long-only trading simulation driven by a binary signal stream.

Portfolio model: cash plus a whole-share long position, marked at each
bar's close. A flat portfolio enters when the signal reads 1, buying
``floor(balance / close)`` shares. While holding, a trailing stop ratchets
up with ``close * (1 - trail)`` and the position is fully closed when the
close touches the stop or the signal flips to 0. Any position still open
after the last bar is liquidated at the final close (which does not count
as a signal-driven trade). No shorting, no pyramiding, no intrabar fills:
the stream carries closes only.

``fill="close"`` credits stop exits at the close (the default);
``fill="stop_level"`` credits them at the stop price itself. ``cost_rate``
is a per-fill proportional cost hook, zero by default.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .dataset import parse_timestamp

__all__ = [
    "SignalRow",
    "BarState",
    "SimulationTrace",
    "BacktestResult",
    "simulate",
    "simulate_trace",
    "buy_and_hold",
    "growth_pct",
    "drawdown_series",
    "max_drawdown",
    "trading_accuracy",
    "read_signal_rows",
    "write_signal_rows",
    "RESULTS_HEADER",
]

log = logging.getLogger(__name__)

RESULTS_HEADER = "Datetime,Actual,Predicted,Close"


@dataclass(frozen=True)
class SignalRow:
    timestamp: datetime
    actual: int
    predicted: int
    close: float

    def __post_init__(self):
        if self.actual not in (0, 1):
            raise ValueError(f"actual must be 0 or 1, got {self.actual!r}")
        if self.predicted not in (0, 1):
            raise ValueError(f"predicted must be 0 or 1, got {self.predicted!r}")
        if not self.close > 0.0:
            raise ValueError(f"close must be positive, got {self.close!r}")
        # normalize numpy scalars so repr-based serialization stays clean
        object.__setattr__(self, "actual", int(self.actual))
        object.__setattr__(self, "predicted", int(self.predicted))
        object.__setattr__(self, "close", float(self.close))


@dataclass(frozen=True)
class BarState:
    index: int
    predicted: int
    close: float
    balance: float
    positions: int
    trailing_stop: float | None
    portfolio_value: float


@dataclass(frozen=True)
class SimulationTrace:
    bars: list[BarState]
    final_balance: float
    final_positions: int


@dataclass(frozen=True)
class BacktestResult:
    portfolio_series: np.ndarray
    trade_count: int
    successful_trades: int
    growth_pct: float
    max_drawdown_pct: float
    trading_accuracy_pct: float
    no_trades: bool


def _metrics(series, trade_count, successful) -> BacktestResult:
    series = np.asarray(series, dtype=np.float64)
    return BacktestResult(
        portfolio_series=series,
        trade_count=trade_count,
        successful_trades=successful,
        growth_pct=growth_pct(series),
        max_drawdown_pct=max_drawdown(series),
        trading_accuracy_pct=trading_accuracy(trade_count, successful),
        no_trades=trade_count == 0,
    )


def simulate_trace(
    rows: Sequence[SignalRow],
    initial_balance: float = 10_000.0,
    trail: float = 0.005,
    fill: str = "close",
    cost_rate: float = 0.0,
) -> tuple[BacktestResult, SimulationTrace]:
    """Run the simulation and also return per-bar portfolio state."""
    if not rows:
        raise ValueError("signal stream is empty")
    if not 0.0 < trail < 1.0:
        raise ValueError("trail must lie strictly between 0 and 1")
    if initial_balance <= 0.0:
        raise ValueError("initial_balance must be positive")
    if fill not in ("close", "stop_level"):
        raise ValueError(f"fill must be 'close' or 'stop_level', got {fill!r}")
    if cost_rate < 0.0:
        raise ValueError("cost_rate must be non-negative")

    balance = initial_balance
    positions = 0
    entry_outlay = 0.0
    trailing_stop: float | None = None
    trade_count = 0
    successful = 0
    series = np.empty(len(rows), dtype=np.float64)
    states: list[BarState] = []

    for i, row in enumerate(rows):
        price = row.close
        if price <= 0.0:
            raise ValueError(f"non-positive price at bar {i}")

        if row.predicted == 1 and positions == 0:
            positions = int(balance // (price * (1.0 + cost_rate)))
            if positions > 0:
                outlay = positions * price
                cost = outlay * cost_rate
                balance -= outlay + cost
                entry_outlay = outlay + cost
                trailing_stop = price * (1.0 - trail)

        if positions > 0:
            trailing_stop = max(trailing_stop, price * (1.0 - trail))
            if price <= trailing_stop or row.predicted == 0:
                exit_price = trailing_stop if (fill == "stop_level" and price <= trailing_stop) else price
                proceeds = positions * exit_price
                cost = proceeds * cost_rate
                balance += proceeds - cost
                profit = (proceeds - cost) - entry_outlay
                trade_count += 1
                if profit > 0.0:
                    successful += 1
                positions = 0
                trailing_stop = None

        value = balance + positions * price
        series[i] = value
        states.append(BarState(i, row.predicted, price, balance, positions, trailing_stop, value))

    if positions > 0:
        # end-of-stream liquidation at the last close; not a signal exit
        price = rows[-1].close
        proceeds = positions * price
        balance += proceeds - proceeds * cost_rate
        positions = 0
        trailing_stop = None

    trace = SimulationTrace(states, balance, positions)
    return _metrics(series, trade_count, successful), trace


def simulate(
    rows: Sequence[SignalRow],
    initial_balance: float = 10_000.0,
    trail: float = 0.005,
    fill: str = "close",
    cost_rate: float = 0.0,
) -> BacktestResult:
    """Backtest the signal stream; see the module docstring for the rules."""
    result, _ = simulate_trace(rows, initial_balance, trail, fill, cost_rate)
    return result


def buy_and_hold(closes: Sequence[float], initial_balance: float = 10_000.0) -> BacktestResult:
    """Buy the maximum whole shares at the first close, liquidate at the last."""
    closes = np.asarray(closes, dtype=np.float64)
    if closes.size == 0:
        raise ValueError("closes is empty")
    if not (closes > 0.0).all():
        raise ValueError("closes must be positive")
    if initial_balance <= 0.0:
        raise ValueError("initial_balance must be positive")

    shares = int(initial_balance // closes[0])
    if shares == 0:
        log.warning(
            "buy-and-hold cannot afford a single share (close %.4f > balance %.2f)",
            closes[0],
            initial_balance,
        )
        series = np.full(closes.size, initial_balance)
        return _metrics(series, 0, 0)

    balance = initial_balance - shares * closes[0]
    series = balance + shares * closes
    profit = shares * (closes[-1] - closes[0])
    return _metrics(series, 1, 1 if profit > 0.0 else 0)


def growth_pct(series) -> float:
    """Percentage change from the first to the last portfolio value."""
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise ValueError("series is empty")
    first = series[0]
    return float((series[-1] - first) * 100.0 / first)


def drawdown_series(series) -> np.ndarray:
    """Percentage decline from the running peak at every index."""
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise ValueError("series is empty")
    if not (series > 0.0).all():
        raise ValueError("series must be positive")
    peaks = np.maximum.accumulate(series)
    return (peaks - series) * 100.0 / peaks


def max_drawdown(series) -> float:
    return float(drawdown_series(series).max())


def trading_accuracy(trade_count: int, successful_trades: int) -> float:
    """Share of round trips that realized a profit; 0.0 when no trades ran."""
    if trade_count < 0 or successful_trades < 0 or successful_trades > trade_count:
        raise ValueError("inconsistent trade counts")
    if trade_count == 0:
        return 0.0
    return successful_trades * 100.0 / trade_count


def write_signal_rows(rows: Iterable[SignalRow]) -> str:
    lines = [RESULTS_HEADER]
    for row in rows:
        lines.append(
            f"{row.timestamp.isoformat()},{row.actual},{row.predicted},{row.close!r}"
        )
    return "\n".join(lines) + "\n"


def read_signal_rows(text: str) -> list[SignalRow]:
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty results table") from None
    if [h.strip() for h in header] != RESULTS_HEADER.split(","):
        raise ValueError(f"results table must start with header {RESULTS_HEADER!r}")
    rows = []
    for lineno, record in enumerate(reader, start=2):
        if not record or all(not cell.strip() for cell in record):
            continue
        if len(record) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields, got {len(record)}")
        try:
            rows.append(
                SignalRow(
                    parse_timestamp(record[0]),
                    int(record[1]),
                    int(record[2]),
                    float(record[3]),
                )
            )
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return rows
