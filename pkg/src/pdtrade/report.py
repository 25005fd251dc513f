"""Run artifacts: metric documents, cross-instrument aggregates, charts, manifest.

Everything emitted here is deterministic text: JSON documents with a fixed
key order and 4-decimal percentages, and self-contained SVG line charts
with fixed-precision coordinates. Identical inputs produce identical
bytes, which the run manifest (config snapshot + input digests + split
boundaries) turns into a reproducibility contract.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from .backtest import BacktestResult, max_drawdown

__all__ = [
    "AlignmentError",
    "AggregateResult",
    "metrics_summary",
    "render_metrics",
    "emit_metrics",
    "aggregate",
    "render_aggregate_metrics",
    "emit_chart",
    "RunManifest",
    "sha256_text",
]


class AlignmentError(ValueError):
    """Aggregation input series do not share one evaluation timestamp grid."""


def metrics_summary(result: BacktestResult, baseline: BacktestResult) -> dict:
    """Full-precision metric values for a strategy/baseline pair."""

    def block(r: BacktestResult) -> dict:
        return {
            "growth_pct": r.growth_pct,
            "max_drawdown_pct": r.max_drawdown_pct,
            "trading_accuracy_pct": r.trading_accuracy_pct,
            "trade_count": r.trade_count,
            "successful_trades": r.successful_trades,
            "no_trades": r.no_trades,
        }

    return {
        "strategy": block(result),
        "baseline": block(baseline),
        "difference_pct": result.growth_pct - baseline.growth_pct,
    }


def _metric_block(d: dict, indent: str) -> str:
    return (
        "{\n"
        f'{indent}  "growth_pct": {d["growth_pct"]:.4f},\n'
        f'{indent}  "max_drawdown_pct": {d["max_drawdown_pct"]:.4f},\n'
        f'{indent}  "trading_accuracy_pct": {d["trading_accuracy_pct"]:.4f},\n'
        f'{indent}  "trade_count": {d["trade_count"]},\n'
        f'{indent}  "successful_trades": {d["successful_trades"]},\n'
        f'{indent}  "no_trades": {"true" if d["no_trades"] else "false"}\n'
        f"{indent}}}"
    )


def render_metrics(summary: dict) -> str:
    """Fixed-layout JSON document; percentages carry four decimals."""
    return (
        "{\n"
        f'  "strategy": {_metric_block(summary["strategy"], "  ")},\n'
        f'  "baseline": {_metric_block(summary["baseline"], "  ")},\n'
        f'  "difference_pct": {summary["difference_pct"]:.4f}\n'
        "}\n"
    )


def emit_metrics(result: BacktestResult, baseline: BacktestResult) -> str:
    return render_metrics(metrics_summary(result, baseline))


@dataclass(frozen=True)
class AggregateResult:
    instrument_count: int
    mean_growth_pct: float
    timestamps: list[datetime]
    mean_series: np.ndarray


def aggregate(runs: Sequence[tuple[str, Sequence[datetime], BacktestResult]]) -> AggregateResult:
    """Arithmetic mean of growth and the pointwise-mean portfolio series.

    Every run must share the same evaluation timestamps; offenders are
    listed in the AlignmentError.
    """
    if not runs:
        raise ValueError("nothing to aggregate")
    names = [name for name, _, _ in runs]
    reference = list(runs[0][1])
    offenders = [name for name, ts, _ in runs if list(ts) != reference]
    if offenders:
        raise AlignmentError(
            "evaluation timestamps differ from "
            f"{names[0]!r} for: {', '.join(sorted(set(offenders)))}"
        )
    growths = [r.growth_pct for _, _, r in runs]
    stack = np.vstack([r.portfolio_series for _, _, r in runs])
    return AggregateResult(
        instrument_count=len(runs),
        mean_growth_pct=float(sum(growths) / len(growths)),
        timestamps=reference,
        mean_series=stack.mean(axis=0),
    )


def render_aggregate_metrics(strategy: AggregateResult, baseline: AggregateResult) -> str:
    """Aggregate document: mean growth per side plus drawdown of the mean curve."""
    return (
        "{\n"
        f'  "instrument_count": {strategy.instrument_count},\n'
        f'  "strategy_mean_growth_pct": {strategy.mean_growth_pct:.4f},\n'
        f'  "strategy_mean_max_drawdown_pct": {max_drawdown(strategy.mean_series):.4f},\n'
        f'  "baseline_mean_growth_pct": {baseline.mean_growth_pct:.4f},\n'
        f'  "baseline_mean_max_drawdown_pct": {max_drawdown(baseline.mean_series):.4f},\n'
        f'  "difference_pct": {strategy.mean_growth_pct - baseline.mean_growth_pct:.4f}\n'
        "}\n"
    )


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")
_WIDTH, _HEIGHT = 960, 480
_LEFT, _RIGHT, _TOP, _BOTTOM = 86, 24, 28, 48


def emit_chart(series_list: Sequence[Sequence[float]], labels: Sequence[str], kind: str) -> str:
    """Self-contained SVG line chart.

    ``kind="equity"`` plots values upward; ``kind="drawdown"`` plots
    percentages downward from zero at the top (declines grow down the
    page). Axis ranges derive from the data; no external assets.
    """
    if kind not in ("equity", "drawdown"):
        raise ValueError(f"kind must be 'equity' or 'drawdown', got {kind!r}")
    if not series_list:
        raise ValueError("no series to plot")
    arrays = [np.asarray(s, dtype=np.float64) for s in series_list]
    if any(a.size == 0 for a in arrays):
        raise ValueError("empty series")
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("all series must share one length")
    if len(labels) != len(arrays):
        raise ValueError("one label per series required")

    lo = min(float(a.min()) for a in arrays)
    hi = max(float(a.max()) for a in arrays)
    if kind == "drawdown":
        lo = 0.0
    if hi == lo:
        hi = lo + 1.0
    pad = 0.04 * (hi - lo)
    if kind == "drawdown":
        hi += pad
    else:
        lo -= pad
        hi += pad

    plot_w = _WIDTH - _LEFT - _RIGHT
    plot_h = _HEIGHT - _TOP - _BOTTOM
    span = hi - lo

    def x_at(i: int) -> float:
        if n == 1:
            return _LEFT + plot_w / 2.0
        return _LEFT + plot_w * i / (n - 1)

    def y_at(v: float) -> float:
        if kind == "drawdown":
            return _TOP + plot_h * (v - lo) / span
        return _TOP + plot_h * (hi - v) / span

    unit = "%" if kind == "drawdown" else ""
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect x="0" y="0" width="{_WIDTH}" height="{_HEIGHT}" fill="#ffffff"/>',
        f'<rect x="{_LEFT}" y="{_TOP}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#444444" stroke-width="1"/>',
    ]
    for k in range(5):
        v = lo + span * k / 4.0
        y = y_at(v)
        out.append(
            f'<line x1="{_LEFT}" y1="{y:.2f}" x2="{_LEFT + plot_w}" y2="{y:.2f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_LEFT - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="monospace" font-size="12">{v:.2f}{unit}</text>'
        )
    for i in (0, (n - 1) // 2, n - 1):
        out.append(
            f'<text x="{x_at(i):.2f}" y="{_HEIGHT - _BOTTOM + 18}" text-anchor="middle" '
            f'font-family="monospace" font-size="12">{i}</text>'
        )
    out.append(
        f'<text x="{_LEFT + plot_w / 2:.2f}" y="{_HEIGHT - 10}" text-anchor="middle" '
        'font-family="monospace" font-size="12">bar</text>'
    )
    for idx, (arr, label) in enumerate(zip(arrays, labels)):
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(f"{x_at(i):.2f},{y_at(float(v)):.2f}" for i, v in enumerate(arr))
        out.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = _TOP + 16 + 16 * idx
        lx = _LEFT + plot_w - 10
        out.append(
            f'<line x1="{lx - 28}" y1="{ly - 4}" x2="{lx - 8}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="3"/>'
        )
        out.append(
            f'<text x="{lx - 34}" y="{ly}" text-anchor="end" '
            f'font-family="monospace" font-size="12">{label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce a run byte-for-byte."""

    tool_version: str
    config: dict
    inputs: list[dict]
    splits: list[dict]

    def render(self) -> str:
        return (
            json.dumps(
                {
                    "tool": {"name": "pdtrade", "version": self.tool_version},
                    "config": self.config,
                    "inputs": self.inputs,
                    "splits": self.splits,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
