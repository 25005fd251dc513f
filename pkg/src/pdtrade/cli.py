"""Command-line pipeline: ingest -> features -> train -> predict -> backtest -> report.

``run`` executes the whole chain per instrument (and per chunk when
``chunk_size`` is set) by calling the same stage functions the individual
subcommands expose, reading and writing the same intermediate files, so a
manual stage-by-stage run reproduces ``run`` byte for byte. Exit codes:
0 full success, 1 configuration error, 2 partial failure (some
instruments failed or the cross-instrument aggregate could not be built).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import logging
import sys
import urllib.error
import urllib.request
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import (
    SignalRow,
    buy_and_hold,
    drawdown_series,
    read_signal_rows,
    simulate,
    write_signal_rows,
)
from .config import ConfigError, PipelineConfig, parse_config_text, resolve_config
from .dataset import Candle, SplitSpec, chunk, leakage_trim, parse_candles, parse_timestamp, temporal_split
from .features import FeatureConfig, FeatureFrame, assemble_features
from .report import (
    AlignmentError,
    RunManifest,
    aggregate,
    emit_chart,
    emit_metrics,
    render_aggregate_metrics,
    sha256_text,
)
from .tree import TrainConfig, build_pdt, deserialize_tree, predict, serialize_tree

log = logging.getLogger("pdtrade")


class CLIError(RuntimeError):
    """User-facing failure: message only, no traceback."""


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}") from None


def _write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _fetch_source(source: str) -> str:
    if source.startswith(("http://", "https://")):
        try:
            with urllib.request.urlopen(source) as response:
                return response.read().decode("utf-8")
        except (urllib.error.URLError, UnicodeDecodeError) as exc:
            raise CLIError(f"fetch failed for {source}: {exc}") from None
    return _read_text(Path(source))


def _render_candles(candles: list[Candle]) -> str:
    lines = ["Datetime,Open,High,Low,Close"]
    for c in candles:
        lines.append(f"{c.timestamp.isoformat()},{c.open!r},{c.high!r},{c.low!r},{c.close!r}")
    return "\n".join(lines) + "\n"


def _feature_config(cfg: PipelineConfig) -> FeatureConfig:
    return FeatureConfig(
        ma_fast=cfg.ma_fast,
        ma_slow=cfg.ma_slow,
        rsi_period=cfg.rsi_period,
        ob_window=cfg.ob_window,
        ob_pct=cfg.ob_pct,
        horizon=cfg.horizon,
    )


def _split_spec(cfg: PipelineConfig) -> SplitSpec:
    return SplitSpec(cfg.train_fraction, cfg.horizon, cfg.chunk_size)


def instrument_name(source: str) -> str:
    tail = source.rstrip("/").rsplit("/", 1)[-1]
    stem = tail.rsplit(".", 1)[0] if "." in tail else tail
    cleaned = "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in stem)
    return cleaned or "instrument"


# ---------------------------------------------------------------------------
# pipeline stages (shared by subcommands and `run`)
# ---------------------------------------------------------------------------


def do_ingest(source: str, dest: Path, lenient: bool) -> str:
    """Validate a candle source and copy it verbatim; returns its digest."""
    text = _fetch_source(source)
    candles = parse_candles(text, lenient=lenient)
    if not candles:
        raise CLIError(f"empty dataset from {source}")
    _write_text(dest, text)
    return sha256_text(text)


def do_features(candles_path: Path, out_path: Path, cfg: PipelineConfig) -> FeatureFrame:
    candles = parse_candles(_read_text(candles_path), lenient=cfg.lenient)
    frame = assemble_features(candles, _feature_config(cfg))
    _write_text(out_path, frame.to_csv())
    return frame


def do_train(
    features_path: Path,
    out_path: Path,
    cfg: PipelineConfig,
    train_end_ts: datetime | None = None,
) -> int:
    frame = FeatureFrame.from_csv(_read_text(features_path))
    mask = frame.labeled_mask.copy()
    if train_end_ts is not None:
        in_train = np.array([ts < train_end_ts for ts in frame.timestamps])
        mask &= in_train
    if not mask.any():
        raise CLIError("no labeled training rows before the split boundary")
    nodes = 0

    def count(_node):
        nonlocal nodes
        nodes += 1

    tree = build_pdt(
        frame.features[mask],
        frame.labels[mask].astype(np.int64),
        cfg=TrainConfig(cfg.max_depth, cfg.min_node_size),
        on_node=count,
        time_budget=cfg.train_time_cap,
    )
    _write_text(out_path, serialize_tree(tree))
    log.info("trained %d-node tree from %d rows -> %s", nodes, int(mask.sum()), out_path)
    return nodes


def do_predict(
    features_path: Path,
    tree_path: Path,
    out_path: Path,
    eval_start_ts: datetime | None = None,
) -> int:
    frame = FeatureFrame.from_csv(_read_text(features_path))
    tree = deserialize_tree(_read_text(tree_path))
    rows = []
    for i, ts in enumerate(frame.timestamps):
        if np.isnan(frame.labels[i]):
            continue  # the horizon close is unknown: nothing to score against
        if eval_start_ts is not None and ts < eval_start_ts:
            continue
        rows.append(
            SignalRow(
                ts,
                int(frame.labels[i]),
                predict(tree, frame.features[i]),
                float(frame.closes[i]),
            )
        )
    if not rows:
        raise CLIError("no labeled evaluation rows at or after the evaluation start")
    _write_text(out_path, write_signal_rows(rows))
    return len(rows)


def do_backtest(results_path: Path, metrics_path: Path, cfg: PipelineConfig):
    rows = read_signal_rows(_read_text(results_path))
    strategy = simulate(rows, cfg.initial_balance, cfg.trail, cfg.fill)
    baseline = buy_and_hold([r.close for r in rows], cfg.initial_balance)
    _write_text(metrics_path, emit_metrics(strategy, baseline))
    log.info(
        "%s: strategy %+.4f%% over %d trades, buy-and-hold %+.4f%%",
        results_path,
        strategy.growth_pct,
        strategy.trade_count,
        baseline.growth_pct,
    )
    return strategy, baseline


def _discover_parts(run_dir: Path) -> list[tuple[str, int | None, Path]]:
    """(instrument, chunk number or None, part dir) for every pipeline part."""
    parts = []
    for inst_dir in sorted(p for p in run_dir.iterdir() if p.is_dir()):
        if not (inst_dir / "candles.csv").exists():
            continue
        chunk_dirs = sorted(inst_dir.glob("chunk_*"))
        if chunk_dirs:
            for i, part_dir in enumerate(chunk_dirs, start=1):
                parts.append((inst_dir.name, i, part_dir))
        else:
            parts.append((inst_dir.name, None, inst_dir))
    return parts


def do_report(run_dir: Path, cfg: PipelineConfig) -> list[str]:
    """Charts for every completed part, the cross-instrument aggregate, the manifest.

    Returns a list of problems (non-fatal; they downgrade the exit code).
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise CLIError(f"{run_dir} is not a run directory")
    problems: list[str] = []
    strategy_runs = []
    baseline_runs = []
    splits = []
    inputs = []

    for inst_dir in sorted(p for p in run_dir.iterdir() if p.is_dir()):
        candles_file = inst_dir / "candles.csv"
        if candles_file.exists():
            inputs.append(
                {
                    "instrument": inst_dir.name,
                    "path": str(candles_file.relative_to(run_dir)),
                    "sha256": sha256_text(_read_text(candles_file)),
                }
            )

    for name, chunk_no, part_dir in _discover_parts(run_dir):
        part_candles = part_dir / "candles.csv"
        if part_candles.exists():
            n_rows = len(parse_candles(_read_text(part_candles), lenient=True))
            try:
                train_rg, test_rg = temporal_split(n_rows, _split_spec(cfg))
                eval_rg = leakage_trim(test_rg, cfg.horizon)
                splits.append(
                    {
                        "instrument": name,
                        "chunk": chunk_no,
                        "n_rows": n_rows,
                        "train": [train_rg.start, train_rg.stop],
                        "test": [test_rg.start, test_rg.stop],
                        "eval": [eval_rg.start, eval_rg.stop],
                    }
                )
            except ValueError as exc:
                problems.append(f"{name}: split arithmetic failed: {exc}")

        results_file = part_dir / "results.csv"
        if not results_file.exists():
            continue
        rows = read_signal_rows(_read_text(results_file))
        strategy = simulate(rows, cfg.initial_balance, cfg.trail, cfg.fill)
        baseline = buy_and_hold([r.close for r in rows], cfg.initial_balance)
        _write_text(
            part_dir / "equity.svg",
            emit_chart(
                [strategy.portfolio_series, baseline.portfolio_series],
                ["strategy", "buy-and-hold"],
                "equity",
            ),
        )
        _write_text(
            part_dir / "drawdown.svg",
            emit_chart(
                [
                    drawdown_series(strategy.portfolio_series),
                    drawdown_series(baseline.portfolio_series),
                ],
                ["strategy", "buy-and-hold"],
                "drawdown",
            ),
        )
        if chunk_no is None:
            timestamps = [r.timestamp for r in rows]
            strategy_runs.append((name, timestamps, strategy))
            baseline_runs.append((name, timestamps, baseline))

    if strategy_runs:
        try:
            strategy_agg = aggregate(strategy_runs)
            baseline_agg = aggregate(baseline_runs)
        except AlignmentError as exc:
            problems.append(f"aggregate skipped: {exc}")
        else:
            agg_dir = run_dir / "aggregate"
            _write_text(agg_dir / "metrics.json", render_aggregate_metrics(strategy_agg, baseline_agg))
            _write_text(
                agg_dir / "equity.svg",
                emit_chart(
                    [strategy_agg.mean_series, baseline_agg.mean_series],
                    ["strategy (mean)", "buy-and-hold (mean)"],
                    "equity",
                ),
            )
            _write_text(
                agg_dir / "drawdown.svg",
                emit_chart(
                    [
                        drawdown_series(strategy_agg.mean_series),
                        drawdown_series(baseline_agg.mean_series),
                    ],
                    ["strategy (mean)", "buy-and-hold (mean)"],
                    "drawdown",
                ),
            )

    manifest = RunManifest(
        tool_version=__version__,
        config=cfg.hyperparameters(),
        inputs=sorted(inputs, key=lambda d: d["instrument"]),
        splits=sorted(splits, key=lambda d: (d["instrument"], d["chunk"] or 0)),
    )
    _write_text(run_dir / "manifest.json", manifest.render())
    return problems


# ---------------------------------------------------------------------------
# the end-to-end run
# ---------------------------------------------------------------------------


def _part_boundaries(candles: list[Candle], cfg: PipelineConfig) -> tuple[datetime, datetime]:
    spec = SplitSpec(cfg.train_fraction, cfg.horizon, None)
    train_rg, test_rg = temporal_split(len(candles), spec)
    eval_rg = leakage_trim(test_rg, cfg.horizon)
    return candles[train_rg.stop].timestamp, candles[eval_rg.start].timestamp


def run_instrument(cfg: PipelineConfig, source: str, name: str, out_root: str) -> dict:
    """Full pipeline for one instrument; returns a status dict (never raises)."""
    inst_dir = Path(out_root) / name
    try:
        do_ingest(source, inst_dir / "candles.csv", cfg.lenient)
        candles = parse_candles(_read_text(inst_dir / "candles.csv"), lenient=cfg.lenient)
        if cfg.chunk_size is not None:
            ranges = chunk(len(candles), cfg.chunk_size)
            if not ranges:
                raise CLIError(
                    f"{len(candles)} rows do not fill a single chunk of {cfg.chunk_size}"
                )
            parts = [(i + 1, rg) for i, rg in enumerate(ranges)]
        else:
            parts = [(None, range(0, len(candles)))]

        for chunk_no, rg in parts:
            part_dir = inst_dir if chunk_no is None else inst_dir / f"chunk_{chunk_no:02d}"
            part_candles = candles[rg.start : rg.stop]
            if chunk_no is not None:
                _write_text(part_dir / "candles.csv", _render_candles(part_candles))
            train_end_ts, eval_start_ts = _part_boundaries(part_candles, cfg)
            do_features(part_dir / "candles.csv", part_dir / "features.csv", cfg)
            do_train(part_dir / "features.csv", part_dir / "tree.json", cfg, train_end_ts)
            do_predict(
                part_dir / "features.csv",
                part_dir / "tree.json",
                part_dir / "results.csv",
                eval_start_ts,
            )
            do_backtest(part_dir / "results.csv", part_dir / "metrics.json", cfg)
        return {"name": name, "parts": len(parts), "error": None}
    except Exception as exc:  # per-instrument isolation: one bad feed must not kill the batch
        log.error("instrument %s failed: %s", name, exc)
        return {"name": name, "parts": 0, "error": str(exc)}


def cmd_run(cfg: PipelineConfig) -> int:
    if not cfg.instruments:
        raise ConfigError("no instruments given (positional arguments or 'instruments' key)")
    out_root = Path(cfg.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    names: list[str] = []
    for source in cfg.instruments:
        base = instrument_name(source)
        candidate = base
        serial = 2
        while candidate in names:
            candidate = f"{base}_{serial}"
            serial += 1
        names.append(candidate)

    jobs = list(zip(cfg.instruments, names))
    if cfg.workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [
                pool.submit(run_instrument, cfg, source, name, str(out_root))
                for source, name in jobs
            ]
            statuses = [f.result() for f in futures]
    else:
        statuses = [run_instrument(cfg, source, name, str(out_root)) for source, name in jobs]

    problems = do_report(out_root, cfg)
    failures = [s for s in statuses if s["error"] is not None]
    for failure in failures:
        log.warning("instrument %s: %s", failure["name"], failure["error"])
    for problem in problems:
        log.warning("%s", problem)
    if failures or problems:
        return 2
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _opt_int(text: str) -> int | None:
    return None if text.lower() == "none" else int(text)


def _opt_float(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


def _hyper_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = argparse.SUPPRESS
    p.add_argument("--horizon", type=int, default=d, help="label horizon in bars")
    p.add_argument("--trail", type=float, default=d, help="trailing stop fraction")
    p.add_argument("--max-depth", dest="max_depth", type=int, default=d)
    p.add_argument("--min-node-size", dest="min_node_size", type=int, default=d)
    p.add_argument("--rsi-period", dest="rsi_period", type=int, default=d)
    p.add_argument("--ob-window", dest="ob_window", type=int, default=d)
    p.add_argument("--ob-pct", dest="ob_pct", type=float, default=d)
    p.add_argument("--ma-fast", dest="ma_fast", type=int, default=d)
    p.add_argument("--ma-slow", dest="ma_slow", type=int, default=d)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=d)
    p.add_argument("--chunk-size", dest="chunk_size", type=_opt_int, default=d, metavar="N|none")
    p.add_argument("--initial-balance", dest="initial_balance", type=float, default=d)
    p.add_argument("--fill", choices=("close", "stop_level"), default=d)
    p.add_argument("--train-time-cap", dest="train_time_cap", type=_opt_float, default=d, metavar="SECONDS|none")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdtrade",
        description="Compression-gain decision trees over candle features, backtested long-only with a trailing stop.",
    )
    parser.add_argument("--version", action="version", version=f"pdtrade {__version__}")
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--out", dest="out_dir", default=argparse.SUPPRESS, help="output directory")
    parser.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--seed", type=_opt_int, default=argparse.SUPPRESS, help="reserved; recorded in the manifest")
    parser.add_argument("--lenient", action="store_true", default=argparse.SUPPRESS, help="drop invalid candle rows instead of failing")

    hyper = _hyper_parent()
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[hyper], help="fetch/validate a candle file")
    p.add_argument("source", help="local path or HTTP(S) URL")
    p.add_argument("-o", "--out-file", required=True)

    p = sub.add_parser("features", parents=[hyper], help="derive the feature frame")
    p.add_argument("candles")
    p.add_argument("-o", "--out-file", required=True)

    p = sub.add_parser("train", parents=[hyper], help="fit the decision tree")
    p.add_argument("features")
    p.add_argument("-o", "--out-file", required=True)
    p.add_argument("--train-end-ts", help="train on labeled rows strictly before this timestamp")

    p = sub.add_parser("predict", parents=[hyper], help="score evaluation rows")
    p.add_argument("features")
    p.add_argument("tree")
    p.add_argument("-o", "--out-file", required=True)
    p.add_argument("--eval-start-ts", help="evaluate labeled rows at or after this timestamp")

    p = sub.add_parser("backtest", parents=[hyper], help="simulate a results table")
    p.add_argument("results")
    p.add_argument("-o", "--out-file", required=True)

    p = sub.add_parser("report", parents=[hyper], help="charts, aggregate and manifest for a run directory")
    p.add_argument("run_dir")

    p = sub.add_parser("run", parents=[hyper], help="full pipeline for one or more instruments")
    p.add_argument("instruments", nargs="*", help="candle files or URLs (or use the config file)")

    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    file_values = {}
    if args.config:
        file_values = parse_config_text(_read_text(Path(args.config)))
    from .config import _CASTERS  # key registry doubles as the flag whitelist

    overrides = {k: v for k, v in vars(args).items() if k in _CASTERS}
    # an absent positional list must not shadow the config file's instruments
    if not overrides.get("instruments"):
        overrides.pop("instruments", None)
    return resolve_config(file_values, overrides)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "ingest":
            digest = do_ingest(args.source, Path(args.out_file), cfg.lenient)
            print(digest)
        elif args.command == "features":
            do_features(Path(args.candles), Path(args.out_file), cfg)
        elif args.command == "train":
            boundary = parse_timestamp(args.train_end_ts) if args.train_end_ts else None
            do_train(Path(args.features), Path(args.out_file), cfg, boundary)
        elif args.command == "predict":
            boundary = parse_timestamp(args.eval_start_ts) if args.eval_start_ts else None
            do_predict(Path(args.features), Path(args.tree), Path(args.out_file), boundary)
        elif args.command == "backtest":
            do_backtest(Path(args.results), Path(args.out_file), cfg)
        elif args.command == "report":
            problems = do_report(Path(args.run_dir), cfg)
            return 2 if problems else 0
        elif args.command == "run":
            return cmd_run(cfg)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (CLIError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
