"""Pipeline configuration: defaults, config-file parsing, flag resolution.

Config files are flat ``key = value`` text with ``#`` comments. Every key
mirrors a CLI flag; a flag given on the command line wins over the file.
Unknown keys are rejected so a typo cannot silently fall back to a
default.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

__all__ = ["ConfigError", "PipelineConfig", "parse_config_text", "resolve_config"]


class ConfigError(ValueError):
    pass


def _to_int(text: str) -> int:
    return int(text)


def _to_float(text: str) -> float:
    return float(text)


def _to_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _to_opt_int(text: str) -> int | None:
    return None if text.lower() == "none" else int(text)


def _to_opt_float(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


def _to_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


_CASTERS = {
    "instruments": _to_list,
    "horizon": _to_int,
    "trail": _to_float,
    "max_depth": _to_int,
    "min_node_size": _to_int,
    "rsi_period": _to_int,
    "ob_window": _to_int,
    "ob_pct": _to_float,
    "ma_fast": _to_int,
    "ma_slow": _to_int,
    "train_fraction": _to_float,
    "chunk_size": _to_opt_int,
    "initial_balance": _to_float,
    "fill": str,
    "out_dir": str,
    "workers": _to_int,
    "seed": _to_opt_int,
    "lenient": _to_bool,
    "train_time_cap": _to_opt_float,
}


@dataclass
class PipelineConfig:
    instruments: list[str] = field(default_factory=list)
    horizon: int = 50
    trail: float = 0.005
    max_depth: int = 10
    min_node_size: int = 5
    rsi_period: int = 14
    ob_window: int = 5
    ob_pct: float = 0.002
    ma_fast: int = 20
    ma_slow: int = 50
    train_fraction: float = 0.8
    chunk_size: int | None = None
    initial_balance: float = 10_000.0
    fill: str = "close"
    out_dir: str = "out"
    workers: int = 1
    seed: int | None = None  # reserved: the pipeline is deterministic
    lenient: bool = False
    train_time_cap: float | None = None

    def validate(self) -> "PipelineConfig":
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not 0.0 < self.trail < 1.0:
            raise ConfigError("trail must lie strictly between 0 and 1")
        if self.max_depth < 1 or self.min_node_size < 1:
            raise ConfigError("max_depth and min_node_size must be >= 1")
        if min(self.rsi_period, self.ob_window, self.ma_fast, self.ma_slow) < 1:
            raise ConfigError("indicator windows must be >= 1")
        if self.ob_pct <= 0.0:
            raise ConfigError("ob_pct must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        if self.chunk_size is not None and self.chunk_size <= self.horizon / (1.0 - self.train_fraction):
            raise ConfigError("chunk_size too small for the horizon at this train_fraction")
        if self.initial_balance <= 0.0:
            raise ConfigError("initial_balance must be positive")
        if self.fill not in ("close", "stop_level"):
            raise ConfigError("fill must be 'close' or 'stop_level'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.train_time_cap is not None and self.train_time_cap <= 0.0:
            raise ConfigError("train_time_cap must be positive")
        return self

    def hyperparameters(self) -> dict:
        """The manifest config snapshot: everything that shapes the outputs."""
        skip = {"instruments", "out_dir", "workers"}
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name not in skip
        }


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into typed values; unknown keys error."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        caster = _CASTERS.get(key)
        if caster is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = caster(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return values


def resolve_config(file_values: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then config file, then CLI flags.

    Both mappings contain only keys that were actually given; an explicit
    ``none`` value (e.g. ``chunk_size = none``) is a real setting.
    """
    merged: dict = {}
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if key not in _CASTERS:
                raise ConfigError(f"unknown key {key!r}")
            merged[key] = value
    return PipelineConfig(**merged).validate()
