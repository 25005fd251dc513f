import pytest

from pdtrade.config import ConfigError, PipelineConfig, parse_config_text, resolve_config


class TestParseConfigText:
    def test_typed_values_and_comments(self):
        text = (
            "# experiment knobs\n"
            "trail = 0.01\n"
            "horizon = 25   # bars\n"
            "chunk_size = 3225\n"
            "instruments = a.csv, b.csv\n"
            "lenient = true\n"
        )
        values = parse_config_text(text)
        assert values == {
            "trail": 0.01,
            "horizon": 25,
            "chunk_size": 3225,
            "instruments": ["a.csv", "b.csv"],
            "lenient": True,
        }

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("trialing_stop = 0.01\n")

    def test_bad_value_names_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("trail = 0.01\nhorizon = soon\n")

    def test_explicit_none(self):
        assert parse_config_text("chunk_size = none\n") == {"chunk_size": None}

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("just some words\n")


class TestResolveConfig:
    def test_defaults(self):
        cfg = resolve_config()
        assert cfg.horizon == 50
        assert cfg.trail == 0.005
        assert cfg.max_depth == 10
        assert cfg.min_node_size == 5
        assert cfg.initial_balance == 10_000.0
        assert cfg.chunk_size is None
        assert cfg.fill == "close"

    def test_flag_beats_file(self):
        cfg = resolve_config({"trail": 0.01, "horizon": 20}, {"trail": 0.02})
        assert cfg.trail == 0.02
        assert cfg.horizon == 20

    def test_validation_failures(self):
        with pytest.raises(ConfigError):
            resolve_config({"trail": 1.5})
        with pytest.raises(ConfigError):
            resolve_config({"fill": "open"})
        with pytest.raises(ConfigError):
            resolve_config({"chunk_size": 100})  # cannot fit the default horizon
        with pytest.raises(ConfigError):
            resolve_config({"train_fraction": 0.0})

    def test_hyperparameter_snapshot_excludes_execution_keys(self):
        snap = PipelineConfig().hyperparameters()
        assert "out_dir" not in snap and "workers" not in snap and "instruments" not in snap
        for key in ("horizon", "trail", "max_depth", "min_node_size", "rsi_period",
                    "ob_window", "ob_pct", "ma_fast", "ma_slow", "train_fraction",
                    "chunk_size", "initial_balance", "fill"):
            assert key in snap
