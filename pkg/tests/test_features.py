from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdtrade.dataset import Candle
from pdtrade.features import (
    CSV_HEADER,
    FeatureConfig,
    FeatureFrame,
    InsufficientHistoryError,
    assemble_features,
    make_labels,
    moving_average,
    order_block,
    rsi,
    swing_points,
)

T0 = datetime(2024, 10, 18, 9, 15, tzinfo=timezone.utc)


def make_candles(closes, spread=0.5):
    # varying intrabar extremes so strict local extrema can form
    wiggle = np.random.RandomState(12345).rand(len(closes))
    candles = []
    prev = closes[0]
    for i, c in enumerate(closes):
        o = prev
        hi = max(o, c) + spread * (0.2 + wiggle[i])
        lo = min(o, c) - spread * (1.2 - wiggle[i])
        candles.append(Candle(T0 + timedelta(minutes=5 * i), o, hi, lo, c))
        prev = c
    return candles


def zigzag_closes(n, base=100.0, amp=2.0, seed=0):
    rng = np.random.RandomState(seed)
    t = np.arange(n)
    return base + amp * np.sin(t / 3.0) + rng.rand(n) * 0.3


class TestSwingPoints:
    def test_single_high(self):
        sh, _ = swing_points([1.0, 3.0, 2.0], [0.5, 2.5, 1.5])
        assert np.isnan(sh[0]) and np.isnan(sh[1])
        assert sh[2] == 3.0

    def test_single_low(self):
        _, sl = swing_points([4.0, 2.0, 3.0], [3.0, 1.0, 2.0])
        assert np.isnan(sl[1])
        assert sl[2] == 1.0

    def test_monotone_highs_never_confirm(self):
        sh, _ = swing_points([1.0, 2.0, 3.0, 4.0], [0.5, 1.5, 2.5, 3.5])
        assert np.isnan(sh).all()

    def test_value_persists_until_next_swing(self):
        highs = [1.0, 5.0, 2.0, 3.0, 7.0, 4.0, 4.5]
        sh, _ = swing_points(highs, [0.0] * 7)
        assert np.isnan(sh[:2]).all()
        assert list(sh[2:5]) == [5.0, 5.0, 5.0]
        assert list(sh[5:]) == [7.0, 7.0]

    def test_plateau_is_not_a_swing(self):
        sh, _ = swing_points([1.0, 3.0, 3.0, 1.0], [0.0] * 4)
        assert np.isnan(sh).all()


class TestOrderBlock:
    def test_constant_prices_flag_on(self):
        n = 6
        ob = order_block([10.0] * n, [10.0] * n, [10.0] * n, window=5, pct=0.002)
        assert np.isnan(ob[:4]).all()
        assert (ob[4:] == 1.0).all()

    def test_wide_range_flag_off(self):
        # range is 1% of close, bound is 0.2%
        ob = order_block([100.5] * 5, [99.5] * 5, [100.0] * 5, window=5, pct=0.002)
        assert ob[4] == 0.0

    def test_boundary_range_excluded(self):
        # dyadic values make spread == pct * close exact: 1.0 < 1.0 is false
        ob = order_block([512.5] * 5, [511.5] * 5, [512.0] * 5, window=5, pct=2.0**-9)
        assert ob[4] == 0.0


class TestMovingAverage:
    def test_mean_of_window(self):
        ma = moving_average([2.0, 4.0, 6.0], 3)
        assert np.isnan(ma[:2]).all()
        assert ma[2] == 4.0

    def test_window_one_is_identity(self):
        closes = [5.0, 7.0, 6.5]
        assert list(moving_average(closes, 1)) == closes

    def test_window_two(self):
        ma = moving_average([1.0, 2.0, 3.0, 4.0], 2)
        assert np.isnan(ma[0])
        assert list(ma[1:]) == [1.5, 2.5, 3.5]


class TestRsi:
    def test_strictly_rising_is_100(self):
        values = rsi(np.linspace(10, 20, 20), period=14)
        assert (values[14:] == 100.0).all()

    def test_balanced_moves_are_50(self):
        closes = [10.0, 11.0, 10.0, 11.0, 10.0]
        values = rsi(closes, period=4)
        assert values[4] == 50.0

    def test_flat_window_is_50(self):
        values = rsi([10.0] * 6, period=4)
        assert (values[4:] == 50.0).all()

    def test_hand_computed_example(self):
        values = rsi([10.0, 11.0, 10.0, 12.0], period=3)
        assert values[3] == pytest.approx(75.0)

    def test_range_bound(self):
        closes = zigzag_closes(80, seed=3)
        values = rsi(closes, period=14)
        ok = values[14:]
        assert ((ok >= 0.0) & (ok <= 100.0)).all()

    def test_needs_more_closes_than_period(self):
        with pytest.raises(ValueError):
            rsi([1.0, 2.0], period=3)


class TestMakeLabels:
    def test_strict_increase(self):
        labels = make_labels([100.0, 101.0], h=1)
        assert labels[0] == 1.0

    def test_equality_is_zero(self):
        labels = make_labels([100.0, 100.0], h=1)
        assert labels[0] == 0.0

    def test_horizon_boundary(self):
        labels = make_labels(np.arange(60, dtype=float), h=50)
        assert (~np.isnan(labels[:10])).all()
        assert np.isnan(labels[10:]).all()

    @given(st.integers(2, 30), st.integers(1, 10))
    @settings(max_examples=30)
    def test_suffix_extension_never_changes_defined_labels(self, n, extra):
        rng = np.random.RandomState(n * 31 + extra)
        closes = 50.0 + rng.rand(n + extra)
        h = max(1, n // 3)
        short = make_labels(closes[:n], h)
        full = make_labels(closes, h)
        defined = ~np.isnan(short)
        assert np.array_equal(short[defined], full[:n][defined])


class TestAssemble:
    def test_insufficient_history(self):
        closes = zigzag_closes(49)
        with pytest.raises(InsufficientHistoryError):
            assemble_features(make_candles(closes))

    def test_constant_prices_have_no_swings(self):
        candles = make_candles([100.0] * 80, spread=0.0)
        with pytest.raises(InsufficientHistoryError):
            assemble_features(candles)

    def test_columns_and_warmup(self):
        closes = zigzag_closes(120)
        frame = assemble_features(make_candles(closes))
        assert frame.features.shape[1] == 7
        assert len(frame) < 120  # warm-up dropped
        # diff column is exactly fast minus slow
        assert np.array_equal(frame.features[:, 6], frame.features[:, 3] - frame.features[:, 4])
        ob = frame.features[:, 2]
        assert set(np.unique(ob)) <= {0.0, 1.0}
        assert ((frame.features[:, 5] >= 0.0) & (frame.features[:, 5] <= 100.0)).all()

    def test_sample_layout_extension_conformance(self):
        # ten real rows appended to enough history: frame emits the full
        # derived-feature row shape for each of them
        tail = [1364.53, 1366.00, 1365.82, 1364.78, 1365.25, 1363.95, 1364.65, 1364.35, 1365.25, 1365.50]
        closes = list(zigzag_closes(50, base=1364.0)) + tail
        frame = assemble_features(make_candles(closes))
        text = frame.to_csv()
        lines = text.splitlines()
        assert lines[0] == CSV_HEADER
        last = lines[-1].split(",")
        assert len(last) == 10
        assert all(field != "" for field in last[:9])  # label may be blank

    def test_prefix_stability(self):
        closes = zigzag_closes(140, seed=9)
        candles = make_candles(closes)
        full = assemble_features(candles)
        prefix = assemble_features(candles[:90])
        by_ts = {ts: i for i, ts in enumerate(full.timestamps)}
        for i, ts in enumerate(prefix.timestamps):
            j = by_ts[ts]
            assert np.array_equal(prefix.features[i], full.features[j])
            assert prefix.closes[i] == full.closes[j]

    @given(st.sampled_from([0.25, 0.5, 2.0, 4.0]))
    @settings(max_examples=8, deadline=None)
    def test_price_scale_equivariance(self, k):
        closes = zigzag_closes(110, seed=4)
        base = assemble_features(make_candles(closes))
        scaled = assemble_features(
            [Candle(c.timestamp, c.open * k, c.high * k, c.low * k, c.close * k)
             for c in make_candles(closes)]
        )
        assert scaled.timestamps == base.timestamps
        for col in (0, 1, 3, 4, 6):  # distances, MAs, diff scale with price
            assert np.array_equal(scaled.features[:, col], base.features[:, col] * k)
        for col in (2, 5):  # order block and RSI are scale-free
            assert np.array_equal(scaled.features[:, col], base.features[:, col])
        assert np.array_equal(scaled.labels, base.labels, equal_nan=True)

    def test_unlabeled_tail_retained(self):
        closes = zigzag_closes(120)
        frame = assemble_features(make_candles(closes), FeatureConfig(horizon=30))
        assert np.isnan(frame.labels[-1])
        assert frame.labeled_mask.sum() > 0

    def test_csv_round_trip(self):
        closes = zigzag_closes(120, seed=5)
        frame = assemble_features(make_candles(closes))
        back = FeatureFrame.from_csv(frame.to_csv())
        assert back.timestamps == frame.timestamps
        assert np.array_equal(back.features, frame.features)
        assert np.array_equal(back.closes, frame.closes)
        assert np.array_equal(back.labels, frame.labels, equal_nan=True)

    def test_from_csv_rejects_wrong_header(self):
        with pytest.raises(ValueError, match="header"):
            FeatureFrame.from_csv("Datetime,Close\n")
