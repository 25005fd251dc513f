import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdtrade.tree import (
    Internal,
    Leaf,
    SplitResult,
    TrainBudgetExceeded,
    TrainConfig,
    TreeFormatError,
    build_pdt,
    deserialize_tree,
    etc_gain,
    find_best_feature,
    majority_label,
    node_count,
    predict,
    serialize_tree,
)

from oracle import all_splits, build_reference, trace_etc

COL = [[1.0], [2.0], [3.0], [4.0]]
STEP_LABELS = [0, 0, 1, 1]


class TestEtcGain:
    def test_clean_step_split(self):
        # parent ETC 3, both children uniform
        assert etc_gain(COL, STEP_LABELS, 0) == SplitResult(3.0, 2.5)

    def test_constant_column_sentinel(self):
        result = etc_gain([[7.0], [7.0], [7.0]], [0, 1, 0], 0)
        assert result.gain == float("-inf")
        assert result.threshold is None

    def test_pure_parent_gives_zero_gain_at_first_midpoint(self):
        assert etc_gain([[1.0], [2.0]], [1, 1], 0) == SplitResult(0.0, 1.5)

    def test_empty_node(self):
        with pytest.raises(ValueError, match="empty node"):
            etc_gain(np.empty((0, 1)), [], 0)

    def test_bad_feature_index(self):
        with pytest.raises(IndexError):
            etc_gain(COL, STEP_LABELS, 1)

    def test_sentinel_iff_threshold_absent(self):
        for rows, labels in [(COL, STEP_LABELS), ([[5.0]] * 4, STEP_LABELS)]:
            r = etc_gain(rows, labels, 0)
            assert (r.gain == float("-inf")) == (r.threshold is None)


class TestFindBestFeature:
    def test_ignores_constant_column(self):
        data = [[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]]
        assert find_best_feature(data, STEP_LABELS) == (0, 2.5)

    def test_first_feature_wins_ties(self):
        data = [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]]
        assert find_best_feature(data, STEP_LABELS) == (0, 2.5)

    def test_all_constant(self):
        data = [[3.0, 9.0], [3.0, 9.0]]
        assert find_best_feature(data, [0, 1]) == (None, None)

    def test_empty(self):
        with pytest.raises(ValueError, match="empty node"):
            find_best_feature(np.empty((0, 2)), [])


class TestBuildPdt:
    def test_uniform_labels_leaf(self):
        assert build_pdt(COL, [1, 1, 1, 1]) == Leaf(1)

    def test_clean_split_tree(self):
        cfg = TrainConfig(max_depth=3, min_node_size=1)
        tree = build_pdt(COL, STEP_LABELS, cfg=cfg)
        assert tree == Internal(0, 2.5, Leaf(0), Leaf(1))

    def test_depth_stop_majority(self):
        cfg = TrainConfig(max_depth=2, min_node_size=1)
        tree = build_pdt([[1.0], [2.0], [3.0]], [0, 1, 0], depth=2, cfg=cfg)
        assert tree == Leaf(0)

    def test_min_node_size_stop(self):
        cfg = TrainConfig(max_depth=10, min_node_size=5)
        tree = build_pdt([[1.0], [2.0], [3.0]], [0, 1, 1], cfg=cfg)
        assert tree == Leaf(1)

    def test_empty_data_returns_none(self):
        assert build_pdt(np.empty((0, 2)), []) is None

    def test_majority_tie_resolves_to_zero(self):
        assert majority_label([0, 1, 1, 0]) == 0
        # constant feature forces a majority leaf on a tied node
        assert build_pdt([[5.0]] * 4, [0, 1, 1, 0], cfg=TrainConfig(10, 1)) == Leaf(0)

    def test_ragged_matrix_rejected(self):
        with pytest.raises(ValueError):
            build_pdt([[1.0, 2.0], [3.0]], [0, 1])

    def test_row_count_mismatch(self):
        with pytest.raises(ValueError):
            build_pdt(COL, [0, 1])

    def test_node_callback_counts_nodes(self):
        seen = []
        cfg = TrainConfig(max_depth=3, min_node_size=1)
        tree = build_pdt(COL, STEP_LABELS, cfg=cfg, on_node=seen.append)
        assert len(seen) == node_count(tree) == 3

    def test_time_budget_enforced(self):
        rng = np.random.RandomState(0)
        data = rng.rand(400, 7)
        labels = rng.randint(0, 2, 400)
        with pytest.raises(TrainBudgetExceeded):
            build_pdt(data, labels, cfg=TrainConfig(10, 5), time_budget=0.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(max_depth=0)
        with pytest.raises(ValueError):
            TrainConfig(min_node_size=0)


class TestPredict:
    TREE = Internal(0, 2.5, Leaf(0), Leaf(1))

    def test_leaf_short_circuit(self):
        assert predict(Leaf(1), [99.0]) == 1

    def test_boundary_goes_left(self):
        assert predict(self.TREE, [2.5]) == 0

    def test_strict_right(self):
        assert predict(self.TREE, [3.0]) == 1

    def test_untrained(self):
        with pytest.raises(ValueError, match="untrained"):
            predict(None, [1.0])


class TestSerialization:
    def test_round_trip_internal(self):
        tree = Internal(0, 2.5, Leaf(0), Leaf(1))
        assert deserialize_tree(serialize_tree(tree)) == tree

    def test_round_trip_leaf(self):
        assert deserialize_tree(serialize_tree(Leaf(0))) == Leaf(0)

    def test_truncated_document(self):
        doc = serialize_tree(Internal(0, 2.5, Leaf(0), Leaf(1)))
        with pytest.raises(TreeFormatError):
            deserialize_tree(doc[: len(doc) // 2])

    def test_error_names_path(self):
        with pytest.raises(TreeFormatError, match=r"\$\.left"):
            deserialize_tree('{"feature_index": 0, "threshold": 1.0, "left": {"label": 7}, "right": {"label": 1}}')

    def test_serialize_none_rejected(self):
        with pytest.raises(ValueError, match="untrained"):
            serialize_tree(None)

    def test_deterministic_bytes(self):
        rng = np.random.RandomState(3)
        data = rng.rand(40, 3)
        labels = rng.randint(0, 2, 40)
        cfg = TrainConfig(max_depth=4, min_node_size=2)
        a = serialize_tree(build_pdt(data, labels, cfg=cfg))
        b = serialize_tree(build_pdt(data.copy(), labels.copy(), cfg=cfg))
        assert a == b


def _random_dataset(rng):
    n_rows = rng.randint(1, 13)
    n_feat = rng.randint(1, 4)
    rows = [
        [float(rng.randint(0, 4)) for _ in range(n_feat)] for _ in range(n_rows)
    ]
    labels = [int(rng.randint(0, 2)) for _ in range(n_rows)]
    return rows, labels


class TestOracleEquivalence:
    def test_small_random_datasets_match_reference(self):
        rng = np.random.RandomState(42)
        for _ in range(40):
            rows, labels = _random_dataset(rng)
            cfg = TrainConfig(max_depth=6, min_node_size=1)
            mine = build_pdt(rows, labels, cfg=cfg)
            ref = build_reference(rows, labels, 0, 6, 1)
            assert mine == ref, (rows, labels)

    def test_chosen_split_gain_is_maximal(self):
        rng = np.random.RandomState(7)
        for _ in range(30):
            rows, labels = _random_dataset(rng)
            if len(set(labels)) < 2:
                continue
            feature, threshold = find_best_feature(rows, labels)
            if feature is None:
                continue
            candidates = all_splits(rows, labels)
            chosen = [g for f, t, g in candidates if f == feature and t == threshold]
            assert chosen, "chosen split missing from exhaustive enumeration"
            assert all(chosen[0] >= g for _, _, g in candidates)

    def test_training_set_consistency(self):
        rng = np.random.RandomState(11)
        for _ in range(20):
            rows, labels = _random_dataset(rng)
            # skip contradictory duplicates: same vector, different label
            seen = {}
            ok = True
            for r, y in zip(rows, labels):
                key = tuple(r)
                if seen.setdefault(key, y) != y:
                    ok = False
                    break
            if not ok:
                continue
            tree = build_pdt(rows, labels, cfg=TrainConfig(10**9, 1))
            for r, y in zip(rows, labels):
                assert predict(tree, r) == y


class TestRescalingInvariance:
    @given(st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_power_of_two_rescale_keeps_structure(self, scale, seed):
        rng = np.random.RandomState(seed)
        data = rng.randint(0, 8, size=(10, 2)).astype(float)
        labels = rng.randint(0, 2, size=10)
        cfg = TrainConfig(max_depth=4, min_node_size=1)
        base = build_pdt(data, labels, cfg=cfg)
        scaled_data = data.copy()
        scaled_data[:, 1] *= scale
        scaled = build_pdt(scaled_data, labels, cfg=cfg)

        def same_shape(a, b):
            if isinstance(a, Leaf) or isinstance(b, Leaf):
                return a == b
            if (a.feature_index, ) != (b.feature_index, ):
                return False
            expected = a.threshold * scale if a.feature_index == 1 else a.threshold
            if b.threshold != expected:
                return False
            return same_shape(a.left, b.left) and same_shape(a.right, b.right)

        assert same_shape(base, scaled)
        for row in data:
            scaled_row = row.copy()
            scaled_row[1] *= scale
            assert predict(base, row) == predict(scaled, scaled_row)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=30))
@settings(deadline=None)
def test_oracle_trace_etc_agrees_with_module(seq):
    from pdtrade.etc import calculate_etc

    assert trace_etc(seq) == calculate_etc(seq)


def test_gain_math_matches_hand_value():
    # [0,0,1,1] -> ETC 3; threshold 1.5 leaves [0] / [0,1,1]: 0 and 2
    candidates = all_splits([[1.0], [2.0], [3.0], [4.0]], STEP_LABELS)
    gains = {t: g for _, t, g in candidates}
    assert gains[1.5] == 3 - (1 / 4 * 0 + 3 / 4 * 2)
    assert gains[2.5] == 3.0
    assert math.isclose(gains[3.5], 1.5)
