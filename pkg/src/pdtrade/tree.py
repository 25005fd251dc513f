"""Decision tree trained by maximising the compression gain of time-ordered labels.

Split quality at a node holding the ordered binary labels S is
``ETC(S) - |S_L|/|S| * ETC(S_L) - |S_R|/|S| * ETC(S_R)`` where the left and
right label subsequences preserve the row order of the parent. Candidate
thresholds are the midpoints between consecutive sorted unique values of a
column; rows with value <= threshold go left. Ties are deterministic:
within a feature the smallest threshold wins, across features the lowest
index wins (strict ``>`` comparisons throughout).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .etc import etc_int_codes

__all__ = [
    "Leaf",
    "Internal",
    "TreeNode",
    "SplitResult",
    "TrainConfig",
    "TrainBudgetExceeded",
    "TreeFormatError",
    "etc_gain",
    "find_best_feature",
    "build_pdt",
    "predict",
    "majority_label",
    "node_count",
    "serialize_tree",
    "deserialize_tree",
]


@dataclass(frozen=True)
class Leaf:
    label: int


@dataclass(frozen=True)
class Internal:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Internal]


@dataclass(frozen=True)
class SplitResult:
    gain: float
    threshold: float | None


@dataclass(frozen=True)
class TrainConfig:
    max_depth: int = 10
    min_node_size: int = 5

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")


class TrainBudgetExceeded(RuntimeError):
    """Raised when a wall-clock training budget runs out mid-build."""


class TreeFormatError(ValueError):
    """Raised when a serialized tree document cannot be parsed."""


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("data must be a rectangular row-major matrix")
    return arr


def _as_labels(labels) -> np.ndarray:
    arr = np.asarray(labels, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    return arr


def etc_gain(data, labels, feature_index: int) -> SplitResult:
    """Best threshold on one column by compression gain.

    Returns the (-inf, None) sentinel when the column has a single unique
    value. Raises ValueError on an empty node.
    """
    data = _as_matrix(data)
    labels = _as_labels(labels)
    if data.shape[0] == 0:
        raise ValueError("empty node")
    if data.shape[0] != labels.size:
        raise ValueError("data and labels disagree on row count")
    if not 0 <= feature_index < data.shape[1]:
        raise IndexError(f"feature_index {feature_index} out of range")

    column = data[:, feature_index]
    unique_vals = np.unique(column)
    if unique_vals.size == 1:
        return SplitResult(float("-inf"), None)

    total_etc = etc_int_codes(labels)
    thresholds = (unique_vals[:-1] + unique_vals[1:]) / 2.0
    n = labels.size
    best_gain = float("-inf")
    best_threshold: float | None = None
    for t in thresholds:
        left_mask = column <= t
        left = labels[left_mask]
        right = labels[~left_mask]
        etc_left = etc_int_codes(left) if left.size > 0 else 0
        etc_right = etc_int_codes(right) if right.size > 0 else 0
        weight_left = left.size / n
        weight_right = right.size / n
        gain = total_etc - (weight_left * etc_left + weight_right * etc_right)
        if gain > best_gain:
            best_gain = gain
            best_threshold = float(t)
    return SplitResult(best_gain, best_threshold)


def find_best_feature(data, labels) -> tuple[int | None, float | None]:
    """Feature index and threshold with the strictly greatest gain.

    Columns are scanned in ascending index order, so on equal gains the
    earlier feature wins. Returns (None, None) when every column is
    constant.
    """
    data = _as_matrix(data)
    labels = _as_labels(labels)
    if data.shape[0] == 0:
        raise ValueError("empty node")
    best_feature: int | None = None
    best_threshold: float | None = None
    best_gain = float("-inf")
    for feature_index in range(data.shape[1]):
        result = etc_gain(data, labels, feature_index)
        if result.gain > best_gain:
            best_gain = result.gain
            best_feature = feature_index
            best_threshold = result.threshold
    return best_feature, best_threshold


def majority_label(labels) -> int:
    """Most frequent binary label; ties go to 0 (the no-position default)."""
    labels = _as_labels(labels)
    ones = int(np.count_nonzero(labels))
    zeros = labels.size - ones
    return 1 if ones > zeros else 0


def build_pdt(
    data,
    labels,
    depth: int = 0,
    cfg: TrainConfig | None = None,
    *,
    on_node: Callable[[TreeNode], None] | None = None,
    time_budget: float | None = None,
) -> TreeNode | None:
    """Recursively grow a tree from a feature matrix and ordered labels.

    Stops on empty data (returns None), uniform labels, reaching
    ``cfg.max_depth``, nodes smaller than ``cfg.min_node_size``, or when no
    column admits a split; the last three produce majority-label leaves.
    ``on_node`` is called once per finished node (progress reporting);
    ``time_budget`` is a wall-clock cap in seconds for the whole build.
    """
    data = _as_matrix(data)
    labels = _as_labels(labels)
    if data.shape[0] != labels.size:
        raise ValueError("data and labels disagree on row count")
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary (0 or 1)")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    cfg = cfg if cfg is not None else TrainConfig()
    deadline = time.monotonic() + time_budget if time_budget is not None else None
    return _grow(data, labels, depth, cfg, on_node, deadline)


def _grow(data, labels, depth, cfg, on_node, deadline) -> TreeNode | None:
    if deadline is not None and time.monotonic() > deadline:
        raise TrainBudgetExceeded("training wall-clock budget exhausted")
    if data.shape[0] == 0:
        return None

    def done(node):
        if on_node is not None:
            on_node(node)
        return node

    first = int(labels[0])
    if np.all(labels == first):
        return done(Leaf(first))
    if depth >= cfg.max_depth:
        return done(Leaf(majority_label(labels)))
    if data.shape[0] < cfg.min_node_size:
        return done(Leaf(majority_label(labels)))

    best_feature, best_threshold = find_best_feature(data, labels)
    if best_threshold is None:
        return done(Leaf(majority_label(labels)))

    left_mask = data[:, best_feature] <= best_threshold
    left = _grow(data[left_mask], labels[left_mask], depth + 1, cfg, on_node, deadline)
    right = _grow(data[~left_mask], labels[~left_mask], depth + 1, cfg, on_node, deadline)
    return done(Internal(best_feature, best_threshold, left, right))


def predict(tree: TreeNode | None, x: Sequence[float]) -> int:
    """Route one feature vector to a leaf: <= threshold goes left."""
    if tree is None:
        raise ValueError("untrained model")
    node = tree
    while isinstance(node, Internal):
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    return node.label


def node_count(tree: TreeNode | None) -> int:
    if tree is None:
        return 0
    if isinstance(tree, Leaf):
        return 1
    return 1 + node_count(tree.left) + node_count(tree.right)


def _to_jsonable(node: TreeNode):
    if isinstance(node, Leaf):
        return {"label": node.label}
    return {
        "feature_index": node.feature_index,
        "threshold": node.threshold,
        "left": _to_jsonable(node.left),
        "right": _to_jsonable(node.right),
    }


def serialize_tree(tree: TreeNode | None) -> str:
    """Render a tree as a hierarchical JSON document (deterministic bytes)."""
    if tree is None:
        raise ValueError("untrained model")
    return json.dumps(_to_jsonable(tree), indent=2, sort_keys=True) + "\n"


def _node_from(obj, path: str) -> TreeNode:
    if not isinstance(obj, dict):
        raise TreeFormatError(f"{path}: expected an object, got {type(obj).__name__}")
    keys = set(obj)
    if keys == {"label"}:
        label = obj["label"]
        if label not in (0, 1):
            raise TreeFormatError(f"{path}.label: must be 0 or 1, got {label!r}")
        return Leaf(int(label))
    expected = {"feature_index", "threshold", "left", "right"}
    if keys != expected:
        missing = expected - keys
        extra = keys - expected - {"label"}
        detail = []
        if missing:
            detail.append(f"missing {sorted(missing)}")
        if extra or "label" in keys:
            detail.append(f"unexpected {sorted(keys - expected)}")
        raise TreeFormatError(f"{path}: malformed node ({'; '.join(detail)})")
    feature_index = obj["feature_index"]
    if not isinstance(feature_index, int) or feature_index < 0:
        raise TreeFormatError(f"{path}.feature_index: must be a non-negative integer")
    threshold = obj["threshold"]
    if not isinstance(threshold, (int, float)) or isinstance(threshold, bool):
        raise TreeFormatError(f"{path}.threshold: must be a number")
    return Internal(
        feature_index,
        float(threshold),
        _node_from(obj["left"], path + ".left"),
        _node_from(obj["right"], path + ".right"),
    )


def deserialize_tree(text: str) -> TreeNode:
    """Parse a tree document; errors carry the offending location."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"invalid tree document: {exc}") from exc
    return _node_from(obj, "$")
