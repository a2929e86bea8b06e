"""Axis-parallel decision trees with a pluggable split criterion.

The Hellinger criterion scores a split by the mean pairwise Hellinger
distance between the within-class partition distributions of the classes
present at a node; because each class is normalized by its own total, the
score is invariant under duplication of any single class, which is the whole
point of using it on skewed data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import _kernels
from .errors import ArityMismatch

Criterion = Literal["hellinger", "entropy", "gini"]

_CRITERION_IDS = {
    "hellinger": _kernels.CRIT_HELLINGER,
    "entropy": _kernels.CRIT_ENTROPY,
    "gini": _kernels.CRIT_GINI,
}


@dataclass(frozen=True)
class TreeParams:
    """Induction limits. max_depth/feature_subsample None means unlimited/all."""

    max_depth: int | None = None
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    feature_subsample: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.feature_subsample is not None and self.feature_subsample < 1:
            raise ValueError("feature_subsample must be >= 1 or None")


@dataclass
class TrainedTree:
    """Flat node arrays; feature == -1 marks a leaf.

    leaf_counts[i] holds the class counts of the training rows that reached
    node i, and proba holds the derived proportions used for prediction.
    """

    feature: np.ndarray
    threshold: np.ndarray
    children_left: np.ndarray
    children_right: np.ndarray
    leaf_counts: np.ndarray
    proba: np.ndarray
    n_features: int
    n_classes: int

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])


def _as_count_vector(counts, name: str) -> np.ndarray:
    arr = np.asarray(counts, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d count vector")
    if (arr < 0).any():
        raise ValueError(f"{name} contains negative counts")
    return arr


def hellinger_split_score(
    left_counts: Sequence[int],
    right_counts: Sequence[int],
    positive_class: int | None = None,
) -> float:
    """Hellinger distance between the two sides' within-class distributions.

    With a ``positive_class`` the score is the two-class form of that class
    against everything else. With None, the score is the unweighted mean of
    the pairwise two-class scores over all classes present. A split with an
    empty side scores 0. Range: [0, sqrt(2)].
    """
    left = _as_count_vector(left_counts, "left_counts")
    right = _as_count_vector(right_counts, "right_counts")
    if left.size != right.size:
        raise ValueError("left and right count vectors differ in length")
    parent = left + right
    if left.sum() == 0 or right.sum() == 0:
        return 0.0

    def side_ratio(part: float, total: float) -> float:
        return part / total if total > 0 else 0.0

    if positive_class is not None:
        c = int(positive_class)
        if not (0 <= c < left.size):
            raise ValueError("positive_class out of range")
        pos_total = parent[c]
        neg_total = parent.sum() - pos_total
        a = math.sqrt(side_ratio(left[c], pos_total)) - math.sqrt(
            side_ratio(left.sum() - left[c], neg_total)
        )
        b = math.sqrt(side_ratio(right[c], pos_total)) - math.sqrt(
            side_ratio(right.sum() - right[c], neg_total)
        )
        return math.sqrt(a * a + b * b)

    present = [c for c in range(left.size) if parent[c] > 0]
    if len(present) < 2:
        return 0.0
    sqrt_left = {c: math.sqrt(left[c] / parent[c]) for c in present}
    sqrt_right = {c: math.sqrt(right[c] / parent[c]) for c in present}
    acc = 0.0
    pairs = 0
    for ai, a in enumerate(present):
        for b in present[ai + 1 :]:
            dl = sqrt_left[a] - sqrt_left[b]
            dr = sqrt_right[a] - sqrt_right[b]
            acc += math.sqrt(dl * dl + dr * dr)
            pairs += 1
    return acc / pairs


def _impurity(counts: np.ndarray, kind: str) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    if kind == "entropy":
        h = 0.0
        for c in counts:
            if c > 0:
                p = c / total
                h -= p * math.log(p)
        return h / math.log(2.0)
    g = 1.0
    for c in counts:
        p = c / total
        g -= p * p
    return g


def impurity_split_score(
    left_counts: Sequence[int],
    right_counts: Sequence[int],
    kind: str = "entropy",
) -> float:
    """Impurity gain: parent impurity minus size-weighted child impurity.

    Entropy is measured in bits.
    """
    if kind not in ("entropy", "gini"):
        raise ValueError(f"unknown impurity kind {kind!r}")
    left = _as_count_vector(left_counts, "left_counts")
    right = _as_count_vector(right_counts, "right_counts")
    if left.size != right.size:
        raise ValueError("left and right count vectors differ in length")
    parent = left + right
    m = parent.sum()
    if m <= 0:
        raise ValueError("parent count must be positive")
    gain = _impurity(parent, kind)
    n_left = left.sum()
    n_right = right.sum()
    if n_left > 0:
        gain -= (n_left / m) * _impurity(left, kind)
    if n_right > 0:
        gain -= (n_right / m) * _impurity(right, kind)
    return gain


def fit_tree(
    X,
    y,
    n_classes: int | None = None,
    params: TreeParams | None = None,
    criterion: Criterion = "hellinger",
) -> TrainedTree:
    """Grow a tree by recursive best-split induction.

    At each node ``feature_subsample`` seeded-random features are examined;
    candidate thresholds are the midpoints between consecutive distinct
    sorted values; the boundary maximizing the criterion wins, with ties
    broken toward the lower feature index and lower threshold. Leaves store
    raw class proportions.
    """
    params = params or TreeParams()
    if criterion not in _CRITERION_IDS:
        raise ValueError(f"unknown split criterion {criterion!r}")
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.int64))
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty 2-d array")
    if y.shape != (X.shape[0],):
        raise ValueError("y must align with X rows")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature values")
    if int(y.min()) < 0:
        raise ValueError("negative class label")
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    if int(y.max()) >= k:
        raise ValueError("label outside [0, n_classes)")

    d = X.shape[1]
    xt = np.ascontiguousarray(X.T)
    idx = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int32))
    feats_per_node = params.feature_subsample if params.feature_subsample is not None else d
    max_depth = -1 if params.max_depth is None else params.max_depth
    seed = np.uint64(params.seed & 0xFFFFFFFFFFFFFFFF)

    feature, threshold, child_l, child_r, counts = _kernels.grow_classification(
        xt,
        y,
        k,
        idx,
        max_depth,
        params.min_samples_leaf,
        params.min_samples_split,
        _CRITERION_IDS[criterion],
        feats_per_node,
        seed,
    )
    sums = counts.sum(axis=1, keepdims=True)
    proba = counts / np.where(sums > 0, sums, 1)
    return TrainedTree(feature, threshold, child_l, child_r, counts, proba, d, k)


def route_rows(feature, threshold, children_left, children_right, X) -> np.ndarray:
    """Send every row of X down the node arrays; returns the leaf id per row."""
    nodes = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        f = feature[nodes]
        active = f >= 0
        if not active.any():
            return nodes
        rows = np.flatnonzero(active)
        current = nodes[rows]
        go_left = X[rows, f[active]] <= threshold[current]
        nodes[rows] = np.where(go_left, children_left[current], children_right[current])


def tree_predict_proba(tree: TrainedTree, rows) -> np.ndarray:
    """Class-proportion vector(s) of the leaf each row reaches."""
    X = np.asarray(rows, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise ArityMismatch(
            f"row arity {X.shape[-1]} differs from training arity {tree.n_features}"
        )
    leaves = route_rows(
        tree.feature, tree.threshold, tree.children_left, tree.children_right, X
    )
    out = tree.proba[leaves]
    return out[0] if single else out
