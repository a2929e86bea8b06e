"""The three base learners, each emitting an n x k class-score matrix.

Forests average tree leaf proportions; the booster sums per-class tree
margins and maps them through a softmax so each row is a distribution over
the class list.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _kernels
from .data import SampleMatrix, stratified_split
from .errors import ArityMismatch
from .evaluation import compute_metrics
from .overlap import confusion_matrix
from .tree import Criterion, TrainedTree, TreeParams, fit_tree, route_rows, tree_predict_proba

THREADS_ENV_VAR = "NIDS_ENSEMBLE_THREADS"


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV_VAR, "1")))
    except ValueError:
        return 1


def _map_ordered(fn, n: int) -> list:
    workers = _thread_count()
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


@dataclass
class ForestModel:
    """A bag of trees sharing feature arity and class count."""

    trees: list[TrainedTree]
    kind: str
    criterion: Criterion
    params: TreeParams
    n_classes: int
    n_features: int
    seed: int
    # balanced bagging audit trail: rows drawn per class for each estimator
    sample_class_counts: np.ndarray | None = None


def _matrix_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, SampleMatrix):
        return data.values, data.labels
    raise TypeError("expected a SampleMatrix")


def fit_random_forest(
    data: SampleMatrix,
    n_trees: int = 100,
    params: TreeParams | None = None,
    criterion: Criterion = "hellinger",
    bootstrap: bool = True,
    n_classes: int | None = None,
    seed: int = 0,
) -> ForestModel:
    """Fit n_trees trees, each on a size-n bootstrap with per-node feature
    subsampling. criterion="hellinger" gives the skew-insensitive forest."""
    X, y = _matrix_arrays(data)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    params = params or TreeParams()
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    children = np.random.SeedSequence(seed).spawn(n_trees)

    def build(i: int) -> TrainedTree:
        row_seq, tree_seq = children[i].spawn(2)
        if bootstrap:
            rng = np.random.default_rng(row_seq)
            rows = rng.integers(0, X.shape[0], X.shape[0])
            xb, yb = X[rows], y[rows]
        else:
            xb, yb = X, y
        tree_seed = int(tree_seq.generate_state(1)[0])
        return fit_tree(xb, yb, k, replace(params, seed=tree_seed), criterion)

    trees = _map_ordered(build, n_trees)
    return ForestModel(trees, "random-forest", criterion, params, k, X.shape[1], seed)


def balanced_sample(labels: np.ndarray, target: int, rng) -> np.ndarray:
    """Undersample rows so every class is reduced to min(count, target),
    drawn without replacement."""
    chosen = []
    for c in np.unique(labels):
        rows_c = np.flatnonzero(labels == c)
        take = min(rows_c.size, target)
        chosen.append(np.sort(rng.choice(rows_c, size=take, replace=False)))
    return np.concatenate(chosen)


def fit_balanced_bagging(
    data: SampleMatrix,
    n_estimators: int = 50,
    params: TreeParams | None = None,
    criterion: Criterion = "gini",
    sample_target: int | None = None,
    n_classes: int | None = None,
    seed: int = 0,
) -> ForestModel:
    """Bagging over class-balanced undersamples.

    The default target is the minority class count, so every estimator
    trains on fully balanced data.
    """
    X, y = _matrix_arrays(data)
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    if X.shape[0] < 1:
        raise ValueError("empty training data")
    params = params or TreeParams()
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    present_counts = np.bincount(y, minlength=k)
    target = (
        int(sample_target)
        if sample_target is not None
        else int(present_counts[present_counts > 0].min())
    )
    if target < 1:
        raise ValueError("sample_target must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_estimators)
    audit = np.zeros((n_estimators, k), dtype=np.int64)

    def build(i: int) -> TrainedTree:
        row_seq, tree_seq = children[i].spawn(2)
        rows = balanced_sample(y, target, np.random.default_rng(row_seq))
        audit[i] = np.bincount(y[rows], minlength=k)
        tree_seed = int(tree_seq.generate_state(1)[0])
        return fit_tree(X[rows], y[rows], k, replace(params, seed=tree_seed), criterion)

    trees = _map_ordered(build, n_estimators)
    return ForestModel(
        trees, "balanced-bagging", criterion, params, k, X.shape[1], seed, audit
    )


@dataclass
class RegressionTree:
    """Flat node arrays for one additive-margin tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    children_left: np.ndarray
    children_right: np.ndarray
    value: np.ndarray
    n_features: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        leaves = route_rows(
            self.feature, self.threshold, self.children_left, self.children_right, X
        )
        return self.value[leaves]


@dataclass
class BoosterModel:
    """Second-order boosted trees on the softmax objective.

    rounds[r][c] is the round-r tree for class c; prediction sums
    learning_rate * leaf values on top of base_margin and applies a softmax.
    """

    rounds: list[list[RegressionTree]]
    learning_rate: float
    l2_lambda: float
    base_margin: np.ndarray
    n_classes: int
    n_features: int


def softmax(margins: np.ndarray) -> np.ndarray:
    z = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(margins: np.ndarray, labels: np.ndarray) -> float:
    """Total negative log-likelihood of the labels under softmax(margins)."""
    z = margins - margins.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(margins.shape[0])
    return float(-(z[rows, labels] - lse).sum())


def softmax_gradient(margins: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(total cross-entropy)/d(margins): softmax probabilities minus one-hot."""
    p = softmax(margins)
    g = p.copy()
    g[np.arange(margins.shape[0]), labels] -= 1.0
    return g


def fit_gradient_booster(
    data: SampleMatrix,
    n_rounds: int = 100,
    depth: int = 6,
    learning_rate: float = 0.3,
    l2_lambda: float = 1.0,
    n_classes: int | None = None,
) -> BoosterModel:
    """Newton-style boosting: per round and class, fit a regression tree to the
    softmax cross-entropy (gradient, hessian); leaf weight -G/(H + l2_lambda)
    scaled by the learning rate. Margins start at zero."""
    X, y = _matrix_arrays(data)
    if n_rounds < 0:
        raise ValueError("n_rounds must be >= 0")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if not (0.0 < learning_rate <= 1.0):
        raise ValueError("learning_rate must lie in (0, 1]")
    if l2_lambda < 0:
        raise ValueError("l2_lambda must be >= 0")
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    n, d = X.shape

    xt = np.ascontiguousarray(X.T)
    idx0 = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int32))
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    margins = np.zeros((n, k))

    rounds: list[list[RegressionTree]] = []
    for _ in range(n_rounds):
        probs = softmax(margins)
        grad = probs - onehot
        hess = probs * (1.0 - probs)
        per_class: list[RegressionTree] = []
        for c in range(k):
            idx = idx0.copy()
            g = np.ascontiguousarray(grad[:, c])
            h = np.ascontiguousarray(hess[:, c])
            feature, threshold, child_l, child_r, value, leaf_of = (
                _kernels.grow_regression(xt, g, h, idx, depth, 1, l2_lambda)
            )
            margins[:, c] += learning_rate * value[leaf_of]
            per_class.append(
                RegressionTree(feature, threshold, child_l, child_r, value, d)
            )
        rounds.append(per_class)
    return BoosterModel(rounds, learning_rate, l2_lambda, np.zeros(k), k, d)


def booster_margins(model: BoosterModel, X: np.ndarray) -> np.ndarray:
    margins = np.tile(model.base_margin, (X.shape[0], 1))
    for per_class in model.rounds:
        for c, tree in enumerate(per_class):
            margins[:, c] += model.learning_rate * tree.predict(X)
    return margins


def predict_proba(model, m) -> np.ndarray:
    """n x k class-score matrix; every row sums to 1."""
    if isinstance(m, SampleMatrix):
        X = m.values
    else:
        X = np.ascontiguousarray(np.asarray(m, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ArityMismatch(
            f"row arity {X.shape[-1] if X.ndim else 0} differs from "
            f"training arity {model.n_features}"
        )
    if isinstance(model, ForestModel):
        def one(i: int) -> np.ndarray:
            return tree_predict_proba(model.trees[i], X)

        parts = _map_ordered(one, len(model.trees))
        acc = parts[0].copy()
        for part in parts[1:]:
            acc += part
        return acc / len(parts)
    if isinstance(model, BoosterModel):
        return softmax(booster_margins(model, X))
    raise TypeError(f"cannot predict with {type(model).__name__}")


def make_forest_evaluator(
    n_classes: int,
    n_trees: int = 25,
    params: TreeParams | None = None,
    criterion: Criterion = "hellinger",
    holdout_fraction: float = 0.25,
    seed: int = 0,
) -> Callable[[SampleMatrix], float]:
    """Forward-selection scorer: fit a forest on a seeded internal split and
    return macro-averaged F1 on the held-out part."""

    def evaluator(subset: SampleMatrix) -> float:
        train, held_out = stratified_split(subset, 1.0 - holdout_fraction, seed)
        model = fit_random_forest(
            train, n_trees, params, criterion, n_classes=n_classes, seed=seed
        )
        pred = predict_proba(model, held_out).argmax(axis=1)
        cm = confusion_matrix(held_out.labels, pred, n_classes)
        report = compute_metrics(cm, tuple(str(c) for c in range(n_classes)))
        return float(np.mean([cls.f_measure for cls in report.per_class]))

    return evaluator
