"""Class-overlap correction.

Misclassified validation rows where the true class is the runner-up carry a
characteristic score gap between the winning and the true class. This module
collects those gaps per (true, predicted) class pair, prunes pairs whose
mean +/- std ranges overlap, and at test time adds the surviving mean back to
a row's runner-up score whenever its observed gap falls inside the range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentMismatch,
    AlreadyResolved,
    LengthMismatch,
    NotResolved,
    ShapeMismatch,
)


def confusion_matrix(true_labels, pred_labels, n_classes: int) -> np.ndarray:
    """counts[x, y] = number of rows with actual class x predicted as y."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if t.ndim != 1 or t.shape != p.shape:
        raise LengthMismatch("label arrays must be 1-d and equally long")
    if t.size == 0:
        raise LengthMismatch("label arrays are empty")
    if t.min() < 0 or p.min() < 0 or t.max() >= n_classes or p.max() >= n_classes:
        raise ValueError("label outside [0, n_classes)")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


@dataclass(frozen=True)
class OverlapModel:
    """Paired k x k gap statistics indexed (true class, predicted class).

    means/stds hold the mean and population standard deviation of the
    retained score gaps; diagonals are identically zero. ``resolved`` flips
    once overlapping ranges have been pruned.
    """

    means: np.ndarray
    stds: np.ndarray
    resolved: bool = False

    def __post_init__(self):
        means = np.ascontiguousarray(self.means, dtype=np.float64)
        stds = np.ascontiguousarray(self.stds, dtype=np.float64)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        if means.ndim != 2 or means.shape[0] != means.shape[1]:
            raise ValueError("means must be square")
        if stds.shape != means.shape:
            raise ValueError("stds must match means in shape")
        if np.diagonal(means).any() or np.diagonal(stds).any():
            raise ValueError("diagonals must be zero")
        if (stds < 0).any():
            raise ValueError("negative standard deviation")

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]


def identity_overlap_model(n_classes: int) -> OverlapModel:
    """A resolved model that never changes any score."""
    zeros = np.zeros((n_classes, n_classes))
    return OverlapModel(zeros, zeros.copy(), resolved=True)


def fit_overlap_stats(scores, true_labels, pred_labels) -> OverlapModel:
    """Collect per-(true, predicted) gap statistics from validation rows.

    For a row with true class x predicted as y, the gap D = score_y - score_x
    is retained iff no third class outscores the true class, i.e. the true
    class is the row's runner-up. Each pair with retained gaps stores their
    mean and population standard deviation; other pairs stay at zero.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise AlignmentMismatch("scores must be a 2-d matrix")
    n, k = s.shape
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if t.shape != (n,) or p.shape != (n,):
        raise AlignmentMismatch("labels must align with score rows")
    if n and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= k):
        raise ValueError("label outside [0, n_classes)")

    means = np.zeros((k, k))
    stds = np.zeros((k, k))
    mis = np.flatnonzero(t != p)
    if mis.size:
        sub = s[mis]
        rows = np.arange(mis.size)
        true_scores = sub[rows, t[mis]]
        gaps = sub[rows, p[mis]] - true_scores
        masked = sub.copy()
        masked[rows, t[mis]] = -np.inf
        masked[rows, p[mis]] = -np.inf
        third_best = masked.max(axis=1)
        retained = true_scores >= third_best
        pair_ids = t[mis] * k + p[mis]
        for pid in np.unique(pair_ids[retained]):
            vals = gaps[retained & (pair_ids == pid)]
            mu = float(vals.mean())
            sigma = math.sqrt(float(np.mean((vals - mu) ** 2)))
            means[pid // k, pid % k] = mu
            stds[pid // k, pid % k] = sigma
    return OverlapModel(means, stds, resolved=False)


def resolve_range_overlaps(model: OverlapModel, cm: np.ndarray) -> OverlapModel:
    """Prune overlapping gap ranges.

    For each true class x, every predicted class y with fitted statistics
    defines the closed interval [mean - std, mean + std]. Intervals are
    grouped into connected components under pairwise intersection; within a
    component only the entry with the largest misclassification count
    cm[x, y] survives (ties to the earlier class), the rest reset to zero.
    """
    if model.resolved:
        raise AlreadyResolved("overlap model ranges were already resolved")
    k = model.n_classes
    cm = np.asarray(cm, dtype=np.int64)
    if cm.shape != (k, k):
        raise ValueError("confusion matrix shape must match the overlap model")
    means = model.means.copy()
    stds = model.stds.copy()
    for x in range(k):
        ys = [
            y
            for y in range(k)
            if y != x and (means[x, y] != 0.0 or stds[x, y] != 0.0)
        ]
        if len(ys) < 2:
            continue
        lo = {y: means[x, y] - stds[x, y] for y in ys}
        hi = {y: means[x, y] + stds[x, y] for y in ys}
        seen: set[int] = set()
        for start in ys:
            if start in seen:
                continue
            component = [start]
            seen.add(start)
            frontier = [start]
            while frontier:
                a = frontier.pop()
                for b in ys:
                    if b in seen:
                        continue
                    if lo[a] <= hi[b] and lo[b] <= hi[a]:
                        seen.add(b)
                        component.append(b)
                        frontier.append(b)
            if len(component) < 2:
                continue
            keep = max(component, key=lambda y: (cm[x, y], -y))
            for y in component:
                if y != keep:
                    means[x, y] = 0.0
                    stds[x, y] = 0.0
    return OverlapModel(means, stds, resolved=True)


def apply_overlap_correction(scores, model: OverlapModel) -> np.ndarray:
    """Raise runner-up scores whose gap matches a fitted error range.

    Per row: find the winning class and the runner-up (smallest gap to the
    winner); if that gap falls inside [mean - std, mean + std] of the
    (runner-up, winner) entry, add the mean to the runner-up score. At most
    one entry per row changes; rows and entries never decrease.
    """
    if not model.resolved:
        raise NotResolved("resolve the overlap model before applying it")
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != model.n_classes:
        raise ShapeMismatch("score matrix width differs from the overlap model")
    out = s.copy()
    if s.shape[0] == 0 or s.shape[1] < 2:
        return out
    rows = np.arange(s.shape[0])
    winner = s.argmax(axis=1)
    gaps = s[rows, winner][:, None] - s
    gaps[rows, winner] = np.inf
    runner_up = gaps.argmin(axis=1)
    gap = gaps[rows, runner_up]
    mu = model.means[runner_up, winner]
    sd = model.stds[runner_up, winner]
    fire = (gap >= mu - sd) & (gap <= mu + sd)
    out[rows[fire], runner_up[fire]] += mu[fire]
    return out
