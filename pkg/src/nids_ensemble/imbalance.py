"""Class-imbalance profiling: distribution and pairwise imbalance-ratio matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import EmptyInput, ZeroClass

IRMode = Literal["raw-count", "rounded-distribution"]
IR_MODES = ("raw-count", "rounded-distribution")


@dataclass(frozen=True)
class ClassDistribution:
    """Per-class record counts with derived proportions."""

    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "counts", np.ascontiguousarray(self.counts, dtype=np.int64)
        )
        if self.counts.ndim != 1 or self.counts.size == 0:
            raise ValueError("counts must be a non-empty 1-d array")
        if int(self.counts.min()) < 0:
            raise ValueError("negative class count")
        if int(self.counts.sum()) == 0:
            raise EmptyInput("all class counts are zero")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def n_classes(self) -> int:
        return self.counts.size


def class_distribution(labels, n_classes: int) -> ClassDistribution:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyInput("no labels")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("label outside [0, n_classes)")
    return ClassDistribution(np.bincount(labels, minlength=n_classes))


def display_proportions(dist: ClassDistribution) -> np.ndarray:
    """Proportions rounded to printing precision: 2 decimals, widened by two
    decimals at a time while the rounded value would collapse to zero."""
    out = np.zeros(dist.n_classes)
    for i, p in enumerate(dist.proportions):
        if p == 0.0:
            continue
        for decimals in (2, 4, 6, 8, 10, 12):
            r = round(float(p), decimals)
            if r != 0.0:
                out[i] = r
                break
        else:
            out[i] = float(p)
    return out


@dataclass(frozen=True)
class IRMatrix:
    """Directional imbalance ratios: values[i, j] = share_i / share_j."""

    values: np.ndarray
    mode: str

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.ascontiguousarray(self.values, dtype=np.float64)
        )
        if self.mode not in IR_MODES:
            raise ValueError(f"unknown IR mode {self.mode!r}")
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("IR matrix must be square")

    @property
    def n_classes(self) -> int:
        return self.values.shape[0]


def imbalance_ratio_matrix(dist: ClassDistribution, mode: IRMode = "raw-count") -> IRMatrix:
    """Pairwise class ratio matrix.

    raw-count mode divides exact record counts. rounded-distribution mode
    first rounds proportions to printing precision and then divides, which
    reproduces published two-decimal tables.
    """
    if mode not in IR_MODES:
        raise ValueError(f"unknown IR mode {mode!r}")
    if int(dist.counts.min()) == 0:
        raise ZeroClass("every class needs at least one record")
    if mode == "raw-count":
        shares = dist.counts.astype(np.float64)
    else:
        shares = display_proportions(dist)
    values = shares[:, None] / shares[None, :]
    np.fill_diagonal(values, 1.0)
    return IRMatrix(values, mode)


def pair_imbalance(ir: IRMatrix, i: int, j: int) -> float:
    """Imbalance ratio of the unordered pair: majority share over minority share."""
    return float(max(ir.values[i, j], ir.values[j, i]))


def imbalance_report(ir: IRMatrix, threshold: float = 1.5) -> list[tuple[int, int, float]]:
    """Class pairs whose imbalance ratio strictly exceeds the threshold.

    Returns (i, j, ratio) with i < j, sorted by descending ratio.
    """
    flagged = []
    k = ir.n_classes
    for i in range(k):
        for j in range(i + 1, k):
            ratio = pair_imbalance(ir, i, j)
            if ratio > threshold:
                flagged.append((i, j, ratio))
    flagged.sort(key=lambda item: (-item[2], item[0], item[1]))
    return flagged
