"""Vote combination, binary collapse and confusion-matrix metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import NORMAL_INDEX
from .errors import EmptyMatrix, ShapeMismatch

BINARY_CLASS_NAMES = ("Normal", "Attack")


def _validated_stack(score_matrices) -> list[np.ndarray]:
    mats = [np.asarray(s, dtype=np.float64) for s in score_matrices]
    if not mats:
        raise ShapeMismatch("need at least one score matrix")
    shape = mats[0].shape
    if len(shape) != 2:
        raise ShapeMismatch("score matrices must be 2-d")
    for s in mats[1:]:
        if s.shape != shape:
            raise ShapeMismatch("score matrices disagree in shape")
    return mats


def sum_vote(score_matrices) -> np.ndarray:
    """Per-row argmax of the elementwise sum; ties go to the lower class index."""
    mats = _validated_stack(score_matrices)
    total = mats[0].copy()
    for s in mats[1:]:
        total += s
    return total.argmax(axis=1)


def hard_vote(score_matrices) -> np.ndarray:
    """Majority vote over each matrix's own argmax; ties to the lower class index."""
    mats = _validated_stack(score_matrices)
    n, k = mats[0].shape
    ballots = np.zeros((n, k), dtype=np.int64)
    rows = np.arange(n)
    for s in mats:
        ballots[rows, s.argmax(axis=1)] += 1
    return ballots.argmax(axis=1)


def collapse_to_binary(labels_or_cm, normal_index: int = NORMAL_INDEX):
    """Collapse ten-class labels (1-d) or a confusion matrix (2-d) to
    Normal-vs-Attack; binary index 0 is Normal, 1 is Attack."""
    arr = np.asarray(labels_or_cm)
    if arr.ndim == 1:
        return (arr != normal_index).astype(np.int64)
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        cm = arr.astype(np.int64)
        total = cm.sum()
        normal_row = cm[normal_index].sum()
        normal_col = cm[:, normal_index].sum()
        tn = cm[normal_index, normal_index]
        out = np.empty((2, 2), dtype=np.int64)
        out[0, 0] = tn
        out[0, 1] = normal_row - tn
        out[1, 0] = normal_col - tn
        out[1, 1] = total - normal_row - normal_col + tn
        return out
    raise ValueError("expected a 1-d label array or a square matrix")


@dataclass(frozen=True)
class ClassMetrics:
    accuracy: float
    sensitivity: float
    specificity: float
    fpr: float
    fnr: float
    precision: float
    f_measure: float


@dataclass(frozen=True)
class MetricsReport:
    """One-vs-rest metrics per class plus the overall summary rates.

    All values are fractions in [0, 1]; rendering to percentages happens in
    format_metrics_table. missed_alarm_rate / false_alarm_rate are present
    only when a Normal class index was supplied.
    """

    class_names: tuple[str, ...]
    per_class: tuple[ClassMetrics, ...]
    overall_accuracy: float
    missed_alarm_rate: float | None
    false_alarm_rate: float | None


def _ratio(num: float, den: float) -> float:
    return float(num) / float(den) if den > 0 else 0.0


def compute_metrics(cm, class_names, normal_index: int | None = None) -> MetricsReport:
    """One-vs-rest metric sweep over a confusion matrix.

    Divisions with a zero denominator yield 0 by convention.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    class_names = tuple(class_names)
    if len(class_names) != cm.shape[0]:
        raise ValueError("class names must match the matrix size")
    total = int(cm.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix is empty")

    diag = np.diagonal(cm)
    row_sums = cm.sum(axis=1)
    col_sums = cm.sum(axis=0)
    per_class = []
    for c in range(cm.shape[0]):
        tp = int(diag[c])
        fn = int(row_sums[c]) - tp
        fp = int(col_sums[c]) - tp
        tn = total - tp - fn - fp
        sensitivity = _ratio(tp, tp + fn)
        precision = _ratio(tp, tp + fp)
        per_class.append(
            ClassMetrics(
                accuracy=_ratio(tp + tn, total),
                sensitivity=sensitivity,
                specificity=_ratio(tn, tn + fp),
                fpr=_ratio(fp, fp + tn),
                fnr=_ratio(fn, fn + tp),
                precision=precision,
                f_measure=_ratio(2.0 * precision * sensitivity, precision + sensitivity),
            )
        )

    missed = None
    false = None
    if normal_index is not None:
        attack_total = total - int(row_sums[normal_index])
        attack_as_normal = int(col_sums[normal_index]) - int(cm[normal_index, normal_index])
        missed = _ratio(attack_as_normal, attack_total)
        normal_total = int(row_sums[normal_index])
        false = _ratio(normal_total - int(cm[normal_index, normal_index]), normal_total)
    return MetricsReport(
        class_names,
        tuple(per_class),
        overall_accuracy=_ratio(int(diag.sum()), total),
        missed_alarm_rate=missed,
        false_alarm_rate=false,
    )


def report_to_dict(report: MetricsReport) -> dict:
    """Full-precision representation for JSON output."""
    return {
        "classes": {
            name: {
                "accuracy": m.accuracy,
                "sensitivity": m.sensitivity,
                "specificity": m.specificity,
                "fpr": m.fpr,
                "fnr": m.fnr,
                "precision": m.precision,
                "f_measure": m.f_measure,
            }
            for name, m in zip(report.class_names, report.per_class)
        },
        "overall_accuracy": report.overall_accuracy,
        "missed_alarm_rate": report.missed_alarm_rate,
        "false_alarm_rate": report.false_alarm_rate,
    }


def format_metrics_table(report: MetricsReport) -> str:
    """Human-readable table: percentages at two decimals, rates at three."""
    header = (
        f"{'Class':<16}{'Accuracy':>10}{'Sensitivity':>13}{'Specificity':>13}"
        f"{'FPR':>8}{'FNR':>8}{'Precision':>11}{'F-measure':>11}"
    )
    lines = [header]
    for name, m in zip(report.class_names, report.per_class):
        lines.append(
            f"{name:<16}"
            f"{m.accuracy * 100:>10.2f}"
            f"{m.sensitivity * 100:>13.2f}"
            f"{m.specificity * 100:>13.2f}"
            f"{m.fpr:>8.3f}"
            f"{m.fnr:>8.3f}"
            f"{m.precision * 100:>11.2f}"
            f"{m.f_measure * 100:>11.2f}"
        )
    lines.append(f"Overall accuracy: {report.overall_accuracy * 100:.2f}%")
    if report.missed_alarm_rate is not None:
        lines.append(f"Missed alarm rate: {report.missed_alarm_rate * 100:.2f}%")
    if report.false_alarm_rate is not None:
        lines.append(f"False alarm rate: {report.false_alarm_rate * 100:.2f}%")
    return "\n".join(lines)
