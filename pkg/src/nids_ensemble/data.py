"""CSV ingestion, schema handling, encoding, scaling, splitting and feature subsets.

The pipeline is deliberately CSV-in / arrays-out: a FeatureSchema describes
every column of the source file, preprocessing turns the parsed table into a
numeric SampleMatrix, and everything downstream works on plain float64 arrays
plus integer class labels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    FeatureMismatch,
    MalformedRow,
    MissingColumn,
    UnknownClassName,
    UnknownFeature,
)

COLUMN_KINDS = ("numeric", "nominal", "identifier", "target-category", "target-label")

# Canonical class order. Every k x n and k x k array in the package indexes
# classes in this order.
CLASS_NAMES = (
    "Analysis",
    "Backdoor",
    "DoS",
    "Exploits",
    "Fuzzers",
    "Generic",
    "Normal",
    "Recon",
    "Shellcode",
    "Worms",
)
NORMAL_INDEX = CLASS_NAMES.index("Normal")

# Spellings that appear in the published CSV files.
CLASS_ALIASES = {
    "Reconnaissance": "Recon",
    "Backdoors": "Backdoor",
}


def class_index(name: str, class_names: Sequence[str] = CLASS_NAMES) -> int:
    """Map a class name (dataset spelling allowed) to its canonical index."""
    key = name.strip()
    key = CLASS_ALIASES.get(key, key)
    try:
        return list(class_names).index(key)
    except ValueError:
        raise UnknownClassName(f"unknown class name {name!r}") from None


@dataclass(frozen=True)
class FeatureSchema:
    """Column layout of a source CSV plus learned nominal encodings.

    ``columns`` lists every column as (name, kind). Nominal columns carry a
    category -> integer code table in ``nominal_maps``; codes are contiguous
    from 1 and code 0 is reserved for categories unseen during training.
    """

    columns: tuple[tuple[str, str], ...]
    nominal_maps: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names in schema")
        for name, kind in self.columns:
            if kind not in COLUMN_KINDS:
                raise ValueError(f"unknown column kind {kind!r} for column {name!r}")
        n_cat = sum(1 for _, kind in self.columns if kind == "target-category")
        if n_cat != 1:
            raise ValueError("schema must declare exactly one target-category column")
        n_lab = sum(1 for _, kind in self.columns if kind == "target-label")
        if n_lab > 1:
            raise ValueError("schema may declare at most one target-label column")
        kinds = dict(self.columns)
        for col, mapping in self.nominal_maps.items():
            if kinds.get(col) != "nominal":
                raise ValueError(f"nominal map given for non-nominal column {col!r}")
            codes = sorted(mapping.values())
            if codes != list(range(1, len(codes) + 1)):
                raise ValueError(f"nominal codes for {col!r} must be contiguous from 1")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)

    def kind(self, name: str) -> str:
        for col, kind in self.columns:
            if col == name:
                return kind
        raise KeyError(name)

    @property
    def feature_names(self) -> tuple[str, ...]:
        """Columns that survive preprocessing: everything but identifiers and targets."""
        return tuple(
            name
            for name, kind in self.columns
            if kind in ("numeric", "nominal")
        )

    @property
    def nominal_features(self) -> tuple[str, ...]:
        return tuple(name for name, kind in self.columns if kind == "nominal")

    @property
    def target_column(self) -> str:
        for name, kind in self.columns:
            if kind == "target-category":
                return name
        raise AssertionError("unreachable: schema validated")

    @property
    def label_column(self) -> str | None:
        for name, kind in self.columns:
            if kind == "target-label":
                return name
        return None

    @classmethod
    def from_text(cls, text: str) -> "FeatureSchema":
        """Parse the plain-text schema format: one ``<column> <kind>`` per line.

        Blank lines and ``#`` comments are ignored.
        """
        columns = []
        for lineno, raw_line in enumerate(text.splitlines(), start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"schema line {lineno}: expected '<column> <kind>'")
            columns.append((parts[0], parts[1]))
        return cls(tuple(columns))

    @classmethod
    def from_file(cls, path) -> "FeatureSchema":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass
class RawTable:
    """Columnar view of one parsed CSV.

    Numeric columns are float64 arrays; all other kinds stay as text lists.
    Target columns may be absent when ingested with ``missing_target_ok``.
    """

    schema: FeatureSchema
    columns: dict[str, "np.ndarray | list[str]"]
    n_rows: int


def ingest_csv(path, schema: FeatureSchema, missing_target_ok: bool = False) -> RawTable:
    """Parse a CSV file against a schema.

    The header must contain exactly the schema's column names, in any order.
    Numeric cells are parsed eagerly so malformed rows are reported with
    their data-row number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [cell.strip() for cell in next(reader)]
        except StopIteration:
            raise EmptyInput(f"{path}: file is empty") from None
        expected = schema.names
        optional = set()
        if missing_target_ok:
            optional = {schema.target_column}
            if schema.label_column:
                optional.add(schema.label_column)
        missing = [c for c in expected if c not in header and c not in optional]
        extra = [c for c in header if c not in expected]
        if missing or extra:
            parts = []
            if missing:
                parts.append("missing columns: " + ", ".join(missing))
            if extra:
                parts.append("unexpected columns: " + ", ".join(extra))
            raise MissingColumn(f"{path}: " + "; ".join(parts))

        live = [
            (name, header.index(name), schema.kind(name) == "numeric")
            for name in expected
            if name in header
        ]
        store: dict[str, list] = {name: [] for name, _, _ in live}
        width = len(header)
        n_rows = 0
        for row in reader:
            n_rows += 1
            if len(row) != width:
                raise MalformedRow(
                    f"{path}: data row {n_rows}: expected {width} cells, found {len(row)}"
                )
            for name, pos, is_numeric in live:
                cell = row[pos]
                if is_numeric:
                    try:
                        store[name].append(float(cell))
                    except ValueError:
                        raise MalformedRow(
                            f"{path}: data row {n_rows}: column {name!r}: "
                            f"cannot parse {cell!r} as a number"
                        ) from None
                else:
                    store[name].append(cell)
        if n_rows == 0:
            raise EmptyInput(f"{path}: no data rows")

    columns: dict[str, "np.ndarray | list[str]"] = {}
    for name, _, is_numeric in live:
        if is_numeric:
            arr = np.asarray(store[name], dtype=np.float64)
            if not np.isfinite(arr).all():
                bad = int(np.flatnonzero(~np.isfinite(arr))[0]) + 1
                raise MalformedRow(
                    f"{path}: data row {bad}: column {name!r}: non-finite value"
                )
            columns[name] = arr
        else:
            columns[name] = store[name]
    return RawTable(schema, columns, n_rows)


def learn_nominal_maps(raw: RawTable, schema: FeatureSchema) -> FeatureSchema:
    """Assign integer codes to every nominal column from training data.

    Codes follow sorted category text, starting at 1; code 0 stays reserved
    for categories never seen during training.
    """
    maps = dict(schema.nominal_maps)
    for col in schema.nominal_features:
        categories = sorted({cell.strip() for cell in raw.columns[col]})
        maps[col] = {cat: code for code, cat in enumerate(categories, start=1)}
    return replace(schema, nominal_maps=maps)


@dataclass
class SampleMatrix:
    """Numeric feature matrix with integer class labels.

    ``values`` is (n, d) float64 with no non-finite entries; ``labels`` holds
    class indices. n may be zero only for the degenerate validation split of
    a 100% training fraction.
    """

    values: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        self.feature_names = tuple(self.feature_names)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-d array")
        if self.values.shape[1] != len(self.feature_names) or self.values.shape[1] < 1:
            raise ValueError("feature_names must name every column")
        if self.labels.shape != (self.values.shape[0],):
            raise ValueError("labels must align with rows")
        if self.values.size and not np.isfinite(self.values).all():
            raise ValueError("non-finite feature values")
        if self.labels.size and int(self.labels.min()) < 0:
            raise ValueError("negative class label")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def take(self, rows) -> "SampleMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return SampleMatrix(self.values[rows], self.labels[rows], self.feature_names)


def preprocess(
    raw: RawTable,
    schema: FeatureSchema,
    class_names: Sequence[str] = CLASS_NAMES,
) -> SampleMatrix:
    """Drop identifier columns, encode nominals, and map class names to indices.

    Nominal columns require fitted maps (see learn_nominal_maps); categories
    absent from a map encode as 0. If the target column was allowed to be
    missing at ingest, labels come back as zeros.
    """
    features = schema.feature_names
    if not features:
        raise ValueError("schema has no feature columns")
    for col in schema.nominal_features:
        if col not in schema.nominal_maps:
            raise ValueError(
                f"no nominal map for column {col!r}; fit one with learn_nominal_maps"
            )

    values = np.empty((raw.n_rows, len(features)), dtype=np.float64)
    for j, name in enumerate(features):
        if schema.kind(name) == "numeric":
            values[:, j] = raw.columns[name]
        else:
            mapping = schema.nominal_maps[name]
            values[:, j] = [mapping.get(cell.strip(), 0) for cell in raw.columns[name]]

    target = schema.target_column
    if target in raw.columns:
        labels = np.empty(raw.n_rows, dtype=np.int64)
        for i, cell in enumerate(raw.columns[target]):
            try:
                labels[i] = class_index(cell, class_names)
            except UnknownClassName:
                raise UnknownClassName(
                    f"data row {i + 1}: unknown class name {cell!r}"
                ) from None
    else:
        labels = np.zeros(raw.n_rows, dtype=np.int64)
    return SampleMatrix(values, labels, features)


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature minimum and maximum learned from training data."""

    feature_names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray


def fit_minmax(train: SampleMatrix) -> ScalerParams:
    if train.n < 1:
        raise ValueError("cannot fit a scaler on an empty matrix")
    return ScalerParams(
        train.feature_names,
        train.values.min(axis=0),
        train.values.max(axis=0),
    )


def apply_minmax(params: ScalerParams, m: SampleMatrix) -> SampleMatrix:
    """Scale each feature to (x - min) / (max - min).

    Constant training columns map to all zeros; out-of-range values are not
    clipped, so test data may land outside [0, 1].
    """
    if set(m.feature_names) != set(params.feature_names):
        raise FeatureMismatch(
            "matrix features differ from the scaler's feature set"
        )
    pos = {name: i for i, name in enumerate(params.feature_names)}
    order = [pos[name] for name in m.feature_names]
    mins = params.mins[order]
    span = params.maxs[order] - mins
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (m.values - mins) / safe, 0.0)
    return SampleMatrix(scaled, m.labels, m.feature_names)


def stratified_split(
    m: SampleMatrix, train_fraction: float, seed: int
) -> tuple[SampleMatrix, SampleMatrix]:
    """Split rows into train/validation parts preserving class proportions.

    The validation part receives round(n * (1 - train_fraction)) rows in
    total, apportioned per class by largest remainder so every class holds
    close to its own (1 - train_fraction) share; rows are chosen by seeded
    uniform sampling without replacement. Deterministic for a fixed seed.
    """
    if not (0.0 < train_fraction <= 1.0):
        raise ValueError("train_fraction must lie in (0, 1]")
    if m.n == 0:
        raise ValueError("cannot split an empty matrix")
    hold = 1.0 - train_fraction
    rng = np.random.default_rng(seed)
    classes, class_counts = np.unique(m.labels, return_counts=True)

    total_quota = int(round(m.n * hold))
    quotas = []
    fracs = []
    for n_c in class_counts:
        exact = float(n_c) * hold
        base = min(int(math.floor(exact + 1e-9)), int(n_c))
        quotas.append(base)
        fracs.append(exact - base)
    short = total_quota - sum(quotas)
    if short > 0:
        order = sorted(range(len(classes)), key=lambda i: (-fracs[i], classes[i]))
        for i in order:
            if short == 0:
                break
            if quotas[i] < class_counts[i]:
                quotas[i] += 1
                short -= 1
    elif short < 0:
        order = sorted(range(len(classes)), key=lambda i: (fracs[i], classes[i]))
        for i in order:
            if short == 0:
                break
            if quotas[i] > 0:
                quotas[i] -= 1
                short += 1

    picks = []
    for c, quota in zip(classes, quotas):
        if quota == 0:
            continue
        rows_c = np.flatnonzero(m.labels == c)
        picks.append(np.sort(rng.choice(rows_c, size=quota, replace=False)))
    if picks:
        val_rows = np.sort(np.concatenate(picks))
    else:
        val_rows = np.empty(0, dtype=np.int64)
    mask = np.zeros(m.n, dtype=bool)
    mask[val_rows] = True
    return m.take(np.flatnonzero(~mask)), m.take(val_rows)


def apply_feature_subset(m: SampleMatrix, subset: Sequence[str]) -> SampleMatrix:
    """Project and reorder columns to the given feature names."""
    subset = tuple(subset)
    if not subset:
        raise ValueError("empty feature subset")
    if len(set(subset)) != len(subset):
        raise ValueError("duplicate names in feature subset")
    pos = {name: i for i, name in enumerate(m.feature_names)}
    try:
        idx = [pos[name] for name in subset]
    except KeyError as exc:
        raise UnknownFeature(f"feature {exc.args[0]!r} not present") from None
    return SampleMatrix(m.values[:, idx], m.labels, subset)


def sfs_forward_select(
    evaluator: Callable[[SampleMatrix], float],
    m: SampleMatrix,
    max_k: int,
) -> tuple[str, ...]:
    """Greedy forward feature selection.

    At each step the feature whose addition maximizes ``evaluator`` on the
    projected matrix is kept; up to ``max_k`` features are grown and the
    prefix with the best score seen is returned. Ties go to the earlier
    feature / the shorter prefix, so the result is deterministic whenever the
    evaluator is.
    """
    if not (1 <= max_k <= m.d):
        raise ValueError("max_k must lie in [1, feature count]")
    selected: list[str] = []
    remaining = list(m.feature_names)
    best_score = -math.inf
    best_prefix: tuple[str, ...] = ()
    while remaining and len(selected) < max_k:
        step_score = -math.inf
        step_name = None
        for name in remaining:
            score = evaluator(apply_feature_subset(m, tuple(selected) + (name,)))
            if score > step_score:
                step_score = score
                step_name = name
        selected.append(step_name)
        remaining.remove(step_name)
        if step_score > best_score:
            best_score = step_score
            best_prefix = tuple(selected)
    return best_prefix


def load_feature_list(path) -> tuple[str, ...]:
    """Read a newline-separated feature name list (# comments allowed)."""
    names = []
    for raw_line in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if line:
            names.append(line)
    return tuple(names)
