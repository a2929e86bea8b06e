"""End-to-end training, evaluation, and artifact persistence.

Training follows one pipeline: stratified split, min-max fit on the training
part, wide-subset balanced bagging + booster, narrow-subset Hellinger forest,
then per-model overlap statistics fitted on the validation part and resolved
against each model's validation confusion matrix. Everything is deterministic
for a fixed config seed, and the serialized artifact is byte-stable.
"""

from __future__ import annotations

import gzip
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import unsw
from .data import (
    CLASS_NAMES,
    FeatureSchema,
    SampleMatrix,
    ScalerParams,
    apply_feature_subset,
    apply_minmax,
    fit_minmax,
    stratified_split,
)
from .ensembles import (
    BoosterModel,
    ForestModel,
    RegressionTree,
    fit_balanced_bagging,
    fit_gradient_booster,
    fit_random_forest,
    predict_proba,
)
from .errors import CorruptArtifact, SchemaMismatch, UnsupportedVersion
from .evaluation import (
    BINARY_CLASS_NAMES,
    MetricsReport,
    collapse_to_binary,
    compute_metrics,
    hard_vote,
    sum_vote,
)
from .overlap import (
    OverlapModel,
    apply_overlap_correction,
    confusion_matrix,
    fit_overlap_stats,
    identity_overlap_model,
    resolve_range_overlaps,
)
from .tree import TrainedTree, TreeParams

FORMAT_VERSION = 1
DEFAULT_SEED = 7

BAGGING_KEY = "balanced_bagging"
BOOSTER_KEY = "gradient_booster"
FOREST_KEY = "hellinger_forest"
CORRECTED_KEYS = (BAGGING_KEY, BOOSTER_KEY)
MODEL_KEYS = (BAGGING_KEY, BOOSTER_KEY, FOREST_KEY)


@dataclass(frozen=True)
class EnsembleConfig:
    """Training hyperparameters. Defaults are the documented stand-ins and are
    all overridable from the CLI config file."""

    seed: int = DEFAULT_SEED
    train_fraction: float = 0.8
    rf_trees: int = 100
    rf_feature_subsample: int | None = None  # None -> ceil(sqrt(d)) of the narrow subset
    rf_max_depth: int | None = None
    bb_estimators: int = 50
    bb_sample_target: int | None = None  # None -> minority class count
    bb_max_depth: int | None = None
    booster_rounds: int = 100
    booster_depth: int = 6
    booster_learning_rate: float = 0.3
    booster_l2: float = 1.0
    wide_features: tuple[str, ...] = field(default_factory=unsw.wide_feature_list)
    narrow_features: tuple[str, ...] = field(default_factory=unsw.narrow_feature_list)

    def __post_init__(self):
        object.__setattr__(self, "wide_features", tuple(self.wide_features))
        object.__setattr__(self, "narrow_features", tuple(self.narrow_features))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "rf_trees": self.rf_trees,
            "rf_feature_subsample": self.rf_feature_subsample,
            "rf_max_depth": self.rf_max_depth,
            "bb_estimators": self.bb_estimators,
            "bb_sample_target": self.bb_sample_target,
            "bb_max_depth": self.bb_max_depth,
            "booster_rounds": self.booster_rounds,
            "booster_depth": self.booster_depth,
            "booster_learning_rate": self.booster_learning_rate,
            "booster_l2": self.booster_l2,
            "wide_features": list(self.wide_features),
            "narrow_features": list(self.narrow_features),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EnsembleConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kwargs = dict(payload)
        for key in ("wide_features", "narrow_features"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class EnsembleArtifact:
    """Everything needed to score new data: the three fitted models, their
    overlap corrections, the scaler, the feature routing and the schema."""

    class_names: tuple[str, ...]
    schema: FeatureSchema | None
    scaler: ScalerParams
    wide_features: tuple[str, ...]
    narrow_features: tuple[str, ...]
    bagging: ForestModel
    booster: BoosterModel
    forest: ForestModel
    bagging_overlap: OverlapModel
    booster_overlap: OverlapModel
    config: EnsembleConfig
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if not self.bagging_overlap.resolved or not self.booster_overlap.resolved:
            raise ValueError("overlap models must be resolved")
        if self.schema is not None:
            available = set(self.schema.feature_names)
            for name in (*self.wide_features, *self.narrow_features):
                if name not in available:
                    raise ValueError(f"subset feature {name!r} missing from schema")


@dataclass
class TrainingResult:
    artifact: EnsembleArtifact
    train_class_counts: np.ndarray
    validation_class_counts: np.ndarray
    validation_confusion: dict[str, np.ndarray]


def train_full_ensemble(
    train: SampleMatrix,
    config: EnsembleConfig | None = None,
    class_names=CLASS_NAMES,
    schema: FeatureSchema | None = None,
) -> TrainingResult:
    """Run the full training pipeline on preprocessed training data."""
    config = config or EnsembleConfig()
    class_names = tuple(class_names)
    k = len(class_names)
    if train.n < 1:
        raise ValueError("empty training data")
    if int(train.labels.max()) >= k:
        raise ValueError("label outside the class list")

    seed_seq = np.random.SeedSequence(config.seed).spawn(3)
    split_seed = int(seed_seq[0].generate_state(1)[0])
    bb_seed = int(seed_seq[1].generate_state(1)[0])
    rf_seed = int(seed_seq[2].generate_state(1)[0])

    fit_part, val_part = stratified_split(train, config.train_fraction, split_seed)
    scaler = fit_minmax(fit_part)
    fit_scaled = apply_minmax(scaler, fit_part)

    wide_fit = apply_feature_subset(fit_scaled, config.wide_features)
    narrow_fit = apply_feature_subset(fit_scaled, config.narrow_features)

    bagging = fit_balanced_bagging(
        wide_fit,
        n_estimators=config.bb_estimators,
        params=TreeParams(max_depth=config.bb_max_depth),
        criterion="gini",
        sample_target=config.bb_sample_target,
        n_classes=k,
        seed=bb_seed,
    )
    booster = fit_gradient_booster(
        wide_fit,
        n_rounds=config.booster_rounds,
        depth=config.booster_depth,
        learning_rate=config.booster_learning_rate,
        l2_lambda=config.booster_l2,
        n_classes=k,
    )
    rf_subsample = config.rf_feature_subsample
    if rf_subsample is None:
        rf_subsample = max(1, math.ceil(math.sqrt(len(config.narrow_features))))
    forest = fit_random_forest(
        narrow_fit,
        n_trees=config.rf_trees,
        params=TreeParams(
            max_depth=config.rf_max_depth, feature_subsample=rf_subsample
        ),
        criterion="hellinger",
        n_classes=k,
        seed=rf_seed,
    )

    validation_confusion: dict[str, np.ndarray] = {}
    overlaps: dict[str, OverlapModel] = {}
    if val_part.n > 0:
        val_scaled = apply_minmax(scaler, val_part)
        wide_val = apply_feature_subset(val_scaled, config.wide_features)
        for key, model in ((BAGGING_KEY, bagging), (BOOSTER_KEY, booster)):
            scores = predict_proba(model, wide_val)
            pred = scores.argmax(axis=1)
            cm = confusion_matrix(val_part.labels, pred, k)
            overlaps[key] = resolve_range_overlaps(
                fit_overlap_stats(scores, val_part.labels, pred), cm
            )
            validation_confusion[key] = cm
    else:
        for key in CORRECTED_KEYS:
            overlaps[key] = identity_overlap_model(k)
            validation_confusion[key] = np.zeros((k, k), dtype=np.int64)

    artifact = EnsembleArtifact(
        class_names=class_names,
        schema=schema,
        scaler=scaler,
        wide_features=tuple(config.wide_features),
        narrow_features=tuple(config.narrow_features),
        bagging=bagging,
        booster=booster,
        forest=forest,
        bagging_overlap=overlaps[BAGGING_KEY],
        booster_overlap=overlaps[BOOSTER_KEY],
        config=config,
    )
    return TrainingResult(
        artifact=artifact,
        train_class_counts=np.bincount(fit_part.labels, minlength=k),
        validation_class_counts=np.bincount(val_part.labels, minlength=k),
        validation_confusion=validation_confusion,
    )


@dataclass
class EvaluationResult:
    predictions: np.ndarray
    multiclass_cm: np.ndarray
    multiclass_report: MetricsReport
    binary_cm: np.ndarray | None
    binary_report: MetricsReport | None
    raw_scores: dict[str, np.ndarray] | None = None
    corrected_scores: dict[str, np.ndarray] | None = None


def _model_scores(artifact: EnsembleArtifact, m: SampleMatrix, correction: bool):
    scaled = apply_minmax(artifact.scaler, m)
    wide = apply_feature_subset(scaled, artifact.wide_features)
    narrow = apply_feature_subset(scaled, artifact.narrow_features)
    raw = {
        BAGGING_KEY: predict_proba(artifact.bagging, wide),
        BOOSTER_KEY: predict_proba(artifact.booster, wide),
        FOREST_KEY: predict_proba(artifact.forest, narrow),
    }
    used = dict(raw)
    if correction:
        used[BAGGING_KEY] = apply_overlap_correction(
            raw[BAGGING_KEY], artifact.bagging_overlap
        )
        used[BOOSTER_KEY] = apply_overlap_correction(
            raw[BOOSTER_KEY], artifact.booster_overlap
        )
    return raw, used


def predict_labels(
    artifact: EnsembleArtifact,
    m: SampleMatrix,
    correction: bool = True,
    vote: str = "sum",
) -> tuple[np.ndarray, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Combined prediction; the forest's scores are never modified."""
    if set(m.feature_names) != set(artifact.scaler.feature_names):
        raise SchemaMismatch("input features differ from the artifact's schema")
    if vote not in ("sum", "hard"):
        raise ValueError(f"unknown vote mode {vote!r}")
    raw, used = _model_scores(artifact, m, correction)
    stack = [used[key] for key in MODEL_KEYS]
    pred = sum_vote(stack) if vote == "sum" else hard_vote(stack)
    return pred, raw, used


def evaluate_artifact(
    artifact: EnsembleArtifact,
    test: SampleMatrix,
    correction: bool = True,
    vote: str = "sum",
    include_scores: bool = False,
) -> EvaluationResult:
    """Score a labeled test matrix and report multiclass plus binary metrics."""
    pred, raw, used = predict_labels(artifact, test, correction, vote)
    k = len(artifact.class_names)
    normal_index = (
        artifact.class_names.index("Normal") if "Normal" in artifact.class_names else None
    )
    cm = confusion_matrix(test.labels, pred, k)
    report = compute_metrics(cm, artifact.class_names, normal_index)
    binary_cm = None
    binary_report = None
    if normal_index is not None:
        binary_cm = collapse_to_binary(cm, normal_index)
        binary_report = compute_metrics(binary_cm, BINARY_CLASS_NAMES, 0)
    return EvaluationResult(
        predictions=pred,
        multiclass_cm=cm,
        multiclass_report=report,
        binary_cm=binary_cm,
        binary_report=binary_report,
        raw_scores=raw if include_scores else None,
        corrected_scores=used if include_scores else None,
    )


# ---------------------------------------------------------------------------
# serialization


def _ints(arr) -> list[int]:
    return [int(v) for v in np.asarray(arr).ravel()]


def _floats(arr) -> list[float]:
    return [float(v) for v in np.asarray(arr).ravel()]


def _tree_to_dict(tree: TrainedTree) -> dict:
    leaf_counts = [
        _ints(tree.leaf_counts[i]) if tree.feature[i] < 0 else None
        for i in range(tree.n_nodes)
    ]
    return {
        "feature": _ints(tree.feature),
        "threshold": _floats(tree.threshold),
        "left": _ints(tree.children_left),
        "right": _ints(tree.children_right),
        "leaf_counts": leaf_counts,
    }


def _tree_from_dict(payload: dict, n_features: int, n_classes: int) -> TrainedTree:
    feature = np.asarray(payload["feature"], dtype=np.int32)
    n_nodes = feature.shape[0]
    counts = np.zeros((n_nodes, n_classes), dtype=np.int64)
    for i, row in enumerate(payload["leaf_counts"]):
        if row is not None:
            counts[i] = row
    sums = counts.sum(axis=1, keepdims=True)
    proba = counts / np.where(sums > 0, sums, 1)
    return TrainedTree(
        feature=feature,
        threshold=np.asarray(payload["threshold"], dtype=np.float64),
        children_left=np.asarray(payload["left"], dtype=np.int32),
        children_right=np.asarray(payload["right"], dtype=np.int32),
        leaf_counts=counts,
        proba=proba,
        n_features=n_features,
        n_classes=n_classes,
    )


def _forest_to_dict(model: ForestModel) -> dict:
    return {
        "kind": model.kind,
        "criterion": model.criterion,
        "seed": model.seed,
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "params": {
            "max_depth": model.params.max_depth,
            "min_samples_leaf": model.params.min_samples_leaf,
            "min_samples_split": model.params.min_samples_split,
            "feature_subsample": model.params.feature_subsample,
            "seed": model.params.seed,
        },
        "sample_class_counts": (
            None
            if model.sample_class_counts is None
            else [_ints(row) for row in model.sample_class_counts]
        ),
        "trees": [_tree_to_dict(tree) for tree in model.trees],
    }


def _forest_from_dict(payload: dict) -> ForestModel:
    params = TreeParams(**payload["params"])
    n_features = payload["n_features"]
    n_classes = payload["n_classes"]
    trees = [_tree_from_dict(t, n_features, n_classes) for t in payload["trees"]]
    audit = payload.get("sample_class_counts")
    return ForestModel(
        trees=trees,
        kind=payload["kind"],
        criterion=payload["criterion"],
        params=params,
        n_classes=n_classes,
        n_features=n_features,
        seed=payload["seed"],
        sample_class_counts=None if audit is None else np.asarray(audit, dtype=np.int64),
    )


def _booster_to_dict(model: BoosterModel) -> dict:
    return {
        "learning_rate": model.learning_rate,
        "l2_lambda": model.l2_lambda,
        "base_margin": _floats(model.base_margin),
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "rounds": [
            [
                {
                    "feature": _ints(t.feature),
                    "threshold": _floats(t.threshold),
                    "left": _ints(t.children_left),
                    "right": _ints(t.children_right),
                    "value": _floats(t.value),
                }
                for t in per_class
            ]
            for per_class in model.rounds
        ],
    }


def _booster_from_dict(payload: dict) -> BoosterModel:
    n_features = payload["n_features"]
    rounds = [
        [
            RegressionTree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                children_left=np.asarray(t["left"], dtype=np.int32),
                children_right=np.asarray(t["right"], dtype=np.int32),
                value=np.asarray(t["value"], dtype=np.float64),
                n_features=n_features,
            )
            for t in per_class
        ]
        for per_class in payload["rounds"]
    ]
    return BoosterModel(
        rounds=rounds,
        learning_rate=payload["learning_rate"],
        l2_lambda=payload["l2_lambda"],
        base_margin=np.asarray(payload["base_margin"], dtype=np.float64),
        n_classes=payload["n_classes"],
        n_features=n_features,
    )


def _overlap_to_dict(model: OverlapModel) -> dict:
    return {
        "means": [_floats(row) for row in model.means],
        "stds": [_floats(row) for row in model.stds],
        "resolved": model.resolved,
    }


def _overlap_from_dict(payload: dict) -> OverlapModel:
    return OverlapModel(
        means=np.asarray(payload["means"], dtype=np.float64),
        stds=np.asarray(payload["stds"], dtype=np.float64),
        resolved=payload["resolved"],
    )


def _schema_to_dict(schema: FeatureSchema | None):
    if schema is None:
        return None
    return {
        "columns": [[name, kind] for name, kind in schema.columns],
        "nominal_maps": schema.nominal_maps,
    }


def _schema_from_dict(payload) -> FeatureSchema | None:
    if payload is None:
        return None
    return FeatureSchema(
        columns=tuple((name, kind) for name, kind in payload["columns"]),
        nominal_maps={
            col: {cat: int(code) for cat, code in mapping.items()}
            for col, mapping in payload["nominal_maps"].items()
        },
    )


def artifact_to_dict(artifact: EnsembleArtifact) -> dict:
    return {
        "format_version": artifact.format_version,
        "class_names": list(artifact.class_names),
        "schema": _schema_to_dict(artifact.schema),
        "scaler": {
            "feature_names": list(artifact.scaler.feature_names),
            "mins": _floats(artifact.scaler.mins),
            "maxs": _floats(artifact.scaler.maxs),
        },
        "wide_features": list(artifact.wide_features),
        "narrow_features": list(artifact.narrow_features),
        "models": {
            BAGGING_KEY: _forest_to_dict(artifact.bagging),
            BOOSTER_KEY: _booster_to_dict(artifact.booster),
            FOREST_KEY: _forest_to_dict(artifact.forest),
        },
        "overlap": {
            BAGGING_KEY: _overlap_to_dict(artifact.bagging_overlap),
            BOOSTER_KEY: _overlap_to_dict(artifact.booster_overlap),
        },
        "config": artifact.config.to_dict(),
    }


def artifact_from_dict(payload: dict) -> EnsembleArtifact:
    version = payload.get("format_version")
    if not isinstance(version, int) or version < 1:
        raise CorruptArtifact("missing or invalid format version")
    if version > FORMAT_VERSION:
        raise UnsupportedVersion(
            f"artifact format {version} is newer than supported {FORMAT_VERSION}"
        )
    try:
        scaler = ScalerParams(
            feature_names=tuple(payload["scaler"]["feature_names"]),
            mins=np.asarray(payload["scaler"]["mins"], dtype=np.float64),
            maxs=np.asarray(payload["scaler"]["maxs"], dtype=np.float64),
        )
        return EnsembleArtifact(
            class_names=tuple(payload["class_names"]),
            schema=_schema_from_dict(payload["schema"]),
            scaler=scaler,
            wide_features=tuple(payload["wide_features"]),
            narrow_features=tuple(payload["narrow_features"]),
            bagging=_forest_from_dict(payload["models"][BAGGING_KEY]),
            booster=_booster_from_dict(payload["models"][BOOSTER_KEY]),
            forest=_forest_from_dict(payload["models"][FOREST_KEY]),
            bagging_overlap=_overlap_from_dict(payload["overlap"][BAGGING_KEY]),
            booster_overlap=_overlap_from_dict(payload["overlap"][BOOSTER_KEY]),
            config=EnsembleConfig.from_dict(payload["config"]),
            format_version=version,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptArtifact(f"artifact payload is inconsistent: {exc}") from None


def save_artifact(artifact: EnsembleArtifact, path) -> None:
    """Write the artifact as gzip-compressed JSON.

    The gzip header carries no timestamp or filename, so identical artifacts
    serialize to identical bytes.
    """
    blob = json.dumps(artifact_to_dict(artifact), separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        # empty filename + zero mtime keep the gzip header path-independent
        with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
            gz.write(blob)


def load_artifact(path) -> EnsembleArtifact:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="rb") as gz:
                payload = json.loads(gz.read().decode("utf-8"))
    except (OSError, EOFError, gzip.BadGzipFile, json.JSONDecodeError, UnicodeDecodeError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise CorruptArtifact(f"{path}: cannot read artifact: {exc}") from None
    if not isinstance(payload, dict):
        raise CorruptArtifact(f"{path}: artifact payload is not an object")
    return artifact_from_dict(payload)
