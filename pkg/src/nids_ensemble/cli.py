"""Command-line interface: analyze, train, evaluate, predict.

Every run writes a machine-readable manifest (seed, config hash, input file
hashes, versions) next to its outputs; runs with equal manifests produce
byte-identical reports. Exit codes: 0 success, 2 usage, 3 data error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, unsw
from .artifact import (
    BAGGING_KEY,
    BOOSTER_KEY,
    DEFAULT_SEED,
    FOREST_KEY,
    FORMAT_VERSION,
    MODEL_KEYS,
    EnsembleConfig,
    evaluate_artifact,
    load_artifact,
    predict_labels,
    save_artifact,
    train_full_ensemble,
)
from .data import (
    CLASS_NAMES,
    FeatureSchema,
    ingest_csv,
    learn_nominal_maps,
    load_feature_list,
    preprocess,
)
from .ensembles import THREADS_ENV_VAR
from .errors import ArtifactError, DataError
from .evaluation import format_metrics_table, report_to_dict
from .imbalance import (
    class_distribution,
    display_proportions,
    imbalance_ratio_matrix,
    imbalance_report,
)

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_IO = 4


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path: Path, payload) -> None:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_matrix_csv(path: Path, matrix: np.ndarray, labels) -> None:
    rows = [[name, *[repr(v) if isinstance(v, float) else int(v) for v in row]]
            for name, row in zip(labels, matrix.tolist())]
    _write_csv(path, ["class", *labels], rows)


def _write_scores_csv(path: Path, scores: np.ndarray, class_names) -> None:
    rows = [[repr(float(v)) for v in row] for row in scores]
    _write_csv(path, list(class_names), rows)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, seed: int | None, options: dict,
                    inputs: dict[str, str]) -> None:
    canonical = json.dumps(options, sort_keys=True, separators=(",", ":"))
    manifest = {
        "command": command,
        "seed": seed,
        "config_hash": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "inputs": {name: _sha256(Path(p)) for name, p in inputs.items()},
        "package_version": __version__,
        "artifact_format_version": FORMAT_VERSION,
    }
    _write_json(out_dir / "manifest.json", manifest)


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _load_schema(path: str | None) -> FeatureSchema:
    if path is None:
        return unsw.official_schema()
    try:
        return FeatureSchema.from_file(path)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _resolve_config(args) -> EnsembleConfig:
    payload: dict = {}
    if getattr(args, "config", None):
        _require_files(args.config)
        try:
            payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.config}: invalid JSON: {exc}") from None
        if not isinstance(payload, dict):
            raise DataError(f"{args.config}: config must be a JSON object")
    for key in ("wide_features_file", "narrow_features_file"):
        file_path = payload.pop(key, None)
        if file_path:
            _require_files(file_path)
            payload[key.replace("_file", "")] = list(load_feature_list(file_path))
    if getattr(args, "seed", None) is not None:
        payload["seed"] = args.seed
    try:
        return EnsembleConfig.from_dict(payload)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid configuration: {exc}") from None


def _cmd_analyze(args) -> int:
    _require_files(args.data, args.schema)
    out_dir = Path(args.out)
    schema = _load_schema(args.schema)
    raw = ingest_csv(args.data, schema)
    schema = learn_nominal_maps(raw, schema)
    matrix = preprocess(raw, schema)
    dist = class_distribution(matrix.labels, len(CLASS_NAMES))
    shown = display_proportions(dist)
    _write_csv(
        out_dir / "class_distribution.csv",
        ["class", "count", "proportion", "display_proportion"],
        [
            [name, int(count), repr(float(prop)), repr(float(disp))]
            for name, count, prop, disp in zip(
                CLASS_NAMES, dist.counts, dist.proportions, shown
            )
        ],
    )
    flagged = {}
    for mode, filename in (
        ("rounded-distribution", "imbalance_ratio_rounded.csv"),
        ("raw-count", "imbalance_ratio_raw.csv"),
    ):
        ir = imbalance_ratio_matrix(dist, mode)
        _write_matrix_csv(out_dir / filename, ir.values.astype(float), CLASS_NAMES)
        flagged[mode] = [
            {"class_a": CLASS_NAMES[i], "class_b": CLASS_NAMES[j], "ratio": ratio}
            for i, j, ratio in imbalance_report(ir, args.threshold)
        ]
    _write_json(out_dir / "flagged_pairs.json", flagged)
    _write_manifest(
        out_dir,
        "analyze",
        None,
        {"threshold": args.threshold, "schema": _sha256(Path(args.schema)) if args.schema else "builtin"},
        {"data": args.data},
    )
    print(f"analyze: wrote reports to {out_dir}")
    return 0


def _cmd_train(args) -> int:
    _require_files(args.data, args.schema)
    out_dir = Path(args.out)
    config = _resolve_config(args)
    schema = _load_schema(args.schema)
    raw = ingest_csv(args.data, schema)
    schema = learn_nominal_maps(raw, schema)
    matrix = preprocess(raw, schema)
    result = train_full_ensemble(matrix, config, CLASS_NAMES, schema)
    artifact_path = Path(args.artifact) if args.artifact else out_dir / "ensemble.json.gz"
    artifact_path.parent.mkdir(parents=True, exist_ok=True)
    save_artifact(result.artifact, artifact_path)
    log = {
        "train_class_counts": dict(
            zip(CLASS_NAMES, [int(c) for c in result.train_class_counts])
        ),
        "validation_class_counts": dict(
            zip(CLASS_NAMES, [int(c) for c in result.validation_class_counts])
        ),
        "validation_confusion": {
            key: [[int(v) for v in row] for row in cm]
            for key, cm in sorted(result.validation_confusion.items())
        },
        "config": config.to_dict(),
    }
    _write_json(out_dir / "train_log.json", log)
    _write_manifest(out_dir, "train", config.seed, config.to_dict(), {"data": args.data})
    print(f"train: wrote artifact to {artifact_path}")
    return 0


def _evaluation_outputs(out_dir: Path, result, class_names, binary_only: bool) -> None:
    if not binary_only:
        _write_matrix_csv(out_dir / "multiclass_confusion.csv", result.multiclass_cm, class_names)
        _write_json(
            out_dir / "multiclass_metrics.json", report_to_dict(result.multiclass_report)
        )
        _write_text(
            out_dir / "multiclass_metrics.txt",
            format_metrics_table(result.multiclass_report) + "\n",
        )
    if result.binary_cm is not None:
        _write_matrix_csv(out_dir / "binary_confusion.csv", result.binary_cm, ["Normal", "Attack"])
        _write_json(out_dir / "binary_metrics.json", report_to_dict(result.binary_report))
        _write_text(
            out_dir / "binary_metrics.txt",
            format_metrics_table(result.binary_report) + "\n",
        )


def _cmd_evaluate(args) -> int:
    _require_files(args.artifact, args.test)
    out_dir = Path(args.out)
    artifact = load_artifact(args.artifact)
    if artifact.schema is None:
        raise DataError("artifact carries no schema; evaluate needs one")
    raw = ingest_csv(args.test, artifact.schema)
    matrix = preprocess(raw, artifact.schema, artifact.class_names)
    result = evaluate_artifact(
        artifact,
        matrix,
        correction=not args.no_correction,
        vote=args.vote,
        include_scores=args.dump_scores,
    )
    _evaluation_outputs(out_dir, result, artifact.class_names, args.binary)
    _write_csv(
        out_dir / "predictions.csv",
        ["row", "predicted_class"],
        [[i, artifact.class_names[c]] for i, c in enumerate(result.predictions)],
    )
    if args.dump_scores:
        for key in MODEL_KEYS:
            _write_scores_csv(
                out_dir / f"scores_{key}.csv", result.raw_scores[key], artifact.class_names
            )
        for key in (BAGGING_KEY, BOOSTER_KEY):
            _write_scores_csv(
                out_dir / f"scores_{key}_corrected.csv",
                result.corrected_scores[key],
                artifact.class_names,
            )
    options = {
        "correction": not args.no_correction,
        "vote": args.vote,
        "binary": args.binary,
        "dump_scores": args.dump_scores,
    }
    _write_manifest(
        out_dir,
        "evaluate",
        artifact.config.seed,
        {**options, "config": artifact.config.to_dict()},
        {"test": args.test, "artifact": args.artifact},
    )
    print(f"evaluate: wrote reports to {out_dir}")
    return 0


def _cmd_predict(args) -> int:
    _require_files(args.artifact, args.data)
    out_dir = Path(args.out)
    artifact = load_artifact(args.artifact)
    if artifact.schema is None:
        raise DataError("artifact carries no schema; predict needs one")
    raw = ingest_csv(args.data, artifact.schema, missing_target_ok=True)
    matrix = preprocess(raw, artifact.schema, artifact.class_names)
    pred, _, _ = predict_labels(
        artifact, matrix, correction=not args.no_correction, vote=args.vote
    )
    _write_csv(
        out_dir / "predictions.csv",
        ["row", "predicted_class"],
        [[i, artifact.class_names[c]] for i, c in enumerate(pred)],
    )
    options = {"correction": not args.no_correction, "vote": args.vote}
    _write_manifest(
        out_dir,
        "predict",
        artifact.config.seed,
        {**options, "config": artifact.config.to_dict()},
        {"data": args.data, "artifact": args.artifact},
    )
    print(f"predict: wrote predictions to {out_dir / 'predictions.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nids-ensemble",
        description=(
            "Overlap-aware tree ensemble for UNSW-NB15-style flow records. "
            f"Set {THREADS_ENV_VAR} to change the worker thread count."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="class distribution and imbalance ratios")
    analyze.add_argument("--data", required=True, help="input CSV")
    analyze.add_argument("--schema", help="schema file (default: bundled UNSW-NB15 layout)")
    analyze.add_argument("--out", required=True, help="output directory")
    analyze.add_argument("--threshold", type=float, default=1.5,
                         help="imbalance-ratio flagging threshold (default 1.5)")
    analyze.set_defaults(func=_cmd_analyze)

    train = sub.add_parser("train", help="fit the full ensemble and save an artifact")
    train.add_argument("--data", required=True, help="training CSV")
    train.add_argument("--schema", help="schema file (default: bundled UNSW-NB15 layout)")
    train.add_argument("--config", help="JSON config file with hyperparameters")
    train.add_argument("--seed", type=int, default=None,
                       help=f"seed override (default {DEFAULT_SEED})")
    train.add_argument("--artifact", help="artifact path (default <out>/ensemble.json.gz)")
    train.add_argument("--out", required=True, help="output directory")
    train.set_defaults(func=_cmd_train)

    evaluate = sub.add_parser("evaluate", help="score a labeled test CSV")
    evaluate.add_argument("--artifact", required=True)
    evaluate.add_argument("--test", required=True, help="test CSV")
    evaluate.add_argument("--out", required=True, help="output directory")
    evaluate.add_argument("--no-correction", action="store_true",
                          help="skip the overlap score correction")
    evaluate.add_argument("--binary", action="store_true",
                          help="write only the collapsed Normal-vs-Attack report")
    evaluate.add_argument("--dump-scores", action="store_true",
                          help="also write per-model score matrices as CSV")
    evaluate.add_argument("--vote", choices=("sum", "hard"), default="sum")
    evaluate.set_defaults(func=_cmd_evaluate)

    predict = sub.add_parser("predict", help="write predicted labels for a CSV")
    predict.add_argument("--artifact", required=True)
    predict.add_argument("--data", required=True, help="input CSV (target column optional)")
    predict.add_argument("--out", required=True, help="output directory")
    predict.add_argument("--no-correction", action="store_true")
    predict.add_argument("--vote", choices=("sum", "hard"), default="sum")
    predict.set_defaults(func=_cmd_predict)
    return parser


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (DataError, ArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
