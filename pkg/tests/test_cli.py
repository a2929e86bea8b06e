import csv
import json

import numpy as np
import pytest

from fixtures_tables import ALL_COUNTS, CLASS_NAMES
from nids_ensemble.cli import run_command
from synth import TEST_COUNTS, TRAIN_COUNTS, scaled_counts, write_csv as write_synth_csv


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def read_matrix_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0][1:]
    values = {row[0]: dict(zip(header, row[1:])) for row in rows[1:]}
    return values


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """A small but complete train/evaluate round trip through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    train_csv = write_synth_csv(root / "train.csv", scaled_counts(TRAIN_COUNTS, 0.01), 5)
    test_csv = write_synth_csv(root / "test.csv", scaled_counts(TEST_COUNTS, 0.01), 6)
    config_path = root / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "rf_trees": 10,
                "bb_estimators": 5,
                "booster_rounds": 5,
                "booster_depth": 3,
            }
        ),
        encoding="utf-8",
    )
    out = root / "train_out"
    code = run_command(
        [
            "train",
            "--data", str(train_csv),
            "--config", str(config_path),
            "--seed", "11",
            "--out", str(out),
        ]
    )
    assert code == 0
    return {
        "root": root,
        "train_csv": train_csv,
        "test_csv": test_csv,
        "config": config_path,
        "artifact": out / "ensemble.json.gz",
        "train_out": out,
    }


def test_unknown_subcommand_is_usage_error(capsys):
    assert run_command(["frobnicate"]) == 2
    assert run_command([]) == 2


def test_missing_input_file_is_io_error(tmp_path):
    code = run_command(
        ["analyze", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]
    )
    assert code == 4


def test_bad_class_name_is_data_error(tmp_path):
    counts = scaled_counts(TRAIN_COUNTS, 0.002)
    path = write_synth_csv(tmp_path / "bad.csv", counts, 1)
    text = path.read_text(encoding="utf-8").replace("Normal", "Martian", 1)
    path.write_text(text, encoding="utf-8")
    assert run_command(["analyze", "--data", str(path), "--out", str(tmp_path / "o")]) == 3


def test_analyze_outputs_published_ratio(tmp_path):
    # minimal two-column layout carrying the published class counts
    schema_path = tmp_path / "minimal.schema"
    schema_path.write_text("f1 numeric\nattack_cat target-category\n", encoding="utf-8")
    data_path = tmp_path / "labels.csv"
    with open(data_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("f1,attack_cat\n")
        for name in CLASS_NAMES:
            block = "\n".join(f"0.5,{name}" for _ in range(ALL_COUNTS[name]))
            fh.write(block + "\n")
    out = tmp_path / "analysis"
    code = run_command(
        [
            "analyze",
            "--data", str(data_path),
            "--schema", str(schema_path),
            "--out", str(out),
        ]
    )
    assert code == 0
    rounded = read_matrix_csv(out / "imbalance_ratio_rounded.csv")
    assert float(rounded["Normal"]["Worms"]) == pytest.approx(514.29, abs=0.01)
    raw = read_matrix_csv(out / "imbalance_ratio_raw.csv")
    assert float(raw["Normal"]["Worms"]) == pytest.approx(534.48, abs=0.01)
    flagged = read_json(out / "flagged_pairs.json")
    top = flagged["rounded-distribution"][0]
    assert {top["class_a"], top["class_b"]} == {"Normal", "Worms"}
    dist = read_matrix_csv(out / "class_distribution.csv")  # not a matrix but parsable
    assert (out / "manifest.json").is_file()


def test_train_writes_artifact_log_and_manifest(tiny_run):
    assert tiny_run["artifact"].is_file()
    log = read_json(tiny_run["train_out"] / "train_log.json")
    assert log["config"]["seed"] == 11
    assert sum(log["train_class_counts"].values()) > 0
    manifest = read_json(tiny_run["train_out"] / "manifest.json")
    assert manifest["command"] == "train"
    assert manifest["seed"] == 11
    assert set(manifest["inputs"]) == {"data"}


def test_evaluate_writes_reports(tiny_run):
    out = tiny_run["root"] / "eval_out"
    code = run_command(
        [
            "evaluate",
            "--artifact", str(tiny_run["artifact"]),
            "--test", str(tiny_run["test_csv"]),
            "--out", str(out),
            "--dump-scores",
        ]
    )
    assert code == 0
    metrics = read_json(out / "binary_metrics.json")
    assert 0.0 <= metrics["classes"]["Attack"]["sensitivity"] <= 1.0
    assert (out / "multiclass_confusion.csv").is_file()
    assert (out / "multiclass_metrics.txt").is_file()
    scores = (out / "scores_balanced_bagging.csv").read_text(encoding="utf-8")
    assert scores.splitlines()[0] == ",".join(CLASS_NAMES)
    assert (out / "scores_gradient_booster_corrected.csv").is_file()
    # prediction rows equal test rows
    with open(out / "predictions.csv", newline="", encoding="utf-8") as fh:
        n_rows = sum(1 for _ in fh) - 1
    with open(tiny_run["test_csv"], newline="", encoding="utf-8") as fh:
        n_test = sum(1 for _ in fh) - 1
    assert n_rows == n_test


def test_evaluate_binary_only_flag_and_hard_vote(tiny_run):
    out = tiny_run["root"] / "eval_binary"
    code = run_command(
        [
            "evaluate",
            "--artifact", str(tiny_run["artifact"]),
            "--test", str(tiny_run["test_csv"]),
            "--out", str(out),
            "--binary",
            "--vote", "hard",
        ]
    )
    assert code == 0
    assert (out / "binary_metrics.json").is_file()
    assert not (out / "multiclass_metrics.json").exists()
    manifest = read_json(out / "manifest.json")
    assert manifest["command"] == "evaluate"


def test_correction_flag_changes_only_fired_rows(tiny_run):
    out_on = tiny_run["root"] / "eval_on"
    out_off = tiny_run["root"] / "eval_off"
    for out, extra in ((out_on, ["--dump-scores"]), (out_off, ["--no-correction"])):
        assert (
            run_command(
                [
                    "evaluate",
                    "--artifact", str(tiny_run["artifact"]),
                    "--test", str(tiny_run["test_csv"]),
                    "--out", str(out),
                    *extra,
                ]
            )
            == 0
        )

    def predictions(path):
        with open(path, newline="", encoding="utf-8") as fh:
            return [row[1] for row in csv.reader(fh)][1:]

    pred_on = predictions(out_on / "predictions.csv")
    pred_off = predictions(out_off / "predictions.csv")

    def scores(path):
        with open(path, newline="", encoding="utf-8") as fh:
            return np.array([[float(c) for c in row] for row in list(csv.reader(fh))[1:]])

    fired = np.zeros(len(pred_on), dtype=bool)
    for key in ("balanced_bagging", "gradient_booster"):
        raw = scores(out_on / f"scores_{key}.csv")
        corrected = scores(out_on / f"scores_{key}_corrected.csv")
        fired |= (raw != corrected).any(axis=1)
    differing = np.array([a != b for a, b in zip(pred_on, pred_off)])
    assert not differing[~fired].any()


def test_predict_accepts_unlabeled_csv(tiny_run):
    unlabeled = tiny_run["root"] / "unlabeled.csv"
    with open(tiny_run["test_csv"], newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    drop = [rows[0].index("attack_cat"), rows[0].index("label")]
    keep = [i for i in range(len(rows[0])) if i not in drop]
    with open(unlabeled, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows[:50]:
            writer.writerow([row[i] for i in keep])
    out = tiny_run["root"] / "predict_out"
    code = run_command(
        [
            "predict",
            "--artifact", str(tiny_run["artifact"]),
            "--data", str(unlabeled),
            "--out", str(out),
        ]
    )
    assert code == 0
    with open(out / "predictions.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["row", "predicted_class"]
    assert len(rows) == 50  # header + 49 data rows
    assert all(row[1] in CLASS_NAMES for row in rows[1:])


def test_repeat_runs_are_byte_identical(tiny_run):
    out_a = tiny_run["root"] / "repeat_a"
    out_b = tiny_run["root"] / "repeat_b"
    for out in (out_a, out_b):
        code = run_command(
            [
                "train",
                "--data", str(tiny_run["train_csv"]),
                "--config", str(tiny_run["config"]),
                "--seed", "11",
                "--out", str(out),
            ]
        )
        assert code == 0
    for name in ("ensemble.json.gz", "train_log.json", "manifest.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
