import dataclasses
import gzip
import json

import numpy as np
import pytest

from conftest import make_matrix
from fixtures_tables import CLASS_NAMES, NORMAL_INDEX
from nids_ensemble import (
    EnsembleConfig,
    evaluate_artifact,
    identity_overlap_model,
    load_artifact,
    predict_labels,
    save_artifact,
    train_full_ensemble,
)
from nids_ensemble.artifact import BAGGING_KEY, BOOSTER_KEY, FOREST_KEY, artifact_to_dict
from nids_ensemble.errors import CorruptArtifact, SchemaMismatch, UnsupportedVersion

TINY_CONFIG = dict(
    seed=5,
    rf_trees=8,
    bb_estimators=4,
    booster_rounds=4,
    booster_depth=3,
    wide_features=("f0", "f1", "f2", "f3", "f4", "f5"),
    narrow_features=("f0", "f1", "f2"),
)


def overlap_heavy_matrix(seed, n=1200):
    """Four present classes; class 0 sits inside the Normal cloud with a
    small consistent offset so validation confusion feeds the correction."""
    rng = np.random.default_rng(seed)
    population = [0, 2, 5, NORMAL_INDEX]
    weights = [0.12, 0.18, 0.2, 0.5]
    labels = rng.choice(population, size=n, p=weights)
    values = rng.normal(size=(n, 8))
    values[labels == 0, 0] += 0.9
    values[labels == 2, 1] += 2.8
    values[labels == 5, 2] += 3.5
    return make_matrix(values, labels)


@pytest.fixture(scope="module")
def trained():
    config = EnsembleConfig(**TINY_CONFIG)
    train = overlap_heavy_matrix(1)
    return train_full_ensemble(train, config), config


def test_artifact_structure(trained):
    result, config = trained
    art = result.artifact
    assert art.bagging.kind == "balanced-bagging"
    assert art.forest.criterion == "hellinger"
    assert len(art.booster.rounds) == config.booster_rounds
    assert art.bagging_overlap.resolved and art.booster_overlap.resolved
    assert art.wide_features == config.wide_features
    assert art.narrow_features == config.narrow_features
    assert len(art.scaler.feature_names) == 8
    assert art.format_version == 1
    # validation confusion matrices were produced for both corrected models
    assert set(result.validation_confusion) == {BAGGING_KEY, BOOSTER_KEY}


def test_training_is_fully_deterministic(tmp_path, trained):
    result, config = trained
    again = train_full_ensemble(overlap_heavy_matrix(1), config)
    p1, p2 = tmp_path / "a.gz", tmp_path / "b.gz"
    save_artifact(result.artifact, p1)
    save_artifact(again.artifact, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_roundtrip_predicts_identically(tmp_path, trained):
    result, _ = trained
    path = tmp_path / "model.gz"
    save_artifact(result.artifact, path)
    loaded = load_artifact(path)
    rng = np.random.default_rng(3)
    probe = make_matrix(rng.normal(size=(1000, 8)), np.zeros(1000, dtype=int))
    before, _, before_scores = predict_labels(result.artifact, probe)
    after, _, after_scores = predict_labels(loaded, probe)
    assert np.array_equal(before, after)
    for key in (BAGGING_KEY, BOOSTER_KEY, FOREST_KEY):
        assert np.array_equal(before_scores[key], after_scores[key])


def test_truncated_and_future_version_artifacts(tmp_path, trained):
    result, _ = trained
    path = tmp_path / "model.gz"
    save_artifact(result.artifact, path)
    clipped = tmp_path / "clipped.gz"
    clipped.write_bytes(path.read_bytes()[: path.stat().st_size // 2])
    with pytest.raises(CorruptArtifact):
        load_artifact(clipped)
    not_gzip = tmp_path / "plain.gz"
    not_gzip.write_text("not a gzip artifact", encoding="utf-8")
    with pytest.raises(CorruptArtifact):
        load_artifact(not_gzip)

    payload = artifact_to_dict(result.artifact)
    payload["format_version"] = 99
    bumped = tmp_path / "future.gz"
    with open(bumped, "wb") as fh:
        with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
            gz.write(json.dumps(payload).encode("utf-8"))
    with pytest.raises(UnsupportedVersion):
        load_artifact(bumped)


def test_disabling_correction_equals_identity_overlap_models(trained):
    result, _ = trained
    art = result.artifact
    test = overlap_heavy_matrix(2, n=600)
    plain = evaluate_artifact(art, test, correction=False)
    neutered = dataclasses.replace(
        art,
        bagging_overlap=identity_overlap_model(10),
        booster_overlap=identity_overlap_model(10),
    )
    via_identity = evaluate_artifact(neutered, test, correction=True)
    assert np.array_equal(plain.predictions, via_identity.predictions)
    assert np.array_equal(plain.multiclass_cm, via_identity.multiclass_cm)


def test_correction_changes_only_rows_where_it_fires(trained):
    result, _ = trained
    art = result.artifact
    test = overlap_heavy_matrix(4, n=800)
    corrected = evaluate_artifact(art, test, correction=True, include_scores=True)
    plain = evaluate_artifact(art, test, correction=False)
    fired = np.zeros(test.n, dtype=bool)
    for key in (BAGGING_KEY, BOOSTER_KEY):
        fired |= (
            corrected.corrected_scores[key] != corrected.raw_scores[key]
        ).any(axis=1)
    differing = corrected.predictions != plain.predictions
    assert not differing[~fired].any()


def test_correction_does_not_increase_missed_alarms_on_overlap_fixture(trained):
    result, _ = trained
    art = result.artifact
    test = overlap_heavy_matrix(6, n=1500)
    corrected = evaluate_artifact(art, test, correction=True)
    plain = evaluate_artifact(art, test, correction=False)
    assert corrected.binary_cm[1, 0] <= plain.binary_cm[1, 0]


def test_vote_modes_and_schema_mismatch(trained):
    result, _ = trained
    art = result.artifact
    test = overlap_heavy_matrix(8, n=300)
    sum_eval = evaluate_artifact(art, test, vote="sum")
    hard_eval = evaluate_artifact(art, test, vote="hard")
    assert sum_eval.predictions.shape == hard_eval.predictions.shape
    with pytest.raises(ValueError):
        evaluate_artifact(art, test, vote="median")
    wrong = make_matrix(np.zeros((3, 4)), np.zeros(3, dtype=int))
    with pytest.raises(SchemaMismatch):
        evaluate_artifact(art, wrong)


def test_binary_reports_present_with_normal_class(trained):
    result, _ = trained
    ev = evaluate_artifact(result.artifact, overlap_heavy_matrix(9, n=400))
    assert ev.binary_cm is not None
    assert ev.binary_cm.sum() == 400
    assert ev.binary_report.class_names == ("Normal", "Attack")
    assert ev.multiclass_report.class_names == CLASS_NAMES
