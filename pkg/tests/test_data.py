import numpy as np
import pytest

from conftest import make_matrix
from fixtures_tables import TRAIN_COUNTS
from nids_ensemble import (
    CLASS_NAMES,
    FeatureSchema,
    SampleMatrix,
    apply_feature_subset,
    apply_minmax,
    class_index,
    fit_minmax,
    ingest_csv,
    learn_nominal_maps,
    load_feature_list,
    preprocess,
    sfs_forward_select,
    stratified_split,
    unsw,
)
from nids_ensemble.errors import (
    EmptyInput,
    FeatureMismatch,
    MalformedRow,
    MissingColumn,
    UnknownClassName,
    UnknownFeature,
)

SMALL_SCHEMA_TEXT = """
# comment line
ident identifier
num_a numeric
cat_b nominal
num_c numeric
attack_cat target-category
label target-label
"""


def small_schema() -> FeatureSchema:
    return FeatureSchema.from_text(SMALL_SCHEMA_TEXT)


def write_csv(tmp_path, name, header, rows):
    path = tmp_path / name
    lines = [",".join(header)] + [",".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------- schema


def test_schema_parses_columns_and_kinds():
    schema = small_schema()
    assert schema.names == ("ident", "num_a", "cat_b", "num_c", "attack_cat", "label")
    assert schema.feature_names == ("num_a", "cat_b", "num_c")
    assert schema.nominal_features == ("cat_b",)
    assert schema.target_column == "attack_cat"
    assert schema.label_column == "label"


def test_schema_rejects_duplicates_and_bad_kinds():
    with pytest.raises(ValueError):
        FeatureSchema((("a", "numeric"), ("a", "numeric"), ("t", "target-category")))
    with pytest.raises(ValueError):
        FeatureSchema((("a", "numericish"), ("t", "target-category")))
    with pytest.raises(ValueError):
        FeatureSchema((("a", "numeric"),))  # no target
    with pytest.raises(ValueError):
        FeatureSchema(
            (("a", "numeric"), ("t", "target-category"), ("u", "target-category"))
        )


def test_schema_rejects_non_contiguous_codes():
    cols = (("c", "nominal"), ("t", "target-category"))
    with pytest.raises(ValueError):
        FeatureSchema(cols, {"c": {"x": 0, "y": 1}})
    with pytest.raises(ValueError):
        FeatureSchema(cols, {"c": {"x": 1, "y": 3}})
    FeatureSchema(cols, {"c": {"x": 1, "y": 2}})  # valid


def test_class_index_accepts_dataset_spellings():
    assert class_index("Reconnaissance") == CLASS_NAMES.index("Recon")
    assert class_index(" Fuzzers ") == CLASS_NAMES.index("Fuzzers")
    assert class_index("Backdoors") == CLASS_NAMES.index("Backdoor")
    with pytest.raises(UnknownClassName):
        class_index("NotAClass")


# ---------------------------------------------------------------- ingest


def test_ingest_counts_records_and_reorders_header(tmp_path):
    # header deliberately permuted relative to the schema
    path = write_csv(
        tmp_path,
        "ok.csv",
        ["label", "num_c", "ident", "attack_cat", "cat_b", "num_a"],
        [[0, 2.5, "r1", "Normal", "tcp", 1.0], [1, 3.5, "r2", "DoS", "udp", 2.0]],
    )
    raw = ingest_csv(path, small_schema())
    assert raw.n_rows == 2
    assert list(raw.columns["num_a"]) == [1.0, 2.0]
    assert raw.columns["cat_b"] == ["tcp", "udp"]


def test_ingest_missing_and_extra_columns(tmp_path):
    path = write_csv(tmp_path, "m.csv", ["num_a", "cat_b"], [[1.0, "x"]])
    with pytest.raises(MissingColumn):
        ingest_csv(path, small_schema())
    path = write_csv(
        tmp_path,
        "e.csv",
        ["ident", "num_a", "cat_b", "num_c", "attack_cat", "label", "bogus"],
        [["r", 1.0, "x", 2.0, "Normal", 0, 9]],
    )
    with pytest.raises(MissingColumn):
        ingest_csv(path, small_schema())


def test_ingest_empty_inputs(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(EmptyInput):
        ingest_csv(empty, small_schema())
    header_only = write_csv(
        tmp_path, "h.csv", ["ident", "num_a", "cat_b", "num_c", "attack_cat", "label"], []
    )
    with pytest.raises(EmptyInput):
        ingest_csv(header_only, small_schema())


def test_ingest_malformed_rows_carry_row_numbers(tmp_path):
    header = ["ident", "num_a", "cat_b", "num_c", "attack_cat", "label"]
    short = write_csv(
        tmp_path, "s.csv", header, [["r", 1.0, "x", 2.0, "Normal", 0], ["r", 1.0, "x"]]
    )
    with pytest.raises(MalformedRow, match="row 2"):
        ingest_csv(short, small_schema())
    bad_num = write_csv(tmp_path, "b.csv", header, [["r", "oops", "x", 2.0, "Normal", 0]])
    with pytest.raises(MalformedRow, match="num_a"):
        ingest_csv(bad_num, small_schema())
    non_finite = write_csv(tmp_path, "n.csv", header, [["r", "nan", "x", 2.0, "Normal", 0]])
    with pytest.raises(MalformedRow, match="non-finite"):
        ingest_csv(non_finite, small_schema())


# ---------------------------------------------------------------- preprocess


def ingested(tmp_path, rows):
    header = ["ident", "num_a", "cat_b", "num_c", "attack_cat", "label"]
    path = write_csv(tmp_path, "data.csv", header, rows)
    schema = small_schema()
    raw = ingest_csv(path, schema)
    return raw, learn_nominal_maps(raw, schema)


def test_preprocess_drops_identifiers_and_encodes(tmp_path):
    raw, schema = ingested(
        tmp_path,
        [["r1", 1.0, "udp", 5.0, "Normal", 0], ["r2", 2.0, "tcp", 6.0, "DoS", 1]],
    )
    m = preprocess(raw, schema)
    assert m.feature_names == ("num_a", "cat_b", "num_c")
    # sorted category text: tcp -> 1, udp -> 2
    assert m.values[:, 1].tolist() == [2.0, 1.0]
    assert m.labels.tolist() == [CLASS_NAMES.index("Normal"), CLASS_NAMES.index("DoS")]


def test_preprocess_unseen_category_encodes_zero(tmp_path):
    raw, schema = ingested(tmp_path, [["r1", 1.0, "tcp", 5.0, "Normal", 0]])
    other = write_csv(
        tmp_path,
        "other.csv",
        ["ident", "num_a", "cat_b", "num_c", "attack_cat", "label"],
        [["r", 1.0, "sctp", 5.0, "Normal", 0]],
    )
    m = preprocess(ingest_csv(other, schema), schema)
    assert m.values[0, 1] == 0.0


def test_preprocess_unknown_class(tmp_path):
    raw, schema = ingested(tmp_path, [["r1", 1.0, "tcp", 5.0, "Martian", 0]])
    with pytest.raises(UnknownClassName):
        preprocess(raw, schema)


def test_preprocess_requires_nominal_maps(tmp_path):
    header = ["ident", "num_a", "cat_b", "num_c", "attack_cat", "label"]
    path = write_csv(tmp_path, "d.csv", header, [["r", 1.0, "x", 2.0, "Normal", 0]])
    raw = ingest_csv(path, small_schema())
    with pytest.raises(ValueError, match="nominal map"):
        preprocess(raw, small_schema())


def test_official_layout_yields_42_features(tmp_path):
    schema = unsw.official_schema()
    assert len(schema.feature_names) == 42
    header = list(schema.names)
    row = []
    for name in header:
        kind = schema.kind(name)
        if kind == "identifier":
            row.append("1")
        elif kind == "nominal":
            row.append("tcp")
        elif kind == "target-category":
            row.append("Reconnaissance")
        elif kind == "target-label":
            row.append("1")
        else:
            row.append("0.5")
    path = write_csv(tmp_path, "official.csv", header, [row])
    raw = ingest_csv(path, schema)
    m = preprocess(raw, learn_nominal_maps(raw, schema))
    assert m.d == 42
    assert m.labels[0] == CLASS_NAMES.index("Recon")
    assert apply_feature_subset(m, unsw.wide_feature_list()).d == 24
    assert apply_feature_subset(m, unsw.narrow_feature_list()).d == 8


def test_preprocess_then_full_subset_is_identity(tmp_path):
    raw, schema = ingested(
        tmp_path,
        [["r1", 1.0, "udp", 5.0, "Normal", 0], ["r2", 2.0, "tcp", 6.0, "DoS", 1]],
    )
    m = preprocess(raw, schema)
    again = apply_feature_subset(m, m.feature_names)
    assert np.array_equal(again.values, m.values)
    assert again.feature_names == m.feature_names


# ---------------------------------------------------------------- scaling


def test_minmax_basic_column():
    m = make_matrix([[2.0], [4.0], [6.0]], [0, 0, 0])
    scaled = apply_minmax(fit_minmax(m), m)
    assert scaled.values[:, 0].tolist() == [0.0, 0.5, 1.0]


def test_minmax_constant_column_maps_to_zero():
    m = make_matrix([[5.0], [5.0], [5.0]], [0, 0, 0])
    scaled = apply_minmax(fit_minmax(m), m)
    assert scaled.values[:, 0].tolist() == [0.0, 0.0, 0.0]


def test_minmax_out_of_range_test_value():
    train = make_matrix([[0.0], [10.0]], [0, 0])
    params = fit_minmax(train)
    test = make_matrix([[12.0]], [0])
    # direct formula: (12 - 0) / (10 - 0)
    assert apply_minmax(params, test).values[0, 0] == pytest.approx(1.2, abs=1e-12)


def test_minmax_training_columns_land_in_unit_interval():
    rng = np.random.default_rng(5)
    m = make_matrix(rng.normal(size=(50, 6)) * 40 - 3, rng.integers(0, 3, 50))
    scaled = apply_minmax(fit_minmax(m), m)
    assert np.all(scaled.values.min(axis=0) > -1e-12)
    assert np.allclose(scaled.values.min(axis=0), 0, atol=1e-12)
    assert np.allclose(scaled.values.max(axis=0), 1, atol=1e-12)


def test_minmax_aligns_columns_by_name_and_rejects_mismatch():
    train = make_matrix([[0.0, 10.0], [10.0, 20.0]], [0, 0], ("a", "b"))
    params = fit_minmax(train)
    flipped = make_matrix([[15.0, 5.0]], [0], ("b", "a"))
    scaled = apply_minmax(params, flipped)
    assert scaled.values[0].tolist() == [0.5, 0.5]
    with pytest.raises(FeatureMismatch):
        apply_minmax(params, make_matrix([[1.0]], [0], ("c",)))


# ---------------------------------------------------------------- split


def published_training_matrix():
    labels = np.concatenate(
        [
            np.full(TRAIN_COUNTS[name], CLASS_NAMES.index(name), dtype=np.int64)
            for name in CLASS_NAMES
        ]
    )
    return make_matrix(np.arange(labels.size, dtype=np.float64), labels)


def test_split_published_counts_give_expected_validation_total():
    m = published_training_matrix()
    train, validation = stratified_split(m, 0.8, 42)
    assert validation.n == 35068
    assert train.n + validation.n == m.n


def test_split_minority_class_rounding():
    m = published_training_matrix()
    worms = CLASS_NAMES.index("Worms")
    train, validation = stratified_split(m, 0.8, 42)
    assert int((validation.labels == worms).sum()) == 26
    assert int((train.labels == worms).sum()) == 104


def test_split_fraction_one_keeps_everything():
    m = make_matrix(np.arange(10.0), [0, 1] * 5)
    train, validation = stratified_split(m, 1.0, 0)
    assert validation.n == 0
    assert train.n == 10


def test_split_is_deterministic_and_partitions_rows():
    rng = np.random.default_rng(3)
    m = make_matrix(rng.normal(size=(200, 2)), rng.integers(0, 4, 200))
    a_train, a_val = stratified_split(m, 0.75, 9)
    b_train, b_val = stratified_split(m, 0.75, 9)
    assert np.array_equal(a_train.values, b_train.values)
    assert np.array_equal(a_val.values, b_val.values)
    merged = np.sort(np.concatenate([a_train.values[:, 0], a_val.values[:, 0]]))
    assert np.array_equal(merged, np.sort(m.values[:, 0]))


def test_split_share_error_bounded_per_class():
    rng = np.random.default_rng(8)
    labels = rng.integers(0, 5, 1000)
    m = make_matrix(rng.normal(size=(1000, 2)), labels)
    for fraction in (0.8, 0.6, 0.9):
        _, validation = stratified_split(m, fraction, 1)
        for c in range(5):
            n_c = int((labels == c).sum())
            share = int((validation.labels == c).sum()) / n_c
            assert abs(share - (1 - fraction)) <= 1 / n_c + 1e-12


# ---------------------------------------------------------------- subsets


def test_subset_projects_and_reorders():
    m = make_matrix([[1.0, 2.0, 3.0]], [0], ("a", "b", "c"))
    out = apply_feature_subset(m, ("c", "a"))
    assert out.values[0].tolist() == [3.0, 1.0]
    assert out.feature_names == ("c", "a")


def test_subset_errors():
    m = make_matrix([[1.0, 2.0]], [0], ("a", "b"))
    with pytest.raises(UnknownFeature):
        apply_feature_subset(m, ("a", "bogus"))
    with pytest.raises(ValueError):
        apply_feature_subset(m, ())
    with pytest.raises(ValueError):
        apply_feature_subset(m, ("a", "a"))


def test_bundled_feature_lists_cover_the_official_schema(tmp_path):
    schema = unsw.official_schema()
    wide = unsw.wide_feature_list()
    narrow = unsw.narrow_feature_list()
    assert len(wide) == 24
    assert len(narrow) == 8
    assert set(narrow) <= set(wide)
    assert set(wide) <= set(schema.feature_names)
    listing = tmp_path / "subset.txt"
    listing.write_text("# two names\na\n\nb\n", encoding="utf-8")
    assert load_feature_list(listing) == ("a", "b")


# ---------------------------------------------------------------- forward selection


def test_sfs_single_step_picks_best_standalone_feature():
    m = make_matrix(np.zeros((4, 3)), [0, 0, 1, 1], ("a", "b", "c"))
    table = {("a",): 0.2, ("b",): 0.9, ("c",): 0.5}
    result = sfs_forward_select(lambda sub: table[sub.feature_names], m, max_k=1)
    assert result == ("b",)


def test_sfs_returns_best_prefix_and_unique_names():
    m = make_matrix(np.zeros((4, 3)), [0, 0, 1, 1], ("a", "b", "c"))
    scores = {
        ("b",): 0.6, ("a",): 0.5, ("c",): 0.1,
        ("b", "a"): 0.8, ("b", "c"): 0.7,
        ("b", "a", "c"): 0.75,
    }
    result = sfs_forward_select(lambda sub: scores[sub.feature_names], m, max_k=3)
    assert result == ("b", "a")  # the three-feature prefix scored worse
    assert len(set(result)) == len(result)


def test_sfs_finds_the_informative_feature():
    rng = np.random.default_rng(21)
    values = rng.normal(size=(300, 5))
    labels = (values[:, 3] > 0).astype(np.int64)
    m = make_matrix(values, labels)

    from nids_ensemble import make_forest_evaluator
    from nids_ensemble.tree import TreeParams

    evaluator = make_forest_evaluator(
        2, n_trees=5, params=TreeParams(max_depth=4), seed=13
    )
    result = sfs_forward_select(evaluator, m, max_k=1)
    assert result == ("f3",)


def test_sfs_validates_max_k():
    m = make_matrix(np.zeros((2, 2)), [0, 1])
    with pytest.raises(ValueError):
        sfs_forward_select(lambda s: 0.0, m, max_k=0)
    with pytest.raises(ValueError):
        sfs_forward_select(lambda s: 0.0, m, max_k=3)
