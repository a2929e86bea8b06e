"""Overlap-aware tree ensemble classifier for UNSW-NB15-style flow records.

The package wires a CSV-to-report pipeline: schema-driven preprocessing,
imbalance profiling, three tree-based learners (a Hellinger-criterion
forest, balanced bagging, gradient-boosted trees), validation-fitted
class-overlap corrections, a score-sum vote, and metric reports for both the
ten-class and the collapsed Normal-vs-Attack views.
"""

__version__ = "0.1.0"

from .artifact import (
    EnsembleArtifact,
    EnsembleConfig,
    EvaluationResult,
    TrainingResult,
    evaluate_artifact,
    load_artifact,
    predict_labels,
    save_artifact,
    train_full_ensemble,
)
from .data import (
    CLASS_NAMES,
    NORMAL_INDEX,
    FeatureSchema,
    SampleMatrix,
    ScalerParams,
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
)
from .ensembles import (
    BoosterModel,
    ForestModel,
    fit_balanced_bagging,
    fit_gradient_booster,
    fit_random_forest,
    make_forest_evaluator,
    predict_proba,
    softmax,
    softmax_cross_entropy,
    softmax_gradient,
)
from .evaluation import (
    BINARY_CLASS_NAMES,
    ClassMetrics,
    MetricsReport,
    collapse_to_binary,
    compute_metrics,
    format_metrics_table,
    hard_vote,
    sum_vote,
)
from .imbalance import (
    ClassDistribution,
    IRMatrix,
    class_distribution,
    display_proportions,
    imbalance_ratio_matrix,
    imbalance_report,
    pair_imbalance,
)
from .overlap import (
    OverlapModel,
    apply_overlap_correction,
    confusion_matrix,
    fit_overlap_stats,
    identity_overlap_model,
    resolve_range_overlaps,
)
from .tree import (
    TrainedTree,
    TreeParams,
    fit_tree,
    hellinger_split_score,
    impurity_split_score,
    tree_predict_proba,
)
