"""Invariant causal prediction toolkit for a binary target.

Library layers: grouped feature tables (`dataset`), a from-scratch
random forest (`forest`), midrank AUC and the paired DeLong test
(`roctest`), the conditional independence test with grouped/spatial
cross-validation (`invariance`), greedy and exhaustive ICP (`icp`),
HSIC variable clustering (`hsic`), and a synthetic SCM benchmark with
independent statistical oracles (`synth`). The `icpkit` command ties
them into reproducible runs.
"""

__version__ = "0.1.0"

from .dataset import (
    AggregationSpec,
    DatasetTable,
    GridObservation,
    VariableGroup,
    aggregate_categorical,
    aggregate_grid,
    load_features_csv,
    select_columns,
    write_features_csv,
)
from .forest import ForestConfig, ForestModel, fit_forest, gini_impurity, predict_proba
from .hsic import ClusterSet, HsicMatrix, hsic_matrix, median_heuristic, normalized_hsic, threshold_clusters
from .icp import (
    GreedyTrace,
    IcpOutcome,
    cluster_icp,
    defining_sets,
    enumerate_subsets,
    exhaustive_icp,
    extract_accepted_at_alpha,
    greedy_icp,
    intersect_accepted,
)
from .invariance import (
    CITestResult,
    FoldAssignment,
    KMeansResult,
    ci_test,
    event_folds,
    generalization_curve,
    kmeans,
    spatial_folds,
)
from .roctest import RocComparison, auc_midrank, delong_paired_test
from .synth import ScmSpec, SynthResult, coverage_experiment, permutation_oracle, sample_scm

__all__ = [name for name in dir() if not name.startswith("_")]
