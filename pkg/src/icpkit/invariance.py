"""The invariant-target-prediction conditional independence test.

To test Y independent of E given X_S, two forests are fitted per
cross-validation fold — one on the selected groups, one on the groups
plus the environment columns — and their pooled out-of-fold scores are
compared with the paired DeLong test. Folds are built at event level so
no event leaks across a fold's train/test boundary, either by random
assignment or by k-means on event coordinates (spatial generalization).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._seeds import derive_rng, derive_seed
from ._threads import thread_map
from .dataset import DatasetTable, select_columns
from .forest import ForestConfig, fit_forest, predict_proba
from .roctest import auc_midrank, delong_paired_test

EVENT_SCHEME = "event-random"
SPATIAL_SCHEME = "spatial-kmeans"


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray  # k x 2
    labels: np.ndarray     # per-point cluster index
    inertia: float


@dataclass(frozen=True)
class FoldAssignment:
    scheme: str
    k: int
    event_to_fold: Mapping[str, int]
    seed: int

    def row_folds(self, table: DatasetTable) -> np.ndarray:
        try:
            return np.array([self.event_to_fold[e] for e in table.event_ids], dtype=np.int64)
        except KeyError as err:
            raise ValueError(f"event {err.args[0]!r} has no fold assignment") from None


@dataclass(frozen=True)
class CITestResult:
    subset: frozenset[str]
    p_value: float
    auc_without_env: float
    auc_with_env: float
    z_statistic: float
    n_oof: int


def _check_fold_classes(table: DatasetTable, event_to_fold: Mapping[str, int], k: int) -> None:
    folds = np.array([event_to_fold[e] for e in table.event_ids])
    for f in range(k):
        test_labels = table.target[folds == f]
        if len(test_labels) == 0 or test_labels.min() == test_labels.max():
            raise ValueError(f"degenerate fold {f}: test split lacks both classes")


def event_folds(table: DatasetTable, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Shuffle events with the seed and deal them round-robin into k folds."""
    if k < 2:
        raise ValueError("k must be >= 2")
    events = table.events()
    if len(events) < k:
        raise ValueError(f"need at least {k} events, got {len(events)}")
    perm = derive_rng(seed).permutation(len(events))
    assignment = {events[perm[i]]: i % k for i in range(len(events))}
    _check_fold_classes(table, assignment, k)
    return FoldAssignment(EVENT_SCHEME, k, assignment, seed)


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(m)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[j:] = points[rng.integers(m, size=k - j)]
            break
        probs = d2 / total
        centroids[j] = points[rng.choice(m, p=probs)]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float) -> KMeansResult:
    k = len(centroids)
    prev_inertia = np.inf
    labels = np.zeros(len(points), dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        point_cost = d2[np.arange(len(points)), labels]
        reseeded = False
        for j in range(k):
            if not (labels == j).any():
                far = int(point_cost.argmax())
                centroids[j] = points[far]
                labels[far] = j
                point_cost[far] = 0.0
                reseeded = True
        inertia = float(((points - centroids[labels]) ** 2).sum())
        new_centroids = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centroids[j] = points[members].mean(axis=0)
        if not reseeded:
            assert inertia <= prev_inertia + 1e-9, "Lloyd iteration increased inertia"
        if (not reseeded and prev_inertia - inertia <= tol) or np.array_equal(new_centroids, centroids):
            break
        centroids = new_centroids
        prev_inertia = inertia
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(points)), labels].sum())
    return KMeansResult(centroids, labels, inertia)


def kmeans(points: np.ndarray, k: int, seed: int = 0, restarts: int = 10,
           max_iter: int = 100, tol: float = 1e-9) -> KMeansResult:
    """Lloyd iterations from k-means++ starts; lowest-inertia restart wins."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    if len(points) < k:
        raise ValueError(f"need at least {k} points, got {len(points)}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best: KMeansResult | None = None
    for r in range(restarts):
        rng = derive_rng(seed, r)
        init = _kmeans_plus_plus(points, k, rng)
        result = _lloyd(points, init, max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def spatial_folds(table: DatasetTable, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Folds from k-means clusters of the event coordinates."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if table.event_coords is None:
        raise ValueError("table has no event coordinates; spatial folds unavailable")
    events = table.events()
    coords = np.array([table.event_coords[e] for e in events], dtype=np.float64)
    if len(events) < k:
        raise ValueError(f"need at least {k} events, got {len(events)}")
    if len(np.unique(coords, axis=0)) < k:
        raise ValueError("degenerate geometry: fewer distinct coordinates than folds")
    result = kmeans(coords, k, seed)
    assignment = {e: int(result.labels[i]) for i, e in enumerate(events)}
    for f in range(k):
        if f not in assignment.values():
            raise ValueError(f"degenerate geometry: cluster {f} holds no events")
    _check_fold_classes(table, assignment, k)
    return FoldAssignment(SPATIAL_SCHEME, k, assignment, seed)


def _pooled_scores(table: DatasetTable, X: np.ndarray, row_folds: np.ndarray, k: int,
                   config: ForestConfig, arm: int) -> np.ndarray:
    """Out-of-fold scores for one model arm, pooled over all k folds."""
    scores = np.empty(table.n)
    y = table.target
    for f in range(k):
        test = row_folds == f
        train = ~test
        fold_config = replace(config, seed=derive_seed(config.seed, f, arm))
        model = fit_forest(X[train], y[train], fold_config)
        scores[test] = predict_proba(model, X[test])
    return scores


def ci_test(table: DatasetTable, subset: Iterable[str], folds: FoldAssignment,
            forest_config: ForestConfig | None = None) -> CITestResult:
    """Test Y independent of E given the selected groups; large p = no rejection.

    Both arms share folds and hyperparameters; only the design matrix
    differs (per-fold, per-arm derived seeds). The DeLong comparison runs
    on the pooled out-of-fold score vectors.
    """
    if forest_config is None:
        forest_config = ForestConfig()
    subset = frozenset(subset)
    row_folds = folds.row_folds(table)
    X_plain = select_columns(table, subset, include_environment=False)
    X_env = select_columns(table, subset, include_environment=True)
    scores_plain = _pooled_scores(table, X_plain, row_folds, folds.k, forest_config, arm=0)
    if table.q == 0:
        scores_env = scores_plain  # identical design: reuse rather than refit
    else:
        scores_env = _pooled_scores(table, X_env, row_folds, folds.k, forest_config, arm=1)
    roc = delong_paired_test(scores_plain, scores_env, table.target)
    return CITestResult(
        subset=subset,
        p_value=roc.p_value,
        auc_without_env=roc.auc_a,
        auc_with_env=roc.auc_b,
        z_statistic=roc.z_statistic,
        n_oof=table.n,
    )


@dataclass(frozen=True)
class CurveStep:
    step: int
    excluded: str | None
    mean_auc_event: float
    std_auc_event: float
    mean_auc_spatial: float
    std_auc_spatial: float


def _per_fold_aucs(table: DatasetTable, groups: Sequence[str], folds: FoldAssignment,
                   config: ForestConfig, seed_tag: int) -> np.ndarray:
    X = select_columns(table, groups, include_environment=False)
    row_folds = folds.row_folds(table)
    y = table.target
    aucs = np.empty(folds.k)
    for f in range(folds.k):
        test = row_folds == f
        train = ~test
        fold_config = replace(config, seed=derive_seed(config.seed, seed_tag, f))
        model = fit_forest(X[train], y[train], fold_config)
        aucs[f] = auc_midrank(predict_proba(model, X[test]), y[test])
    return aucs


def generalization_curve(table: DatasetTable, exclusion_order: Sequence[str],
                         forest_config: ForestConfig | None = None, seed: int = 0,
                         k: int = 5, threads: int | None = None) -> list[CurveStep]:
    """Mean/std of per-fold out-of-sample AUC as groups are removed one at a time.

    Environment-free forests are evaluated under both fold schemes at
    every prefix of `exclusion_order` (step 0 = no exclusions), tracing
    how event and spatial generalization react to each removal.
    """
    if forest_config is None:
        forest_config = ForestConfig()
    order = list(exclusion_order)
    if len(set(order)) != len(order):
        raise ValueError("exclusion_order contains duplicates")
    unknown = set(order) - set(table.group_names)
    if unknown:
        raise ValueError(f"unknown group {sorted(unknown)}")
    folds_event = event_folds(table, k, derive_seed(seed, 0))
    folds_spatial = spatial_folds(table, k, derive_seed(seed, 1))

    def one_step(t: int) -> CurveStep:
        remaining = [g for g in table.group_names if g not in set(order[:t])]
        aucs_event = _per_fold_aucs(table, remaining, folds_event, forest_config, seed_tag=2 * t)
        aucs_spatial = _per_fold_aucs(table, remaining, folds_spatial, forest_config, seed_tag=2 * t + 1)
        return CurveStep(
            step=t,
            excluded=order[t - 1] if t > 0 else None,
            mean_auc_event=float(aucs_event.mean()),
            std_auc_event=float(aucs_event.std()),
            mean_auc_spatial=float(aucs_spatial.mean()),
            std_auc_spatial=float(aucs_spatial.std()),
        )

    return thread_map(one_step, range(len(order) + 1), threads)
