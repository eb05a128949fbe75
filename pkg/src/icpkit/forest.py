"""From-scratch random-forest probability classifier.

Binary classification trees split on Gini impurity with candidate
thresholds at midpoints between consecutive distinct feature values;
ties break deterministically towards the lowest feature index, then the
lowest threshold. Balanced class weighting gives each class a total
sample weight of n/2. Per-tree randomness is derived from the config
seed by a counter-based split, so training is reproducible and
schedule-independent; the hot loops are numba-compiled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._seeds import check_seed, derive_states


def gini_impurity(weighted_counts) -> float:
    """Gini impurity 1 - p0^2 - p1^2 of a weighted two-class node."""
    w0, w1 = float(weighted_counts[0]), float(weighted_counts[1])
    if w0 < 0 or w1 < 0:
        raise ValueError("weighted counts must be non-negative")
    total = w0 + w1
    if total <= 0:
        raise ValueError("zero total weight")
    p0, p1 = w0 / total, w1 / total
    return 1.0 - p0 * p0 - p1 * p1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 10
    min_samples_split: int = 2
    features_per_split: int | str = "sqrt"  # "sqrt" -> ceil(sqrt(d)), "all", or an int
    bootstrap: bool = True
    balanced: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        check_seed(self.seed)

    def resolve_features_per_split(self, d: int) -> int:
        if d == 0:
            return 0
        rule = self.features_per_split
        if rule == "sqrt":
            return math.ceil(math.sqrt(d))
        if rule == "all":
            return d
        k = int(rule)
        if k < 1:
            raise ValueError("features_per_split must be >= 1")
        return min(k, d)


@njit(cache=True, nogil=True, inline="always")
def _splitmix64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _fit_forest_kernel(X, y, w, seeds, max_depth, min_split, k_feats, bootstrap, cap,
                       feature, threshold, left, right, prob, counts):
    n, d = X.shape
    n_trees = seeds.shape[0]
    order = np.empty(n, dtype=np.int64)
    part = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    feat_buf = np.empty(d, dtype=np.int64)
    stack = np.empty((cap, 4), dtype=np.int64)
    for t in range(n_trees):
        base = t * cap
        boot_state = seeds[t, 0]
        node_state = seeds[t, 1]
        if bootstrap:
            for i in range(n):
                boot_state, r = _splitmix64(boot_state)
                order[i] = np.int64(r % np.uint64(n))
        else:
            for i in range(n):
                order[i] = i
        n_nodes = 1
        stack[0, 0] = 0; stack[0, 1] = n; stack[0, 2] = 0; stack[0, 3] = 0
        top = 1
        while top > 0:
            top -= 1
            start, end, depth, node = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
            w0 = 0.0
            w1 = 0.0
            for i in range(start, end):
                if y[order[i]] == 1:
                    w1 += w[order[i]]
                else:
                    w0 += w[order[i]]
            wt = w0 + w1
            feature[base + node] = -1
            prob[base + node] = w1 / wt
            if depth >= max_depth or w0 == 0.0 or w1 == 0.0 or (end - start) < min_split:
                continue
            # draw k candidate features without replacement, then visit them
            # in ascending index order so equal-gain ties resolve low-first
            for j in range(d):
                feat_buf[j] = j
            for j in range(k_feats):
                node_state, r = _splitmix64(node_state)
                pick = j + np.int64(r % np.uint64(d - j))
                tmp = feat_buf[j]; feat_buf[j] = feat_buf[pick]; feat_buf[pick] = tmp
            for a in range(1, k_feats):
                key = feat_buf[a]
                b = a - 1
                while b >= 0 and feat_buf[b] > key:
                    feat_buf[b + 1] = feat_buf[b]
                    b -= 1
                feat_buf[b + 1] = key
            imp_parent = (1.0 - (w0 * w0 + w1 * w1) / (wt * wt)) * wt
            best_dec = 0.0
            best_f = -1
            best_thr = 0.0
            m = end - start
            for fj in range(k_feats):
                f = feat_buf[fj]
                for i in range(m):
                    vals[i] = X[order[start + i], f]
                srt = np.argsort(vals[:m], kind="mergesort")
                lw0 = 0.0
                lw1 = 0.0
                for ii in range(m - 1):
                    oi = order[start + srt[ii]]
                    if y[oi] == 1:
                        lw1 += w[oi]
                    else:
                        lw0 += w[oi]
                    v_cur = vals[srt[ii]]
                    v_nxt = vals[srt[ii + 1]]
                    if v_nxt <= v_cur:
                        continue
                    rw0 = w0 - lw0
                    rw1 = w1 - lw1
                    lwt = lw0 + lw1
                    rwt = rw0 + rw1
                    imp = (1.0 - (lw0 * lw0 + lw1 * lw1) / (lwt * lwt)) * lwt \
                        + (1.0 - (rw0 * rw0 + rw1 * rw1) / (rwt * rwt)) * rwt
                    dec = imp_parent - imp
                    if dec > best_dec:
                        thr = 0.5 * (v_cur + v_nxt)
                        if thr >= v_nxt:  # adjacent floats: keep the split non-empty
                            thr = v_cur
                        best_dec = dec
                        best_f = f
                        best_thr = thr
            if best_f < 0:
                continue
            nl = 0
            for i in range(start, end):
                if X[order[i], best_f] <= best_thr:
                    part[nl] = order[i]
                    nl += 1
            nr = nl
            for i in range(start, end):
                if X[order[i], best_f] > best_thr:
                    part[nr] = order[i]
                    nr += 1
            for i in range(m):
                order[start + i] = part[i]
            feature[base + node] = best_f
            threshold[base + node] = best_thr
            left[base + node] = n_nodes
            right[base + node] = n_nodes + 1
            stack[top, 0] = start; stack[top, 1] = start + nl; stack[top, 2] = depth + 1; stack[top, 3] = n_nodes
            top += 1
            stack[top, 0] = start + nl; stack[top, 1] = end; stack[top, 2] = depth + 1; stack[top, 3] = n_nodes + 1
            top += 1
            n_nodes += 2
        counts[t] = n_nodes
    return 0


@njit(cache=True, nogil=True)
def _predict_kernel(feature, threshold, left, right, prob, offsets, X, out):
    n_trees = offsets.shape[0] - 1
    for i in range(X.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = base
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            acc += prob[node]
        out[i] = acc / n_trees
    return 0


@dataclass(frozen=True)
class ForestModel:
    """A fitted forest: flat node arrays, one slice per tree via `offsets`."""

    n_features: int
    config: ForestConfig
    feature: np.ndarray    # int32, -1 marks a leaf
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32, tree-local child index
    right: np.ndarray
    prob: np.ndarray       # float64, weighted positive-class probability at leaves
    offsets: np.ndarray    # int64, len n_trees + 1

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    def tree_depth(self, t: int) -> int:
        base, stop = self.offsets[t], self.offsets[t + 1]
        depth = np.zeros(stop - base, dtype=np.int64)
        for node in range(stop - base):
            if self.feature[base + node] >= 0:
                depth[self.left[base + node]] = depth[node] + 1
                depth[self.right[base + node]] = depth[node] + 1
        return int(depth.max())

    def validate(self) -> None:
        for t in range(self.n_trees):
            if self.tree_depth(t) > self.config.max_depth:
                raise AssertionError("tree exceeds max_depth")
        internal = self.feature >= 0
        if internal.any() and self.feature[internal].max() >= self.n_features:
            raise AssertionError("feature index out of range")
        leaves = ~internal
        if ((self.prob[leaves] < 0) | (self.prob[leaves] > 1)).any():
            raise AssertionError("leaf probability outside [0, 1]")

    def to_json(self) -> str:
        """Debug dump of the trees as nested records (not a stable format)."""
        def node_dict(base: int, node: int):
            if self.feature[base + node] < 0:
                return {"leaf": True, "prob": float(self.prob[base + node])}
            return {
                "leaf": False,
                "feature": int(self.feature[base + node]),
                "threshold": float(self.threshold[base + node]),
                "left": node_dict(base, int(self.left[base + node])),
                "right": node_dict(base, int(self.right[base + node])),
            }

        trees = [node_dict(int(self.offsets[t]), 0) for t in range(self.n_trees)]
        return json.dumps({"n_features": self.n_features, "trees": trees}, sort_keys=True)


def _class_weights(y: np.ndarray, balanced: bool) -> np.ndarray:
    n = len(y)
    if not balanced:
        return np.ones(n)
    n1 = int(y.sum())
    n0 = n - n1
    w = np.empty(n)
    w[y == 0] = n / (2.0 * n0)
    w[y == 1] = n / (2.0 * n1)
    return w


def fit_forest(X: np.ndarray, y: np.ndarray, config: ForestConfig | None = None) -> ForestModel:
    """Fit the forest; deterministic for a fixed config seed.

    d = 0 is allowed and yields a single-leaf model predicting the
    weighted class prior (exactly 0.5 under balanced weighting).
    """
    if config is None:
        config = ForestConfig()
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    y = np.asarray(y)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    y = np.ascontiguousarray(y.astype(np.int8))
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 samples")
    if y.min() == y.max():
        raise ValueError("degenerate labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature value")

    w = _class_weights(y, config.balanced)
    if d == 0:
        # single leaf on the full sample; balanced class sums are n/2 each
        prior = 0.5 if config.balanced else float(y.mean())
        return ForestModel(
            n_features=0,
            config=config,
            feature=np.array([-1], dtype=np.int32),
            threshold=np.zeros(1),
            left=np.array([-1], dtype=np.int32),
            right=np.array([-1], dtype=np.int32),
            prob=np.array([prior]),
            offsets=np.array([0, 1], dtype=np.int64),
        )

    k = config.resolve_features_per_split(d)
    cap = min(2 * n + 1, 2 ** (min(config.max_depth, 60) + 1) - 1)
    n_trees = config.n_trees
    seeds = derive_states(config.seed, 2 * n_trees).reshape(n_trees, 2)
    feature = np.empty(n_trees * cap, dtype=np.int32)
    threshold = np.zeros(n_trees * cap)
    left = np.zeros(n_trees * cap, dtype=np.int32)
    right = np.zeros(n_trees * cap, dtype=np.int32)
    prob = np.zeros(n_trees * cap)
    counts = np.zeros(n_trees, dtype=np.int64)
    _fit_forest_kernel(
        X, y, w, seeds, config.max_depth, config.min_samples_split, k,
        config.bootstrap, cap, feature, threshold, left, right, prob, counts,
    )
    keep = np.concatenate([np.arange(t * cap, t * cap + counts[t]) for t in range(n_trees)])
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return ForestModel(
        n_features=d,
        config=config,
        feature=feature[keep],
        threshold=threshold[keep],
        left=left[keep],
        right=right[keep],
        prob=prob[keep],
        offsets=offsets,
    )


def predict_proba(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Positive-class probability per row: the mean of per-tree leaf probabilities."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature columns, got {X.shape}")
    out = np.empty(X.shape[0])
    _predict_kernel(model.feature, model.threshold, model.left, model.right,
                    model.prob, model.offsets, X, out)
    return out
