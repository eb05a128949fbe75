"""Normalized Hilbert-Schmidt independence criterion and threshold clustering.

Dependence between two (possibly multivariate) variables is measured
with the biased Gaussian-kernel HSIC estimator, normalized so that a
variable has dependence 1 with itself. Variables whose pairwise value
meets a threshold are clustered together, one (overlapping) cluster per
seed variable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ._seeds import derive_rng
from ._threads import thread_map
from .dataset import DatasetTable

_SUBSAMPLE_LIMIT = 2000


def median_heuristic(points: np.ndarray, seed: int = 0) -> float:
    """Median pairwise Euclidean distance (1.0 when the median is zero).

    Exact up to 2000 rows; above that the median is taken over a seeded
    subsample of 2000 rows.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if n < 2:
        raise ValueError("need at least 2 points")
    if n > _SUBSAMPLE_LIMIT:
        idx = derive_rng(seed).choice(n, size=_SUBSAMPLE_LIMIT, replace=False)
        points = points[np.sort(idx)]
    sigma = float(np.median(pdist(points)))
    return sigma if sigma > 0.0 else 1.0


def _standardize(A: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance columns; constant columns are dropped."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    mean = A.mean(axis=0)
    std = A.std(axis=0)
    keep = std > 0.0
    if not keep.any():
        raise ValueError("degenerate variable: all columns constant")
    return (A[:, keep] - mean[keep]) / std[keep]


def _centered_gram(A: np.ndarray) -> np.ndarray:
    """Doubly centered Gaussian Gram matrix with median-heuristic bandwidth."""
    sigma = median_heuristic(A)
    d2 = cdist(A, A, metric="sqeuclidean")
    K = np.exp(-d2 / (2.0 * sigma * sigma))
    return K - K.mean(axis=1, keepdims=True) - K.mean(axis=0, keepdims=True) + K.mean()


def normalized_hsic(A: np.ndarray, B: np.ndarray) -> float:
    """HSIC_b(A,B) / sqrt(HSIC_b(A,A) * HSIC_b(B,B)) with Gaussian kernels.

    Columns are standardized internally so heterogeneous units are
    comparable. Near 0 for independent samples, 1 for identical ones.
    """
    A = _standardize(A)
    B = _standardize(B)
    if len(A) != len(B):
        raise ValueError("A and B must have the same number of rows")
    n = len(A)
    if n < 4:
        raise ValueError("need at least 4 rows")
    Kc = _centered_gram(A)
    Lc = _centered_gram(B)
    scale = (n - 1.0) ** 2
    hsic_ab = (Kc * Lc).sum() / scale
    hsic_aa = (Kc * Kc).sum() / scale
    hsic_bb = (Lc * Lc).sum() / scale
    return float(hsic_ab / np.sqrt(hsic_aa * hsic_bb))


@dataclass(frozen=True)
class HsicMatrix:
    group_names: tuple[str, ...]
    values: np.ndarray     # symmetric, unit diagonal
    bandwidths: tuple[float, ...]

    def value(self, a: str, b: str) -> float:
        i, j = self.group_names.index(a), self.group_names.index(b)
        return float(self.values[i, j])


@dataclass(frozen=True)
class ClusterSet:
    threshold: float
    clusters: tuple[tuple[str, ...], ...]


def hsic_matrix(table: DatasetTable, groups: list[str] | None = None,
                threads: int | None = None) -> HsicMatrix:
    """Pairwise normalized HSIC between the groups' column blocks."""
    names = tuple(groups) if groups is not None else table.group_names
    if len(names) < 2:
        raise ValueError("need at least 2 groups")
    blocks = {
        name: _standardize(table.features[:, list(table.group(name).column_indices)])
        for name in names
    }
    g = len(names)
    pairs = [(i, j) for i in range(g) for j in range(i + 1, g)]
    results = thread_map(lambda ij: normalized_hsic(blocks[names[ij[0]]], blocks[names[ij[1]]]),
                         pairs, threads)
    values = np.eye(g)
    for (i, j), v in zip(pairs, results):
        values[i, j] = values[j, i] = v
    bandwidths = tuple(median_heuristic(blocks[name]) for name in names)
    return HsicMatrix(group_names=names, values=values, bandwidths=bandwidths)


def threshold_clusters(matrix: HsicMatrix, tau: float = 0.25) -> ClusterSet:
    """One cluster per group: the group plus all neighbors with HSIC >= tau."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    clusters = []
    for i, name in enumerate(matrix.group_names):
        members = [name] + [
            other for j, other in enumerate(matrix.group_names)
            if j != i and matrix.values[i, j] >= tau
        ]
        clusters.append(tuple(members))
    return ClusterSet(threshold=tau, clusters=tuple(clusters))
