"""ROC/AUC with midrank tie handling and DeLong's paired-AUC test.

The AUC estimator is the Mann-Whitney statistic computed from midranks
in O(n log n). ``delong_paired_test`` compares two score vectors
evaluated on the same observations: it estimates the 2x2 covariance of
the paired AUC estimators from per-observation structural components
and tests the AUC difference against a normal null. This is the
decision statistic of the conditional independence test: two equally
informative models should produce statistically indistinguishable AUCs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

ALTERNATIVES = ("two-sided", "greater", "less")


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the midpoint of their rank run."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    z = x[order]
    n = len(z)
    starts = np.flatnonzero(np.r_[True, z[1:] != z[:-1]])
    run_lengths = np.diff(np.r_[starts, n])
    mid = starts + 0.5 * (run_lengths - 1) + 1.0
    out = np.empty(n)
    out[order] = np.repeat(mid, run_lengths)
    return out


def _check_scores_labels(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite score")
    if labels.min() == labels.max():
        raise ValueError("degenerate labels")
    return scores, labels.astype(bool)


def auc_midrank(scores, labels) -> float:
    """Mann-Whitney AUC: (concordant + 0.5 * tied pairs) / (n_pos * n_neg)."""
    scores, pos = _check_scores_labels(scores, labels)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    ranks = midranks(scores)
    return (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class RocComparison:
    auc_a: float
    auc_b: float
    variance_of_difference: float
    z_statistic: float
    p_value: float
    n_pos: int
    n_neg: int
    degenerate: bool = False


def _structural_components(scores: np.ndarray, pos: np.ndarray):
    """Per-observation components whose means equal the AUC."""
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    tz = midranks(scores)
    tx = midranks(scores[pos])
    ty = midranks(scores[~pos])
    v01 = (tz[pos] - tx) / n_neg
    v10 = 1.0 - (tz[~pos] - ty) / n_pos
    return v01, v10


def delong_paired_test(scores_a, scores_b, labels, alternative: str = "two-sided") -> RocComparison:
    """DeLong's test for the difference of two correlated AUCs.

    Covariances use the (n_pos - 1)/(n_neg - 1) denominators; the default
    alternative is two-sided. A zero-variance difference is flagged as
    degenerate and maps to p = 1 when the AUCs agree, else p = 0.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    scores_a, pos = _check_scores_labels(scores_a, labels)
    scores_b, _ = _check_scores_labels(scores_b, labels)
    if scores_a.shape != scores_b.shape:
        raise ValueError("scores_a and scores_b must have equal length")
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos

    va_01, va_10 = _structural_components(scores_a, pos)
    vb_01, vb_10 = _structural_components(scores_b, pos)
    auc_a = float(va_01.mean())
    auc_b = float(vb_01.mean())

    if n_pos >= 2 and n_neg >= 2:
        s01 = np.cov(np.vstack([va_01, vb_01]), ddof=1)
        s10 = np.cov(np.vstack([va_10, vb_10]), ddof=1)
        s = s01 / n_pos + s10 / n_neg
        var = float(s[0, 0] + s[1, 1] - 2.0 * s[0, 1])
    else:
        var = 0.0
    var = max(var, 0.0)

    delta = auc_a - auc_b
    if var <= 0.0:
        if delta == 0.0:
            z, p = 0.0, 1.0
        else:
            z = np.inf if delta > 0 else -np.inf
            p = 0.0 if alternative == "two-sided" else (0.0 if (delta > 0) == (alternative == "greater") else 1.0)
        return RocComparison(auc_a, auc_b, 0.0, float(z), p, n_pos, n_neg, degenerate=True)

    z = delta / np.sqrt(var)
    if alternative == "two-sided":
        p = 2.0 * float(ndtr(-abs(z)))
    elif alternative == "greater":
        p = float(ndtr(-z))
    else:
        p = float(ndtr(z))
    return RocComparison(auc_a, auc_b, var, float(z), min(p, 1.0), n_pos, n_neg)
