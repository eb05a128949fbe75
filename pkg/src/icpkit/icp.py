"""ICP estimators: greedy elimination, exhaustive subset search, defining sets.

Greedy backward elimination repeatedly drops the group whose removal
leaves the largest conditional-independence p-value, producing a causal
importance ordering; the full trace always runs down to a single group
so any significance level can be applied afterwards. Exhaustive search
tests every subset above a minimum size and intersects the accepted
ones; when predictors are highly dependent the intersection collapses,
so inclusion-minimal defining sets and cluster-level search over
HSIC-derived variable clusters are provided as fallbacks.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable, MutableMapping, Sequence

from dataclasses import dataclass

from ._threads import thread_map
from .dataset import DatasetTable
from .forest import ForestConfig
from .invariance import CITestResult, FoldAssignment, ci_test


@dataclass(frozen=True)
class GreedyStep:
    removed_group: str
    p_value_of_removal: float
    auc_with_env: float
    auc_without_env: float
    remaining_after: frozenset[str]


@dataclass(frozen=True)
class GreedyTrace:
    initial_groups: tuple[str, ...]
    steps: tuple[GreedyStep, ...]
    final_group: str


@dataclass(frozen=True)
class IcpOutcome:
    alpha: float
    tested: tuple[CITestResult, ...]
    accepted_sets: tuple[frozenset[str], ...]
    intersection: frozenset[str]
    defining: tuple[frozenset[str], ...]
    no_accepted: bool


class _CiCache:
    """Memoizes CI tests by subset fingerprint within one run."""

    def __init__(self, table: DatasetTable, folds: FoldAssignment, config: ForestConfig,
                 store: MutableMapping | None = None):
        self.table = table
        self.folds = folds
        self.config = config
        self.store: MutableMapping = {} if store is None else store

    def __call__(self, subset: Iterable[str]) -> CITestResult:
        key = frozenset(subset)
        result = self.store.get(key)
        if result is None:
            result = ci_test(self.table, key, self.folds, self.config)
            self.store[key] = result
        return result


def greedy_icp(table: DatasetTable, folds: FoldAssignment,
               forest_config: ForestConfig | None = None,
               groups: Sequence[str] | None = None,
               threads: int | None = None) -> GreedyTrace:
    """Backward elimination: drop argmax-p groups until one remains.

    Within a step all candidate removals are tested (in parallel);
    ties in the maximal p-value break towards the lexicographically
    smallest group name.
    """
    if forest_config is None:
        forest_config = ForestConfig()
    names = tuple(sorted(groups)) if groups is not None else tuple(sorted(table.group_names))
    unknown = set(names) - set(table.group_names)
    if unknown:
        raise ValueError(f"unknown group {sorted(unknown)}")
    if len(names) < 2:
        raise ValueError("greedy search needs at least 2 groups")
    run_test = _CiCache(table, folds, forest_config)
    remaining = set(names)
    steps: list[GreedyStep] = []
    while len(remaining) > 1:
        candidates = sorted(remaining)
        results = thread_map(lambda g: run_test(remaining - {g}), candidates, threads)
        best = max(range(len(candidates)), key=lambda i: results[i].p_value)
        removed = candidates[best]
        chosen = results[best]
        remaining = remaining - {removed}
        steps.append(GreedyStep(
            removed_group=removed,
            p_value_of_removal=chosen.p_value,
            auc_with_env=chosen.auc_with_env,
            auc_without_env=chosen.auc_without_env,
            remaining_after=frozenset(remaining),
        ))
    return GreedyTrace(initial_groups=names, steps=tuple(steps), final_group=next(iter(remaining)))


def extract_accepted_at_alpha(trace: GreedyTrace, alpha: float) -> frozenset[str]:
    """Groups surviving when the first p-value below alpha appears.

    With no crossing the sole final group remains; a crossing at the
    very first step keeps the full initial set.
    """
    for i, step in enumerate(trace.steps):
        if step.p_value_of_removal < alpha:
            if i == 0:
                return frozenset(trace.initial_groups)
            return trace.steps[i - 1].remaining_after
    return frozenset({trace.final_group})


def enumerate_subsets(base: Iterable[str], min_size: int) -> list[frozenset[str]]:
    """All subsets of size >= min_size, largest first, lexicographic within size."""
    names = sorted(set(base))
    if not 1 <= min_size <= len(names):
        raise ValueError(f"min_size must be in [1, {len(names)}], got {min_size}")
    out: list[frozenset[str]] = []
    for size in range(len(names), min_size - 1, -1):
        out.extend(frozenset(c) for c in combinations(names, size))
    return out


def intersect_accepted(accepted: Sequence[frozenset[str]]) -> frozenset[str]:
    """The ICP estimate: intersection of all accepted sets (empty when none)."""
    if not accepted:
        return frozenset()
    return frozenset.intersection(*accepted)


def defining_sets(accepted: Sequence[frozenset[str]]) -> list[frozenset[str]]:
    """Inclusion-minimal accepted sets, deduplicated, smallest first."""
    unique = sorted(set(accepted), key=lambda s: (len(s), sorted(s)))
    out = []
    for s in unique:
        if not any(t < s for t in unique):
            out.append(s)
    return out


def _run_outcome(subsets: Sequence[frozenset[str]], run_test: _CiCache, alpha: float,
                 threads: int | None) -> IcpOutcome:
    results = thread_map(run_test, subsets, threads)
    accepted = tuple(r.subset for r in results if r.p_value > alpha)
    return IcpOutcome(
        alpha=alpha,
        tested=tuple(results),
        accepted_sets=accepted,
        intersection=intersect_accepted(accepted),
        defining=tuple(defining_sets(accepted)),
        no_accepted=len(accepted) == 0,
    )


def exhaustive_icp(table: DatasetTable, base: Iterable[str], min_size: int,
                   folds: FoldAssignment, forest_config: ForestConfig | None = None,
                   alpha: float = 0.05, threads: int | None = None) -> IcpOutcome:
    """CI-test every subset of `base` with size >= min_size and intersect."""
    if forest_config is None:
        forest_config = ForestConfig()
    base = sorted(set(base))
    unknown = set(base) - set(table.group_names)
    if unknown:
        raise ValueError(f"unknown group {sorted(unknown)}")
    subsets = enumerate_subsets(base, min_size)
    run_test = _CiCache(table, folds, forest_config)
    return _run_outcome(subsets, run_test, alpha, threads)


def cluster_subsets(clusters: Sequence[Iterable[str]], min_size: int) -> list[frozenset[str]]:
    """Unique variable-sets from unions of >= min_size clusters.

    Overlapping clusters map different cluster combinations to the same
    variable set; duplicates keep their first occurrence in the
    (size-descending, index-lexicographic) enumeration order.
    """
    cluster_sets = [frozenset(c) for c in clusters]
    if not cluster_sets or any(len(c) == 0 for c in cluster_sets):
        raise ValueError("clusters must be non-empty")
    if not 1 <= min_size <= len(cluster_sets):
        raise ValueError(f"min_size must be in [1, {len(cluster_sets)}], got {min_size}")
    seen: dict[frozenset[str], None] = {}
    for size in range(len(cluster_sets), min_size - 1, -1):
        for combo in combinations(range(len(cluster_sets)), size):
            union = frozenset().union(*(cluster_sets[i] for i in combo))
            seen.setdefault(union)
    return list(seen)


def cluster_icp(table: DatasetTable, clusters: Sequence[Iterable[str]], min_size: int,
                folds: FoldAssignment, forest_config: ForestConfig | None = None,
                alpha: float = 0.05, threads: int | None = None) -> IcpOutcome:
    """Exhaustive ICP over unions of variable clusters (deduplicated)."""
    if forest_config is None:
        forest_config = ForestConfig()
    members = set().union(*(set(c) for c in clusters))
    unknown = members - set(table.group_names)
    if unknown:
        raise ValueError(f"unknown group {sorted(unknown)}")
    subsets = cluster_subsets(clusters, min_size)
    run_test = _CiCache(table, folds, forest_config)
    return _run_outcome(subsets, run_test, alpha, threads)
