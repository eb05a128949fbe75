"""Synthetic structural causal model benchmark with known ground truth.

Events carry an environment (spatial coordinates from a mixture of
blobs, plus a date); the environment drives the candidate variables but
never the target directly, and the target is generated from the
observed columns of the causal groups only. The known causal set makes
coverage experiments possible, and a permutation oracle provides an
independent check of the DeLong test.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
import numpy as np
from numba import njit

from ._seeds import derive_rng, derive_seed
from ._threads import thread_map
from .dataset import DatasetTable, VariableGroup
from .forest import ForestConfig, _splitmix64
from .icp import exhaustive_icp
from .invariance import event_folds

LINKS = ("linear-logit", "threshold", "interaction")
NOISES = ("logistic", "normal")

_MIXTURE_CENTERS = np.array([(-10.0, -10.0), (-10.0, 10.0), (10.0, -10.0), (10.0, 10.0)])
_MAX_ATTEMPTS = 10


@dataclass(frozen=True)
class ScmSpec:
    """Generator spec; `causal_groups`/`y_descendants` are 0-based group indices."""

    n_groups: int
    causal_groups: tuple[int, ...]
    group_width: int = 2
    env_dim: int = 3
    env_to_x_strength: tuple[float, ...] | float = 1.0
    x_noise_scale: float = 1.0
    link: str = "linear-logit"
    noise: str = "logistic"
    y_descendants: tuple[int, ...] = ()
    env_axes: tuple[int, ...] | None = None  # per-group env coordinate; None = random unit loadings
    signal_scale: float = 2.0
    event_shift_scale: float = 0.5
    column_jitter: float = 0.25
    descendant_strength: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "causal_groups", tuple(self.causal_groups))
        object.__setattr__(self, "y_descendants", tuple(self.y_descendants))
        if isinstance(self.env_to_x_strength, (list, tuple)):
            object.__setattr__(self, "env_to_x_strength", tuple(self.env_to_x_strength))
        if self.n_groups < 1 or self.group_width < 1:
            raise ValueError("n_groups and group_width must be >= 1")
        if self.env_dim < 2:
            raise ValueError("env_dim must be >= 2 (lat, lon at minimum)")
        if not self.causal_groups:
            raise ValueError("causal_groups must be non-empty")
        indices = set(self.causal_groups) | set(self.y_descendants)
        if not all(0 <= i < self.n_groups for i in indices):
            raise ValueError("group indices out of range")
        if set(self.causal_groups) & set(self.y_descendants):
            raise ValueError("causal_groups and y_descendants must be disjoint")
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}")
        if self.noise not in NOISES:
            raise ValueError(f"noise must be one of {NOISES}")
        if isinstance(self.env_to_x_strength, tuple) and len(self.env_to_x_strength) != self.n_groups:
            raise ValueError("env_to_x_strength tuple must have one entry per group")
        if self.env_axes is not None:
            object.__setattr__(self, "env_axes", tuple(self.env_axes))
            if len(self.env_axes) != self.n_groups:
                raise ValueError("env_axes must have one entry per group")
            if not all(0 <= a < self.env_dim for a in self.env_axes):
                raise ValueError("env_axes entries must index an environment coordinate")

    def strengths(self) -> np.ndarray:
        if isinstance(self.env_to_x_strength, tuple):
            return np.asarray(self.env_to_x_strength, dtype=np.float64)
        return np.full(self.n_groups, float(self.env_to_x_strength))

    def group_names(self) -> tuple[str, ...]:
        return tuple(f"g{v + 1:02d}" for v in range(self.n_groups))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScmSpec":
        raw = json.loads(text)
        for key in ("causal_groups", "y_descendants"):
            if key in raw:
                raw[key] = tuple(raw[key])
        if isinstance(raw.get("env_to_x_strength"), list):
            raw["env_to_x_strength"] = tuple(raw["env_to_x_strength"])
        return cls(**raw)


@dataclass(frozen=True)
class SynthResult:
    table: DatasetTable
    causal_groups: tuple[str, ...]
    y_descendant_groups: tuple[str, ...]
    spec: ScmSpec


def _link_score(spec: ScmSpec, group_means: np.ndarray) -> np.ndarray:
    """g(X_{S*}): a function of the observed causal-group means only."""
    m = group_means  # columns align with spec.causal_groups
    if spec.link == "linear-logit":
        return spec.signal_scale * m.mean(axis=1)
    if spec.link == "threshold":
        return spec.signal_scale * (2.0 * (m > 0.0).mean(axis=1) - 1.0)
    # interaction: product of the first two causal groups plus any linear rest
    score = m[:, 0] * m[:, 1] if m.shape[1] >= 2 else m[:, 0]
    if m.shape[1] > 2:
        score = score + m[:, 2:].mean(axis=1)
    return spec.signal_scale * score


def sample_scm(spec: ScmSpec, n_events: int, obs_per_event: int) -> SynthResult:
    """Draw a dataset; deterministic per spec seed, retried if one class is rare."""
    if n_events < 5:
        raise ValueError("n_events must be >= 5")
    if obs_per_event < 1:
        raise ValueError("obs_per_event must be >= 1")
    last_prevalence = None
    for attempt in range(_MAX_ATTEMPTS):
        rng = derive_rng(spec.seed, attempt)
        result, last_prevalence = _sample_once(spec, n_events, obs_per_event, rng)
        if result is not None:
            return result
    raise ValueError(
        f"class degeneracy after {_MAX_ATTEMPTS} attempts (last prevalence {last_prevalence})"
    )


def _sample_once(spec: ScmSpec, n_events: int, obs_per_event: int, rng: np.random.Generator):
    p, w, q = spec.n_groups, spec.group_width, spec.env_dim
    n = n_events * obs_per_event
    strengths = spec.strengths()

    # per-variable projection of the environment (structure constants);
    # unit rows keep the env share of each variable's variance comparable
    proj = rng.normal(size=(p, q))
    proj /= np.linalg.norm(proj, axis=1, keepdims=True)
    if spec.env_axes is not None:
        proj = np.zeros((p, q))
        proj[np.arange(p), list(spec.env_axes)] = 1.0

    # events: spatial mixture + date (+ extra coordinates)
    centers = _MIXTURE_CENTERS[rng.integers(len(_MIXTURE_CENTERS), size=n_events)]
    coords = centers + rng.normal(scale=1.5, size=(n_events, 2))
    dates = rng.uniform(0.0, 365.0, size=n_events)
    extra = rng.normal(size=(n_events, q - 3)) if q > 3 else np.empty((n_events, 0))
    env_events = np.hstack([coords, dates[:, None], extra])[:, :q]

    event_index = np.repeat(np.arange(n_events), obs_per_event)
    environment = env_events[event_index]

    scaled = np.empty((n, q))
    scaled[:, 0] = environment[:, 0] / 10.0
    scaled[:, 1] = environment[:, 1] / 10.0
    if q >= 3:
        # uniform dates rescaled to unit variance so env axes are comparable
        scaled[:, 2] = (environment[:, 2] / 365.0 - 0.5) * 2.0 * np.sqrt(3.0)
    if q > 3:
        scaled[:, 3:] = environment[:, 3:]
    h = scaled @ proj.T  # n x p

    shifts = rng.normal(scale=spec.event_shift_scale, size=(n_events, p))[event_index]
    core = strengths[None, :] * h + shifts + rng.normal(scale=spec.x_noise_scale, size=(n, p))
    X = np.repeat(core, w, axis=1) + rng.normal(scale=spec.column_jitter, size=(n, p * w))

    causal = list(spec.causal_groups)
    group_means = X.reshape(n, p, w).mean(axis=2)
    score = _link_score(spec, group_means[:, causal])
    eps = rng.logistic(size=n) if spec.noise == "logistic" else rng.normal(size=n)
    y = (score + eps > 0.0).astype(np.int8)

    prevalence = float(y.mean())
    if not 0.05 <= prevalence <= 0.95:
        return None, prevalence

    # descendants are overwritten as noisy functions of Y (keeping env/event terms)
    for v in spec.y_descendants:
        desc_core = (
            strengths[v] * h[:, v]
            + shifts[:, v]
            + spec.descendant_strength * (2.0 * y - 1.0)
            + rng.normal(scale=spec.x_noise_scale, size=n)
        )
        for c in range(w):
            X[:, v * w + c] = desc_core + rng.normal(scale=spec.column_jitter, size=n)

    names = spec.group_names()
    feature_names = tuple(f"{names[v]}__c{c}" for v in range(p) for c in range(w))
    groups = tuple(
        VariableGroup(names[v], tuple(range(v * w, (v + 1) * w))) for v in range(p)
    )
    event_ids = tuple(f"e{e:04d}" for e in event_index)
    obs_ids = tuple(f"e{e:04d}:{i % obs_per_event:03d}" for i, e in enumerate(event_index))
    env_names = ("lat", "lon", "date") + tuple(f"e{j}" for j in range(3, q))
    event_coords = {f"e{e:04d}": (float(coords[e, 0]), float(coords[e, 1])) for e in range(n_events)}
    table = DatasetTable(
        features=X,
        feature_names=feature_names,
        groups=groups,
        target=y,
        environment=environment,
        env_names=env_names[:q],
        event_ids=event_ids,
        obs_ids=obs_ids,
        event_coords=event_coords,
    )
    result = SynthResult(
        table=table,
        causal_groups=tuple(names[v] for v in spec.causal_groups),
        y_descendant_groups=tuple(names[v] for v in spec.y_descendants),
        spec=spec,
    )
    return result, prevalence


# ----------------------------------------------------------------------
# Permutation oracle for the DeLong test


@njit(cache=True, nogil=True)
def _rank_auc(scores, pos, n_pos, n_neg):
    n = scores.shape[0]
    order = np.argsort(scores, kind="mergesort")
    rank_sum = 0.0
    i = 0
    while i < n:
        j = i
        v = scores[order[i]]
        while j < n and scores[order[j]] == v:
            j += 1
        mid = 0.5 * (i + j - 1) + 1.0
        for t in range(i, j):
            if pos[order[t]]:
                rank_sum += mid
        i = j
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@njit(cache=True, nogil=True)
def _permutation_count(a, b, pos, n_pos, n_neg, rounds, state):
    n = a.shape[0]
    t_obs = abs(_rank_auc(a, pos, n_pos, n_neg) - _rank_auc(b, pos, n_pos, n_neg))
    pa = np.empty(n)
    pb = np.empty(n)
    hits = 0
    for _ in range(rounds):
        for i in range(n):
            state, z = _splitmix64(state)
            if z & np.uint64(1):
                pa[i] = b[i]
                pb[i] = a[i]
            else:
                pa[i] = a[i]
                pb[i] = b[i]
        t = abs(_rank_auc(pa, pos, n_pos, n_neg) - _rank_auc(pb, pos, n_pos, n_neg))
        if t >= t_obs - 1e-12:
            hits += 1
    return t_obs, hits


def permutation_oracle(scores_a, scores_b, labels, rounds: int = 20000, seed: int = 0) -> float:
    """Sign-flip permutation p-value for |AUC(a) - AUC(b)| on paired scores.

    Each round swaps the two models' scores per observation with
    probability 1/2; p uses the add-one estimator, so p is in (0, 1].
    """
    scores_a = np.ascontiguousarray(np.asarray(scores_a, dtype=np.float64).ravel())
    scores_b = np.ascontiguousarray(np.asarray(scores_b, dtype=np.float64).ravel())
    labels = np.asarray(labels).ravel()
    if scores_a.shape != scores_b.shape or scores_a.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if rounds < 1000:
        raise ValueError("rounds must be >= 1000")
    if labels.min() == labels.max():
        raise ValueError("degenerate labels")
    pos = np.ascontiguousarray(labels == 1)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    state = np.uint64(derive_seed(seed))
    _, hits = _permutation_count(scores_a, scores_b, pos, n_pos, n_neg, rounds, state)
    return (1.0 + hits) / (rounds + 1.0)


# ----------------------------------------------------------------------
# Coverage experiment: does the ICP intersection stay inside S*?


@dataclass(frozen=True)
class CoverageOutcome:
    run_index: int
    covered: bool
    intersection: frozenset[str]
    n_accepted: int
    no_accepted: bool


@dataclass(frozen=True)
class CoverageResult:
    coverage_fraction: float
    outcomes: tuple[CoverageOutcome, ...]


def coverage_experiment(spec: ScmSpec, runs: int, alpha: float = 0.05, min_size: int = 1,
                        forest_config: ForestConfig | None = None, n_events: int = 50,
                        obs_per_event: int = 10, k_folds: int = 5,
                        threads: int | None = None) -> CoverageResult:
    """Fraction of seeded runs where the exhaustive-ICP intersection is within S*."""
    if runs < 20:
        raise ValueError("runs must be >= 20")
    if forest_config is None:
        forest_config = ForestConfig()

    def one_run(r: int) -> CoverageOutcome:
        run_spec = replace(spec, seed=derive_seed(spec.seed, r, 0))
        result = sample_scm(run_spec, n_events, obs_per_event)
        folds = event_folds(result.table, k_folds, derive_seed(spec.seed, r, 1))
        config = replace(forest_config, seed=derive_seed(spec.seed, r, 2))
        outcome = exhaustive_icp(
            result.table, result.table.group_names, min_size, folds, config, alpha, threads=1
        )
        covered = outcome.intersection <= frozenset(result.causal_groups)
        return CoverageOutcome(
            run_index=r,
            covered=covered,
            intersection=outcome.intersection,
            n_accepted=len(outcome.accepted_sets),
            no_accepted=outcome.no_accepted,
        )

    outcomes = thread_map(one_run, range(runs), threads)
    fraction = sum(o.covered for o in outcomes) / runs
    return CoverageResult(coverage_fraction=fraction, outcomes=tuple(outcomes))
