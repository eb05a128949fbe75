"""Shared builders and independent oracles for the test suite."""

import json
from pathlib import Path

import numpy as np

from icpkit._seeds import derive_rng
from icpkit.dataset import DatasetTable, VariableGroup

DATA_DIR = Path(__file__).parent / "data"


def load_cluster_fixture() -> list[list[str]]:
    return json.loads((DATA_DIR / "variable_clusters.json").read_text())


def brute_auc(scores, labels) -> float:
    """O(n^2) pair counting: concordant + half of tied pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    return ((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (len(pos) * len(neg))


def toy_table(n_events=12, obs_per_event=4, seed=0, q=3) -> DatasetTable:
    """A small two-group table with event structure and coordinates."""
    rng = derive_rng(seed)
    ev = np.repeat(np.arange(n_events), obs_per_event)
    n = len(ev)
    coords = rng.normal(scale=5.0, size=(n_events, 2))
    env = np.column_stack([coords[ev, 0], coords[ev, 1], rng.uniform(0, 365, size=n)])[:, :q]
    X = rng.normal(size=(n, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=n) > 0).astype(int)
    # ensure both classes in every event's rows cannot be guaranteed; flip one if degenerate
    if y.min() == y.max():
        y[0] = 1 - y[0]
    names = ("a__mean", "a__std", "b__mean")
    groups = (VariableGroup("a", (0, 1)), VariableGroup("b", (2,)))
    env_names = ("lat", "lon", "date")[:q]
    return DatasetTable(
        features=X,
        feature_names=names,
        groups=groups,
        target=y,
        environment=env,
        env_names=env_names,
        event_ids=tuple(f"e{e:03d}" for e in ev),
        obs_ids=tuple(f"e{e:03d}:{i % obs_per_event}" for i, e in enumerate(ev)),
        event_coords={f"e{e:03d}": (coords[e, 0], coords[e, 1]) for e in range(n_events)},
    )


def make_env_proxy_table(seed=5, n_events=200, obs_per_event=10) -> DatasetTable:
    """Constructed synthetic where one group proxies the spatial environment.

    Five spatial blobs carry additive regional shifts of the label score;
    the proxy group reads the shift almost noiselessly, so it boosts
    event-CV performance while within-blob (spatial-CV) ranking comes
    from the causal group alone.
    """
    rng = derive_rng(seed)
    centers = np.array([(-10.0, -10.0), (-10.0, 10.0), (10.0, -10.0), (10.0, 10.0), (0.0, 0.0)])
    region_shift = np.array([-1.5, -0.75, 0.0, 0.75, 1.5])
    blob = rng.integers(5, size=n_events)
    coords = centers[blob] + rng.normal(scale=1.0, size=(n_events, 2))
    dates = rng.uniform(0, 365, size=n_events)
    ev = np.repeat(np.arange(n_events), obs_per_event)
    n = len(ev)
    core = rng.normal(size=n)
    region = region_shift[blob][ev]
    y = (1.2 * core + region + 0.7 * rng.normal(size=n) > 0).astype(int)
    X = np.empty((n, 6))
    X[:, 0] = core + 0.2 * rng.normal(size=n)
    X[:, 1] = core + 0.2 * rng.normal(size=n)
    X[:, 2] = region + 0.1 * rng.normal(size=n)
    X[:, 3] = region + 0.1 * rng.normal(size=n)
    X[:, 4] = rng.normal(size=n)
    X[:, 5] = rng.normal(size=n)
    env = np.column_stack([coords[ev, 0], coords[ev, 1], dates[ev]])
    groups = (VariableGroup("causal", (0, 1)), VariableGroup("proxy", (2, 3)),
              VariableGroup("noise", (4, 5)))
    names = ("causal__c0", "causal__c1", "proxy__c0", "proxy__c1", "noise__c0", "noise__c1")
    return DatasetTable(
        features=X,
        feature_names=names,
        groups=groups,
        target=y,
        environment=env,
        env_names=("lat", "lon", "date"),
        event_ids=tuple(f"e{e:04d}" for e in ev),
        obs_ids=tuple(f"e{e:04d}:{i % obs_per_event:02d}" for i, e in enumerate(ev)),
        event_coords={f"e{e:04d}": (coords[e, 0], coords[e, 1]) for e in range(n_events)},
    )
