"""Acceptance criteria, one test per criterion.

Each test prints a PASS/FAIL line (run with `pytest -s` to see them live)
and enforces its runtime budget. The statistical criteria use seeded
synthetic data with independent oracles: brute-force pair counting for
the AUC, a sign-flip permutation test for DeLong, and the known causal
set of the SCM generator for coverage and the greedy ordering.
"""

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.stats import kstest

from icpkit.cli import main
from icpkit.forest import ForestConfig
from icpkit.hsic import normalized_hsic
from icpkit.icp import cluster_subsets, enumerate_subsets, greedy_icp
from icpkit.invariance import event_folds, generalization_curve
from icpkit.roctest import auc_midrank, delong_paired_test
from icpkit.synth import ScmSpec, coverage_experiment, permutation_oracle, sample_scm
from icpkit._seeds import derive_rng, derive_seed
from icpkit._threads import thread_map
from conftest import brute_auc, load_cluster_fixture, make_env_proxy_table
from test_hsic import brute_normalized_hsic


def report(number: int, passed: bool, elapsed: float, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[{status}] criterion {number} ({elapsed:.1f}s): {detail}")


def test_criterion_1_subset_combinatorics():
    start = time.monotonic()
    subsets = enumerate_subsets([f"v{i:02d}" for i in range(11)], 8)
    elapsed = time.monotonic() - start
    ok = len(subsets) == 232 and elapsed < 1.0
    report(1, ok, elapsed, f"enumerate_subsets(11, 8) -> {len(subsets)} subsets")
    assert len(subsets) == 232
    assert elapsed < 1.0


def test_criterion_2_cluster_dedup():
    start = time.monotonic()
    clusters = load_cluster_fixture()
    unique = cluster_subsets(clusters, 8)
    elapsed = time.monotonic() - start
    ok = len(unique) == 28 and elapsed < 1.0
    report(2, ok, elapsed, f"11 clusters at min_size 8 -> {len(unique)} unique variable-subsets")
    assert len(clusters) == 11
    assert len(unique) == 28
    assert elapsed < 1.0


def test_criterion_3_auc_oracle_equivalence():
    start = time.monotonic()
    worst = 0.0
    for i in range(1000):
        rng = derive_rng(301, i)
        n = int(rng.integers(10, 201))
        if i % 2 == 0:
            scores = rng.integers(0, 6, size=n).astype(float)  # heavy ties
        else:
            scores = np.round(rng.normal(size=n), 2)           # occasional ties
        labels = (rng.uniform(size=n) < rng.uniform(0.2, 0.8)).astype(int)
        labels[0], labels[1] = 0, 1
        worst = max(worst, abs(auc_midrank(scores, labels) - brute_auc(scores, labels)))
    elapsed = time.monotonic() - start
    ok = worst < 1e-12 and elapsed < 10.0
    report(3, ok, elapsed, f"midrank AUC vs brute force on 1000 instances, max |diff| = {worst:.2e}")
    assert worst < 1e-12
    assert elapsed < 10.0


def _null_scores(rng, n=300):
    y = (rng.uniform(size=n) < 0.5).astype(int)
    y[:2] = [0, 1]
    signal = y * 1.0 + rng.normal(size=n)
    a = signal + 0.7 * rng.normal(size=n)
    b = signal + 0.7 * rng.normal(size=n)
    return a, b, y


def _mixed_scores(rng, n=300):
    y = (rng.uniform(size=n) < 0.5).astype(int)
    y[:2] = [0, 1]
    signal = y * 1.0 + rng.normal(size=n)
    a = rng.uniform(0, 1.2) * signal + rng.normal(size=n)
    b = rng.uniform(0, 1.2) * signal + rng.normal(size=n)
    return a, b, y


def test_criterion_4_delong_calibration_and_oracle_agreement():
    start = time.monotonic()
    # (a) p-values uniform under the null (equal-information arms)
    pvalues = np.array([
        delong_paired_test(*_null_scores(derive_rng(401, i))).p_value for i in range(500)
    ])
    ks = kstest(pvalues, "uniform")

    # (b) accept/reject agreement with the 20000-round permutation oracle
    alphas = (0.01, 0.05, 0.1)

    def one_instance(i: int):
        a, b, y = _mixed_scores(derive_rng(402, i))
        p_delong = delong_paired_test(a, b, y).p_value
        p_perm = permutation_oracle(a, b, y, rounds=20000, seed=derive_seed(403, i))
        return tuple((p_delong < alpha) == (p_perm < alpha) for alpha in alphas)

    agreements = np.array(thread_map(one_instance, range(200)))
    rates = agreements.mean(axis=0)
    elapsed = time.monotonic() - start
    ok = ks.pvalue > 0.01 and (rates >= 0.95).all() and elapsed < 300.0
    report(4, ok, elapsed,
           f"KS p = {ks.pvalue:.3f}; oracle agreement at alpha {alphas} = "
           f"{[f'{r:.3f}' for r in rates]}")
    assert ks.pvalue > 0.01
    for alpha, rate in zip(alphas, rates):
        assert rate >= 0.95, f"agreement at alpha={alpha} is {rate:.3f}"
    assert elapsed < 300.0


def test_criterion_5_icp_coverage():
    start = time.monotonic()
    spec = ScmSpec(n_groups=5, causal_groups=(0, 1), group_width=2,
                   env_to_x_strength=1.0, signal_scale=2.5, seed=42)
    config = ForestConfig(n_trees=40, max_depth=6, seed=0)
    result = coverage_experiment(spec, runs=100, alpha=0.05, min_size=1,
                                 forest_config=config, n_events=50, obs_per_event=10)
    covered = sum(o.covered for o in result.outcomes)
    elapsed = time.monotonic() - start
    ok = covered >= 90 and elapsed < 900.0
    report(5, ok, elapsed, f"intersection within S* in {covered}/100 runs")
    assert covered >= 90
    assert elapsed < 900.0


def test_criterion_6_greedy_sanity():
    start = time.monotonic()
    base = ScmSpec(
        n_groups=6, causal_groups=(0, 1), group_width=2,
        env_to_x_strength=(1.3, 1.3, 1.5, 1.5, 1.5, 1.5),
        env_axes=(2, 0, 1, 1, 1, 1),  # spurious groups ride the lon coordinate
        x_noise_scale=0.6, signal_scale=3.0, event_shift_scale=0.3, column_jitter=0.2,
        seed=0,
    )
    hits = 0
    for r in range(20):
        spec = replace(base, seed=derive_seed(123, r))
        result = sample_scm(spec, 50, 10)
        folds = event_folds(result.table, 5, derive_seed(124, r))
        config = ForestConfig(n_trees=50, max_depth=8, seed=derive_seed(125, r))
        trace = greedy_icp(result.table, folds, config)
        last_three = trace.steps[2].remaining_after  # remaining after 3 of 5 removals
        hits += set(result.causal_groups) <= last_three
    elapsed = time.monotonic() - start
    ok = hits >= 16 and elapsed < 600.0
    report(6, ok, elapsed, f"both causal groups in the last 3 positions in {hits}/20 runs")
    assert hits >= 16
    assert elapsed < 600.0


def test_criterion_7_hsic_identities():
    start = time.monotonic()
    rng = derive_rng(701)
    A = rng.normal(size=(500, 2))
    self_dep = normalized_hsic(A, A)
    indep = normalized_hsic(A, rng.normal(size=(500, 2)))
    max_diff = 0.0
    for n in (20, 35, 50):
        X = rng.normal(size=(n, 2))
        Y = 0.5 * X[:, :1] + rng.normal(size=(n, 1))
        max_diff = max(max_diff, abs(normalized_hsic(X, Y) - brute_normalized_hsic(X, Y)))
    elapsed = time.monotonic() - start
    ok = abs(self_dep - 1.0) < 1e-9 and indep < 0.05 and max_diff < 1e-10 and elapsed < 60.0
    report(7, ok, elapsed,
           f"self = {self_dep:.12f}, independent = {indep:.4f}, Gram vs brute |diff| = {max_diff:.2e}")
    assert abs(self_dep - 1.0) < 1e-9
    assert indep < 0.05
    assert max_diff < 1e-10
    assert elapsed < 60.0


def test_criterion_8_generalization_curve_shape():
    start = time.monotonic()
    table = make_env_proxy_table(seed=5, n_events=200, obs_per_event=10)
    config = ForestConfig(n_trees=200, max_depth=10, seed=5)
    curve = generalization_curve(table, ["proxy"], config, seed=9)
    event_drop = curve[0].mean_auc_event - curve[1].mean_auc_event
    spatial_change = abs(curve[0].mean_auc_spatial - curve[1].mean_auc_spatial)
    # grouped-fold integrity: no event on both sides of any fold
    folds = event_folds(table, 5, derive_seed(9, 0))
    rows = folds.row_folds(table)
    for f in range(5):
        test_events = {e for e, r in zip(table.event_ids, rows) if r == f}
        train_events = {e for e, r in zip(table.event_ids, rows) if r != f}
        assert not (test_events & train_events)
    elapsed = time.monotonic() - start
    ok = event_drop > 0.05 and spatial_change < 0.02 and elapsed < 300.0
    report(8, ok, elapsed,
           f"removing the proxy: event-CV drop = {event_drop:.4f} (> 0.05), "
           f"spatial-CV |change| = {spatial_change:.4f} (< 0.02)")
    assert event_drop > 0.05
    assert spatial_change < 0.02
    assert elapsed < 300.0


def _run_cli(argv) -> None:
    assert main(argv) == 0, f"command failed: {argv}"


def _payload_and_files(out_dir: Path):
    payload = json.loads((out_dir / "report.json").read_text())["payload"]
    files = {
        p.relative_to(out_dir).as_posix(): p.read_bytes()
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and p.name != "report.json"
    }
    return payload, files


def test_criterion_9_cli_determinism(tmp_path):
    start = time.monotonic()
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(ScmSpec(n_groups=3, causal_groups=(0,), group_width=1,
                                 env_to_x_strength=1.0, signal_scale=2.5, seed=11).to_json())
    synth_dir = tmp_path / "data"
    _run_cli(["synth", "--spec", str(spec_path), "--events", "20", "--obs", "6",
              "--out", str(synth_dir), "--seed", "3"])
    features = str(synth_dir / "features.csv")
    grids = tmp_path / "grids.csv"
    grids.write_text("obs_id,variable,v0,v1,v2\no1,t,1,2,3\no2,t,4,5,6\n")
    meta = tmp_path / "meta.csv"
    meta.write_text("obs_id,event_id,label,env_lat,env_lon\no1,e1,0,1.0,2.0\no2,e2,1,3.0,4.0\n")
    clusters = tmp_path / "clusters.json"
    clusters.write_text(json.dumps([["g01", "g02"], ["g02"], ["g03"]]))

    commands = {
        "synth": lambda out: ["synth", "--spec", str(spec_path), "--events", "15", "--obs", "4",
                              "--out", str(out), "--seed", "6"],
        "aggregate": lambda out: ["aggregate", "--grids", str(grids), "--events", str(meta),
                                  "--out", str(out / "features.csv")],
        "folds": lambda out: ["folds", "--features", features, "--scheme", "spatial",
                              "--k", "4", "--out", str(out), "--seed", "2"],
        "greedy": lambda out: ["greedy", "--features", features, "--curve", "--out", str(out),
                               "--seed", "5", "--trees", "12", "--max-depth", "4"],
        "exhaustive": lambda out: ["exhaustive", "--features", features, "--min-size", "2",
                                   "--out", str(out), "--seed", "5", "--trees", "12", "--max-depth", "4"],
        "cluster-icp": lambda out: ["cluster-icp", "--features", features, "--clusters", str(clusters),
                                    "--min-size", "2", "--out", str(out), "--seed", "5",
                                    "--trees", "12", "--max-depth", "4"],
        "hsic": lambda out: ["hsic", "--features", features, "--threshold", "0.25", "--out", str(out)],
        "coverage": lambda out: ["coverage", "--spec", str(spec_path), "--runs", "20",
                                 "--events", "20", "--obs", "6", "--trees", "8",
                                 "--max-depth", "3", "--out", str(out), "--seed", "1"],
    }
    mismatches = []
    for name, build in commands.items():
        first = tmp_path / f"{name}-first"
        second = tmp_path / f"{name}-second"
        _run_cli(build(first))
        _run_cli(build(second))
        p1, f1 = _payload_and_files(first)
        p2, f2 = _payload_and_files(second)
        if p1 != p2 or f1 != f2:
            mismatches.append(name)
    elapsed = time.monotonic() - start
    ok = not mismatches
    report(9, ok, elapsed, "all 8 commands reproduce byte-identical payloads and files"
           if ok else f"non-deterministic commands: {mismatches}")
    assert not mismatches
