import numpy as np
import pytest

from icpkit.forest import ForestConfig
from icpkit.invariance import event_folds, spatial_folds
from icpkit.synth import ScmSpec, coverage_experiment, permutation_oracle, sample_scm
from icpkit._seeds import derive_rng


SPEC = ScmSpec(n_groups=4, causal_groups=(0, 1), group_width=2,
               env_to_x_strength=1.0, signal_scale=2.5, seed=12)


class TestScmSpec:
    def test_json_round_trip(self):
        again = ScmSpec.from_json(SPEC.to_json())
        assert again == SPEC

    def test_validation(self):
        with pytest.raises(ValueError, match="non-empty"):
            ScmSpec(n_groups=3, causal_groups=())
        with pytest.raises(ValueError, match="disjoint"):
            ScmSpec(n_groups=3, causal_groups=(0,), y_descendants=(0,))
        with pytest.raises(ValueError, match="out of range"):
            ScmSpec(n_groups=3, causal_groups=(5,))
        with pytest.raises(ValueError, match="link"):
            ScmSpec(n_groups=3, causal_groups=(0,), link="spline")
        with pytest.raises(ValueError, match="one entry per group"):
            ScmSpec(n_groups=3, causal_groups=(0,), env_to_x_strength=(1.0, 2.0))
        with pytest.raises(ValueError, match="env_axes"):
            ScmSpec(n_groups=3, causal_groups=(0,), env_axes=(0,))


class TestSampleScm:
    def test_deterministic(self):
        r1 = sample_scm(SPEC, 20, 5)
        r2 = sample_scm(SPEC, 20, 5)
        assert np.array_equal(r1.table.features, r2.table.features)
        assert r1.table.target.tolist() == r2.table.target.tolist()
        assert r1.table.event_ids == r2.table.event_ids

    def test_too_few_events(self):
        with pytest.raises(ValueError, match="n_events"):
            sample_scm(SPEC, 0, 5)
        with pytest.raises(ValueError, match="n_events"):
            sample_scm(SPEC, 4, 5)

    def test_shapes_and_structure(self):
        res = sample_scm(SPEC, 20, 5)
        t = res.table
        assert t.n == 100
        assert t.d == 8 and len(t.groups) == 4
        assert t.q == 3 and t.env_names == ("lat", "lon", "date")
        assert len(t.events()) == 20
        assert res.causal_groups == ("g01", "g02")
        prevalence = t.target.mean()
        assert 0.05 <= prevalence <= 0.95

    def test_environment_constant_within_event(self):
        res = sample_scm(SPEC, 15, 6)
        env = res.table.environment
        for event in res.table.events():
            rows = [i for i, e in enumerate(res.table.event_ids) if e == event]
            assert np.ptp(env[rows], axis=0).max() == 0.0

    def test_folds_build_on_sampled_tables(self):
        res = sample_scm(SPEC, 25, 6)
        event_folds(res.table, 5, seed=1)
        spatial_folds(res.table, 5, seed=1)

    def test_causal_group_most_correlated_with_target(self):
        spec = ScmSpec(n_groups=4, causal_groups=(0,), group_width=2,
                       env_to_x_strength=0.8, signal_scale=3.0, seed=3)
        res = sample_scm(spec, 60, 10)
        t = res.table
        y = t.target.astype(float)

        def corr(name):
            cols = t.group(name).column_indices
            m = t.features[:, cols].mean(axis=1)
            return abs(np.corrcoef(m, y)[0, 1])

        causal_corr = corr("g01")
        assert all(causal_corr > corr(g) for g in ("g02", "g03", "g04"))

    def test_y_descendants_track_target(self):
        spec = ScmSpec(n_groups=3, causal_groups=(0,), group_width=1,
                       y_descendants=(2,), descendant_strength=2.0,
                       env_to_x_strength=0.5, signal_scale=3.0, seed=4)
        res = sample_scm(spec, 40, 8)
        t = res.table
        y = t.target.astype(float)
        desc = t.features[:, t.group("g03").column_indices].mean(axis=1)
        assert res.y_descendant_groups == ("g03",)
        assert abs(np.corrcoef(desc, y)[0, 1]) > 0.5

    def test_threshold_and_interaction_links(self):
        for link in ("threshold", "interaction"):
            spec = ScmSpec(n_groups=3, causal_groups=(0, 1), group_width=1,
                           link=link, signal_scale=3.0, seed=6)
            res = sample_scm(spec, 20, 6)
            assert 0.05 <= res.table.target.mean() <= 0.95


class TestPermutationOracle:
    def labels_and_scores(self, seed=0, n=300):
        rng = derive_rng(seed)
        y = (rng.uniform(size=n) < 0.5).astype(int)
        y[:2] = [0, 1]
        informative = y + 0.8 * rng.normal(size=n)
        noise = rng.normal(size=n)
        return y, informative, noise

    def test_identical_scores_give_one(self):
        y, a, _ = self.labels_and_scores()
        assert permutation_oracle(a, a.copy(), y, rounds=1000, seed=1) == 1.0

    def test_informative_vs_noise_rejects(self):
        y, a, b = self.labels_and_scores()
        assert permutation_oracle(a, b, y, rounds=5000, seed=1) < 0.01

    def test_p_in_unit_interval(self):
        rng = derive_rng(9)
        for i in range(5):
            y = (rng.uniform(size=80) < 0.5).astype(int)
            y[:2] = [0, 1]
            p = permutation_oracle(rng.normal(size=80), rng.normal(size=80), y,
                                   rounds=1000, seed=i)
            assert 0.0 < p <= 1.0

    def test_round_floor(self):
        y, a, b = self.labels_and_scores()
        with pytest.raises(ValueError, match="rounds"):
            permutation_oracle(a, b, y, rounds=10, seed=0)

    def test_degenerate_labels(self):
        with pytest.raises(ValueError, match="degenerate labels"):
            permutation_oracle([1.0, 2.0], [2.0, 1.0], [1, 1], rounds=1000)

    def test_deterministic(self):
        y, a, b = self.labels_and_scores(seed=5)
        p1 = permutation_oracle(a, b, y, rounds=2000, seed=7)
        p2 = permutation_oracle(a, b, y, rounds=2000, seed=7)
        assert p1 == p2


class TestCoverageExperiment:
    def test_small_coverage_run(self):
        spec = ScmSpec(n_groups=3, causal_groups=(0,), group_width=1,
                       env_to_x_strength=1.0, signal_scale=2.5, seed=77)
        cfg = ForestConfig(n_trees=12, max_depth=4, seed=0)
        result = coverage_experiment(spec, runs=20, alpha=0.05, min_size=1,
                                     forest_config=cfg, n_events=20, obs_per_event=6)
        assert len(result.outcomes) == 20
        assert result.coverage_fraction == sum(o.covered for o in result.outcomes) / 20
        assert result.coverage_fraction >= 0.8
        for o in result.outcomes:
            assert o.covered == (o.intersection <= frozenset({"g01"}))

    def test_runs_floor(self):
        with pytest.raises(ValueError, match="runs"):
            coverage_experiment(SPEC, runs=5)
