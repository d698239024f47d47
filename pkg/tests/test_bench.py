"""Benchmark harness: record completeness, determinism, filter, summaries."""

import numpy as np
import pytest

from proxyshift.bench import (ALL_ESTIMATORS, ExperimentConfig,
                              accepted_model_candidates, derive_rng,
                              run_baseline_comparison, run_coverage,
                              run_point_error, run_runtime)
from proxyshift.categorical import CategorySpec
from proxyshift.errors import FilterExhaustedError, ValidationError


def small_config(**overrides):
    defaults = dict(dims=CategorySpec(2, 2, 2, 2, 2), n_models=2, n_datasets=2,
                    n_samples=1500, master_seed=11, estimators=("reduced",))
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestConfig:
    def test_rejects_bad_counts(self):
        with pytest.raises(ValidationError):
            small_config(n_models=0)

    def test_rejects_unknown_estimator(self):
        with pytest.raises(ValidationError):
            small_config(estimators=("reduced", "magic"))


class TestPointError:
    def test_single_replicate_record_count(self):
        config = small_config(n_models=1, n_datasets=1,
                              estimators=("reduced", "causal"))
        records = run_point_error(config)
        assert len(records) == 2
        assert sorted(r.estimator for r in records) == ["causal", "reduced"]

    def test_record_fields_are_consistent(self):
        records = run_point_error(small_config())
        assert len(records) == 4
        for r in records:
            assert r.error is None
            assert r.abs_error == abs(r.estimate - r.truth)
            assert r.kappa_true > 0
            assert r.kappa_hat is not None

    def test_every_triple_appears_once(self):
        config = small_config(n_models=3, n_datasets=2,
                              estimators=("reduced", "causal"))
        records = run_point_error(config)
        triples = [(r.model, r.dataset, r.estimator) for r in records]
        assert len(triples) == len(set(triples)) == 12

    def test_worker_count_does_not_change_estimates(self):
        serial = run_point_error(small_config())
        parallel = run_point_error(small_config(workers=2))
        assert [r.estimate for r in serial] == [r.estimate for r in parallel]

    def test_rerun_is_bit_for_bit(self):
        a = run_point_error(small_config())
        b = run_point_error(small_config())
        assert [r.estimate for r in a] == [r.estimate for r in b]


class TestBaselineComparison:
    def test_all_estimators_present(self):
        config = small_config(n_models=1, n_datasets=1)
        records = run_baseline_comparison(config)
        assert sorted(r.estimator for r in records) == sorted(ALL_ESTIMATORS)

    def test_filter_accepts_only_confounded_models(self):
        config = small_config(n_models=3, confound_threshold=0.1)
        from proxyshift.bench import _model_for
        from proxyshift.scm import target_conditional, true_effect
        for candidate in accepted_model_candidates(config):
            spec = _model_for(config, candidate)
            gap = abs(true_effect(spec, 0, 0) - target_conditional(spec, 0, 0))
            assert gap > 0.1

    def test_zero_threshold_accepts_immediately(self):
        config = small_config(n_models=2, confound_threshold=0.0)
        assert accepted_model_candidates(config) == [0, 1]

    def test_impossible_filter_exhausts_budget(self):
        config = small_config(confound_threshold=2.0, model_draw_budget=50)
        with pytest.raises(FilterExhaustedError):
            accepted_model_candidates(config)


class TestCoverage:
    def test_summary_structure(self):
        config = small_config(n_models=2, n_datasets=3, n_samples=2000,
                              bootstrap_b=24)
        records, summary = run_coverage(config)
        assert set(summary) == {2000}
        block = summary[2000]
        for method in ("reduced_asym", "reduced_boot"):
            assert 0.0 <= block[method]["coverage"] <= 1.0
            assert block[method]["median_length"] >= 0.0
            assert block[method]["n_replicates"] == 6
        assert len(records) == 12

    def test_sweep_runs_each_size(self):
        config = small_config(n_models=1, n_datasets=2, bootstrap_b=16,
                              n_sweep=(800, 1600))
        _, summary = run_coverage(config)
        assert set(summary) == {800, 1600}


class TestRuntime:
    def test_ordering_and_determinism(self):
        config = small_config(
            n_samples=1000, repetitions=5,
            estimators=("noadj", "wadj", "reduced", "causal"))
        table = run_runtime(config)
        block = table[1000]
        assert block["noadj"]["total_seconds"] <= block["reduced"]["total_seconds"]
        assert block["reduced"]["total_seconds"] < block["causal"]["total_seconds"]
        rerun = run_runtime(config)
        for name in block:
            assert rerun[1000][name]["estimate"] == block[name]["estimate"]


class TestRngDerivation:
    def test_keyed_streams_are_stable_and_distinct(self):
        a = derive_rng(3, 1, 2).random(4)
        b = derive_rng(3, 1, 2).random(4)
        c = derive_rng(3, 2, 1).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
