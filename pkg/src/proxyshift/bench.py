"""Simulation-study harness: point error, baseline comparison, interval
coverage, runtime.

Every replicate's random stream is derived from the master seed together
with the model and dataset indices, so results are a pure function of the
configuration and are identical for any worker count or scheduling order.
Per-replicate failures are recorded as explicit failure rows, never dropped.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import no_adjustment, oracle_estimate, w_adjustment
from .categorical import CategorySpec, condition_number
from .causal import FitOptions, causal_estimate
from .errors import FilterExhaustedError, ValidationError
from .reduced import bootstrap_ci, reduced_estimate, _proxy_matrix, _split_eta, eta_from_dataset
from .scm import (ScmSpec, interventional_sample, population_views,
                  sample_scm_spec, simulate_dataset, target_conditional,
                  true_effect)

# Purpose salts for stream derivation, so the same (model, dataset) replicate
# uses independent randomness for data, oracle draws, and bootstrap.
_SALT_MODEL = 1
_SALT_DATA = 2
_SALT_ORACLE = 3
_SALT_BOOT = 4

ALL_ESTIMATORS = ("oracle", "reduced", "causal", "noadj", "noadj*", "wadj", "wadj*")

CSV_HEADER = ("model,dataset,estimator,x,y,estimate,truth,abs_error,"
              "kappa_true,kappa_hat,ci_lower,ci_upper,covered,wall_time_s,error")


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Stream keyed by (master seed, indices); scheduling-independent."""
    return np.random.default_rng([master_seed, *key])


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one simulation study."""

    dims: CategorySpec
    n_models: int = 10            # independent model draws
    n_datasets: int = 5           # datasets per model
    n_samples: int = 20_000       # records per dataset
    n_sweep: tuple[int, ...] | None = None  # sample sizes for coverage/runtime
    estimators: tuple[str, ...] = ("reduced", "causal")
    alpha: float = 0.05
    bootstrap_b: int = 200
    confound_threshold: float = 0.1
    master_seed: int = 0
    workers: int = 1
    x: int = 0
    y: int = 0
    repetitions: int = 50         # timed repetitions in the runtime study
    model_draw_budget: int = 10_000
    fit_options: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if min(self.n_models, self.n_datasets, self.n_samples) < 1:
            raise ValidationError("n_models, n_datasets, n_samples must be >= 1")
        if self.confound_threshold < 0:
            raise ValidationError("confound_threshold must be non-negative")
        unknown = set(self.estimators) - set(ALL_ESTIMATORS)
        if unknown:
            raise ValidationError(f"unknown estimators: {sorted(unknown)}")

    @property
    def sweep(self) -> tuple[int, ...]:
        return self.n_sweep if self.n_sweep else (self.n_samples,)


@dataclass(frozen=True)
class ReplicateRecord:
    """One estimator evaluation on one simulated dataset."""

    model: int
    dataset: int
    estimator: str
    x: int
    y: int
    estimate: float | None
    truth: float
    abs_error: float | None
    kappa_true: float
    kappa_hat: float | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None
    covered: bool | None = None
    wall_time_s: float = 0.0
    error: str | None = None

    def to_csv_row(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, float):
                return repr(v)
            return str(v)
        # x, y are written 1-based like every file format in this package;
        # error text is flattened so rows stay single-line comma-separated
        error = (self.error or "").replace(",", ";").replace("\n", " ")
        cells = [self.model, self.dataset, self.estimator, self.x + 1, self.y + 1,
                 self.estimate, self.truth, self.abs_error, self.kappa_true,
                 self.kappa_hat, self.ci_lower, self.ci_upper, self.covered,
                 self.wall_time_s, error]
        return ",".join(fmt(c) for c in cells)


def _model_for(config: ExperimentConfig, candidate: int) -> ScmSpec:
    rng = derive_rng(config.master_seed, _SALT_MODEL, candidate)
    return sample_scm_spec(config.dims, rng)


def _kappa_hat_from_data(ds, x: int, y: int) -> float | None:
    try:
        eta = eta_from_dataset(ds, x, y)
        return condition_number(_proxy_matrix(_split_eta(eta.values, eta.k_w, eta.k_e)))
    except Exception:
        return None


def _run_one_estimator(name: str, ds, spec: ScmSpec, config: ExperimentConfig,
                       candidate: int, dataset_idx: int):
    """Returns (estimate, ci_lower, ci_upper, wall_time).  Timing wraps only
    the estimator call, not data generation."""
    x, y = config.x, config.y
    if name == "oracle":
        draws = interventional_sample(
            spec, x, config.n_samples,
            derive_rng(config.master_seed, _SALT_ORACLE, candidate, dataset_idx))
        t0 = time.perf_counter()
        value = oracle_estimate(draws, y)
        return value, None, None, time.perf_counter() - t0
    if name == "reduced":
        t0 = time.perf_counter()
        est = reduced_estimate(ds, x, y, alpha=config.alpha)
        return est.point, est.ci_lower, est.ci_upper, time.perf_counter() - t0
    if name == "causal":
        t0 = time.perf_counter()
        est = causal_estimate(ds, x, y, config.fit_options)
        return est.point, None, None, time.perf_counter() - t0
    if name == "noadj":
        t0 = time.perf_counter()
        return no_adjustment(ds, x, y, "pooled"), None, None, time.perf_counter() - t0
    if name == "noadj*":
        t0 = time.perf_counter()
        return no_adjustment(ds, x, y, "target"), None, None, time.perf_counter() - t0
    if name == "wadj":
        t0 = time.perf_counter()
        return w_adjustment(ds, x, y, "pooled"), None, None, time.perf_counter() - t0
    if name == "wadj*":
        t0 = time.perf_counter()
        return w_adjustment(ds, x, y, "target"), None, None, time.perf_counter() - t0
    raise ValidationError(f"unknown estimator {name!r}")


def _replicate_task(args) -> list[ReplicateRecord]:
    config, model_idx, candidate, dataset_idx = args
    x, y = config.x, config.y
    spec = _model_for(config, candidate)
    truth = true_effect(spec, x, y)
    kappa_true = condition_number(population_views(spec, x, y).p_w_ex)
    needs_target_xy = any(e.endswith("*") for e in config.estimators)
    ds = simulate_dataset(
        spec, config.n_samples,
        derive_rng(config.master_seed, _SALT_DATA, candidate, dataset_idx),
        benchmark_mode=needs_target_xy)
    kappa_hat = _kappa_hat_from_data(ds, x, y)

    records = []
    for name in config.estimators:
        try:
            value, lo, hi, wall = _run_one_estimator(
                name, ds, spec, config, candidate, dataset_idx)
            records.append(ReplicateRecord(
                model=model_idx, dataset=dataset_idx, estimator=name, x=x, y=y,
                estimate=value, truth=truth, abs_error=abs(value - truth),
                kappa_true=kappa_true, kappa_hat=kappa_hat,
                ci_lower=lo, ci_upper=hi,
                covered=(lo <= truth <= hi) if lo is not None else None,
                wall_time_s=wall))
        except Exception as exc:
            records.append(ReplicateRecord(
                model=model_idx, dataset=dataset_idx, estimator=name, x=x, y=y,
                estimate=None, truth=truth, abs_error=None,
                kappa_true=kappa_true, kappa_hat=kappa_hat,
                error=f"{type(exc).__name__}: {exc}"))
    return records


def _run_tasks(config: ExperimentConfig, tasks) -> list[ReplicateRecord]:
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_replicate_task, tasks))
    else:
        chunks = [_replicate_task(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.model, r.dataset, r.estimator))
    return records


def run_point_error(config: ExperimentConfig) -> list[ReplicateRecord]:
    """Estimation error study across random models and datasets, with true
    and estimated condition numbers per replicate."""
    tasks = [(config, m, m, d)
             for m in range(config.n_models) for d in range(config.n_datasets)]
    return _run_tasks(config, tasks)


def accepted_model_candidates(config: ExperimentConfig) -> list[int]:
    """Indices of model draws passing the confounding filter
    ``|q(y|do(x)) - q(y|x)| > threshold`` (an exact model property)."""
    accepted = []
    for candidate in range(config.model_draw_budget):
        spec = _model_for(config, candidate)
        gap = abs(true_effect(spec, config.x, config.y)
                  - target_conditional(spec, config.x, config.y))
        if gap > config.confound_threshold:
            accepted.append(candidate)
            if len(accepted) == config.n_models:
                return accepted
    raise FilterExhaustedError(
        f"only {len(accepted)}/{config.n_models} model draws passed the "
        f"confounding filter within the budget of {config.model_draw_budget}")


def run_baseline_comparison(config: ExperimentConfig) -> list[ReplicateRecord]:
    """All seven estimators on confounded model draws.

    Model draws are rejection-sampled until ``n_models`` pass the confounding
    filter; the filter uses exact population quantities, not estimates.
    """
    cfg = replace(config, estimators=ALL_ESTIMATORS)
    candidates = accepted_model_candidates(cfg)
    tasks = [(cfg, m, c, d)
             for m, c in enumerate(candidates) for d in range(cfg.n_datasets)]
    return _run_tasks(cfg, tasks)


def _coverage_task(args) -> list[ReplicateRecord]:
    config, n, model_idx, dataset_idx = args
    x, y = config.x, config.y
    spec = _model_for(config, model_idx)
    truth = true_effect(spec, x, y)
    kappa_true = condition_number(population_views(spec, x, y).p_w_ex)
    ds = simulate_dataset(
        spec, n, derive_rng(config.master_seed, _SALT_DATA, model_idx, dataset_idx, n))
    records = []
    try:
        est = reduced_estimate(ds, x, y, alpha=config.alpha)
        records.append(ReplicateRecord(
            model=model_idx, dataset=dataset_idx, estimator="reduced_asym", x=x, y=y,
            estimate=est.point, truth=truth, abs_error=abs(est.point - truth),
            kappa_true=kappa_true, kappa_hat=est.kappa_hat,
            ci_lower=est.ci_lower, ci_upper=est.ci_upper,
            covered=est.ci_lower <= truth <= est.ci_upper))
        boot = bootstrap_ci(
            ds, x, y, config.bootstrap_b, alpha=config.alpha,
            rng=derive_rng(config.master_seed, _SALT_BOOT, model_idx, dataset_idx, n))
        records.append(ReplicateRecord(
            model=model_idx, dataset=dataset_idx, estimator="reduced_boot", x=x, y=y,
            estimate=est.point, truth=truth, abs_error=abs(est.point - truth),
            kappa_true=kappa_true, kappa_hat=est.kappa_hat,
            ci_lower=boot.ci_lower, ci_upper=boot.ci_upper,
            covered=boot.ci_lower <= truth <= boot.ci_upper))
    except Exception as exc:
        records.append(ReplicateRecord(
            model=model_idx, dataset=dataset_idx, estimator="reduced_asym", x=x, y=y,
            estimate=None, truth=truth, abs_error=None, kappa_true=kappa_true,
            error=f"{type(exc).__name__}: {exc}"))
    return records


def run_coverage(config: ExperimentConfig) -> tuple[list[ReplicateRecord], dict]:
    """Interval coverage and length for the delta-method and bootstrap
    intervals, on identical datasets, for every sample size in the sweep.

    The summary reports, per sample size and method, the fraction of
    replicates whose interval contains the truth and the median clipped
    interval length.
    """
    records: list[ReplicateRecord] = []
    summary: dict = {}
    for n in config.sweep:
        tasks = [(config, n, m, d)
                 for m in range(config.n_models) for d in range(config.n_datasets)]
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                chunks = list(pool.map(_coverage_task, tasks))
        else:
            chunks = [_coverage_task(t) for t in tasks]
        n_records = [r for chunk in chunks for r in chunk]
        n_records.sort(key=lambda r: (r.model, r.dataset, r.estimator))
        records.extend(n_records)
        per_n = {}
        for method in ("reduced_asym", "reduced_boot"):
            rows = [r for r in n_records if r.estimator == method and r.error is None]
            if rows:
                per_n[method] = {
                    "coverage": float(np.mean([r.covered for r in rows])),
                    "median_length": float(np.median([r.ci_upper - r.ci_lower
                                                      for r in rows])),
                    "n_replicates": len(rows),
                }
        per_n["failures"] = sum(1 for r in n_records if r.error is not None)
        summary[n] = per_n
    return records, summary


def run_runtime(config: ExperimentConfig) -> dict:
    """Total wall time of repeated estimator calls on a fixed dataset, per
    sample size.

    Returns ``{n: {estimator: {"total_seconds": ..., "estimate": ...}}}``;
    the estimate values are reported so reruns can be checked for
    reproducibility (times naturally vary).
    """
    out: dict = {}
    for n in config.sweep:
        cfg_n = replace(config, n_samples=n, estimators=config.estimators)
        spec = _model_for(cfg_n, 0)
        needs_target_xy = any(e.endswith("*") for e in cfg_n.estimators)
        ds = simulate_dataset(spec, n,
                              derive_rng(cfg_n.master_seed, _SALT_DATA, 0, 0, n),
                              benchmark_mode=needs_target_xy)
        per_est = {}
        for name in cfg_n.estimators:
            value = None
            total = 0.0
            for _ in range(cfg_n.repetitions):
                value, _, _, wall = _run_one_estimator(name, ds, spec, cfg_n, 0, 0)
                total += wall
            per_est[name] = {"total_seconds": total, "estimate": value}
        out[n] = per_est
    return out
