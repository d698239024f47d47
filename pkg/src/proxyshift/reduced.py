"""Plug-in estimator over the observable statistic vector, with confidence
intervals.

For a fixed ``(x, y)`` the estimator summarises the sample by a vector of
empirical cell probabilities (the mean of per-record indicator vectors),
rebuilds the three pieces of the identification formula from it by ratios
and complements, and applies the pseudo-inverse adjustment.  Asymptotic
normality of the indicator means propagates through the map by the delta
method, giving closed-form standard errors; a normal-approximation bootstrap
is available as an alternative interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

from .categorical import RANK_REL_TOL, condition_number, numeric_row_rank, right_pseudoinverse
from .errors import BootstrapError, EmptyCellError, ValidationError
from .scm import ContingencyCounts, Dataset, contingency_counts

#: Additive perturbation applied to the proxy-cell components when the
#: estimated proxy conditional matrix is rank-deficient (keeps the
#: pseudo-inverse defined on a vanishing-probability event).
RANK_PERTURBATION_EPS = 1e-9

_FD_STEP = 1e-6


def normal_quantile(beta: float) -> float:
    """Standard-normal quantile (inverse cdf)."""
    return float(ndtri(beta))


@dataclass(frozen=True)
class EstimateFlags:
    """Diagnostic flags attached to an effect estimate."""

    rank_perturbed: bool = False
    clipped_point: bool = False
    clipped_ci: bool = False
    empty_cell: bool = False


@dataclass(frozen=True)
class EffectEstimate:
    """A point estimate of the target-domain causal effect with diagnostics.

    ``point`` is clipped to [0, 1]; the unclipped value and, when a
    confidence interval was computed, both clipped and unclipped interval
    bounds are retained.  ``kappa_hat`` is the condition number of the
    estimated proxy conditional matrix (before any rank perturbation).
    """

    point: float
    point_unclipped: float
    n: int
    alpha: float | None = None
    sigma_hat: float | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None
    ci_lower_unclipped: float | None = None
    ci_upper_unclipped: float | None = None
    kappa_hat: float | None = None
    flags: EstimateFlags = EstimateFlags()

    def to_dict(self) -> dict:
        out = {
            "point": self.point,
            "point_unclipped": self.point_unclipped,
            "n": self.n,
            "alpha": self.alpha,
            "sigma_hat": self.sigma_hat,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "ci_lower_unclipped": self.ci_lower_unclipped,
            "ci_upper_unclipped": self.ci_upper_unclipped,
            "kappa_hat": self.kappa_hat,
            "flags": {
                "rank_perturbed": self.flags.rank_perturbed,
                "clipped_point": self.flags.clipped_point,
                "clipped_ci": self.flags.clipped_ci,
                "empty_cell": self.flags.empty_cell,
            },
        }
        return out


@dataclass(frozen=True, eq=False)
class EtaVector:
    """Empirical cell-probability vector for one ``(x, y)`` with its sample
    covariance.

    Layout (length ``k_w + (k_w + 1) * k_e``):
    target proxy cells ``q(w_j, e_T)`` for ``j < k_w - 1``; the target mass
    ``q(e_T)``; proxy-treatment cells ``p(w_j, x, e_l)`` for ``j < k_w - 1``
    grouped by domain; outcome cells ``p(y, x, e_l)``; treatment cells
    ``p(x, e_l)``.  The last proxy category is implicit (complements).
    """

    values: np.ndarray
    cov: np.ndarray
    n: int
    k_w: int
    k_e: int

    def __post_init__(self):
        k_eta = self.k_w + (self.k_w + 1) * self.k_e
        v = np.asarray(self.values, dtype=float)
        c = np.asarray(self.cov, dtype=float)
        if v.shape != (k_eta,) or c.shape != (k_eta, k_eta):
            raise ValidationError(
                f"eta vector/covariance shapes {v.shape}/{c.shape} do not match "
                f"k_eta={k_eta}")
        v = v.copy()
        c = c.copy()
        v.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "cov", c)

    @property
    def k_eta(self) -> int:
        return self.values.size


class _EtaParts(NamedTuple):
    q_w_t: np.ndarray   # (k_w - 1,) target proxy cells
    q_t: float          # target mass
    p_wxe: np.ndarray   # (k_w - 1, k_e) proxy-treatment cells
    p_yxe: np.ndarray   # (k_e,) outcome cells
    p_xe: np.ndarray    # (k_e,) treatment cells


def _split_eta(values: np.ndarray, k_w: int, k_e: int) -> _EtaParts:
    kw1 = k_w - 1
    q_w_t = values[:kw1]
    q_t = float(values[kw1])
    a = k_w
    p_wxe = values[a:a + kw1 * k_e].reshape(k_e, kw1).T
    b = a + kw1 * k_e
    return _EtaParts(q_w_t, q_t, p_wxe, values[b:b + k_e], values[b + k_e:b + 2 * k_e])


class _CellTable(NamedTuple):
    """Record profiles aggregated by cell: counts plus the 0/1 indicator
    matrix mapping cells to eta components."""

    counts: np.ndarray      # (n_cells,)
    profiles: np.ndarray    # (n_cells, k_eta)
    n: int


def _cell_table(counts: ContingencyCounts, x: int, y: int,
                k_w: int, k_e: int) -> _CellTable:
    k_eta = k_w + (k_w + 1) * k_e
    kw1 = k_w - 1
    rows = []
    cell_counts = []
    t = counts.n_yxwe
    k_y, k_x = t.shape[0], t.shape[1]
    for yi in range(k_y):
        for xi in range(k_x):
            for wi in range(k_w):
                for ei in range(k_e):
                    c = int(t[yi, xi, wi, ei])
                    if c == 0:
                        continue
                    profile = np.zeros(k_eta)
                    if xi == x:
                        if wi < kw1:
                            profile[k_w + ei * kw1 + wi] = 1.0
                        if yi == y:
                            profile[k_w + kw1 * k_e + ei] = 1.0
                        profile[k_w + (kw1 + 1) * k_e + ei] = 1.0
                    rows.append(profile)
                    cell_counts.append(c)
    for wi in range(k_w):
        c = int(counts.n_w_target[wi])
        if c == 0:
            continue
        profile = np.zeros(k_eta)
        if wi < kw1:
            profile[wi] = 1.0
        profile[kw1] = 1.0
        rows.append(profile)
        cell_counts.append(c)
    if not rows:
        raise EmptyCellError("dataset is empty", cell="all")
    return _CellTable(np.array(cell_counts, dtype=np.int64), np.array(rows), counts.n)


def eta_from_counts(counts: ContingencyCounts, x: int, y: int) -> EtaVector:
    """Build the statistic vector and its unbiased sample covariance from the
    sufficient-statistic tables.

    The covariance is computed in closed form from the cell counts (mean of
    indicator outer products minus the outer product of means, scaled by
    ``n / (n - 1)``); no per-record vectors are materialised.
    """
    k_w = counts.n_yxwe.shape[2]
    k_e = counts.n_yxwe.shape[3]
    table = _cell_table(counts, x, y, k_w, k_e)
    n = table.n
    weights = table.counts / n
    mean = table.profiles.T @ weights
    second = (table.profiles * weights[:, None]).T @ table.profiles
    centred = second - np.outer(mean, mean)
    factor = n / (n - 1) if n > 1 else 0.0
    cov = factor * centred
    cov = 0.5 * (cov + cov.T)
    return EtaVector(mean, cov, n, k_w, k_e)


def eta_from_dataset(ds: Dataset, x: int, y: int) -> EtaVector:
    """Statistic vector for one ``(x, y)`` computed from raw records."""
    if ds.n == 0:
        raise EmptyCellError("dataset is empty", cell="all")
    return eta_from_counts(contingency_counts(ds), x, y)


def _proxy_matrix(parts: _EtaParts) -> np.ndarray:
    """Estimated proxy conditional matrix, last row by complement."""
    with np.errstate(divide="ignore", invalid="ignore"):
        top = parts.p_wxe / parts.p_xe[None, :]
    return np.vstack([top, 1.0 - top.sum(axis=0, keepdims=True)])


def _check_cells(parts: _EtaParts) -> None:
    if parts.q_t <= 0.0:
        raise EmptyCellError("no target-domain records", cell="target")
    zero = np.nonzero(parts.p_xe <= 0.0)[0]
    if zero.size:
        e = int(zero[0])
        raise EmptyCellError(
            f"no source records with the requested treatment in domain {e}",
            cell=f"(x, e={e})")


def _h_raw(values: np.ndarray, k_w: int, k_e: int,
           rank_tol: float = RANK_REL_TOL) -> float:
    parts = _split_eta(values, k_w, k_e)
    _check_cells(parts)
    q_w_top = parts.q_w_t / parts.q_t
    q_w = np.concatenate([q_w_top, [1.0 - q_w_top.sum()]])
    p_w_ex = _proxy_matrix(parts)
    p_y_ex = parts.p_yxe / parts.p_xe
    return float(p_y_ex @ right_pseudoinverse(p_w_ex, rank_tol) @ q_w)


def h_of_eta(eta: EtaVector, rank_tol: float = RANK_REL_TOL) -> float:
    """Evaluate the identification map on a statistic vector.

    Reconstructs the target proxy marginal (last entry by complement), the
    proxy conditional matrix (ratios, last row by complement) and the outcome
    conditional (ratios), then applies the pseudo-inverse adjustment.  Raises
    :class:`EmptyCellError` when a denominator cell has no mass.
    """
    return _h_raw(np.asarray(eta.values, dtype=float), eta.k_w, eta.k_e, rank_tol)


def grad_h(eta: EtaVector, rank_tol: float = RANK_REL_TOL) -> np.ndarray:
    """Central finite-difference gradient of the identification map.

    Uses per-coordinate steps ``max(1e-6, 1e-6 * |eta_i|)`` on the plain
    (unperturbed) map; errors from the map propagate.
    """
    base = np.asarray(eta.values, dtype=float)
    grad = np.empty(base.size)
    for i in range(base.size):
        step = max(_FD_STEP, _FD_STEP * abs(base[i]))
        hi = base.copy()
        lo = base.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (_h_raw(hi, eta.k_w, eta.k_e, rank_tol)
                   - _h_raw(lo, eta.k_w, eta.k_e, rank_tol)) / (2.0 * step)
    return grad


def _perturb_values(values: np.ndarray, k_w: int, k_e: int,
                    eps: float = RANK_PERTURBATION_EPS) -> np.ndarray:
    """Deterministic rank repair: add ``eps`` to every proxy-treatment cell
    and renormalise the affected ratios by growing the treatment cells by
    ``k_w * eps`` (the implicit complement row receives ``eps`` as well)."""
    out = values.copy()
    kw1 = k_w - 1
    out[k_w:k_w + kw1 * k_e] += eps
    b = k_w + (kw1 + 1) * k_e
    out[b:b + k_e] += k_w * eps
    return out


# Pseudo-inverse tolerance used after a deliberate rank perturbation: the
# perturbation exists to make the estimate defined, so only genuine
# singularity (ties the perturbation cannot break) is refused.
_PERTURBED_RANK_TOL = 1e-13


def _maybe_perturb(values: np.ndarray, k_w: int, k_e: int,
                   rank_tol: float) -> tuple[np.ndarray, bool, float]:
    """Returns (possibly perturbed values, perturbed flag, evaluation
    tolerance for the pseudo-inverse)."""
    parts = _split_eta(values, k_w, k_e)
    _check_cells(parts)
    if numeric_row_rank(_proxy_matrix(parts), rank_tol) < k_w:
        return _perturb_values(values, k_w, k_e), True, _PERTURBED_RANK_TOL
    return values, False, rank_tol


def _clip01(v: float) -> float:
    return min(max(v, 0.0), 1.0)


def reduced_estimate(ds: Dataset, x: int, y: int, alpha: float = 0.05,
                     rank_tol: float = RANK_REL_TOL) -> EffectEstimate:
    """Point estimate with a delta-method confidence interval.

    Requires at least one target record and at least one source record with
    the requested treatment in every source domain (otherwise
    :class:`EmptyCellError`).  The point and interval are clipped to [0, 1];
    unclipped values are retained.  When the estimated proxy conditional
    matrix is rank-deficient at ``rank_tol``, a deterministic perturbation is
    applied and recorded in the flags.
    """
    eta = eta_from_dataset(ds, x, y)
    values, perturbed, eval_tol = _maybe_perturb(eta.values, eta.k_w, eta.k_e, rank_tol)
    kappa_hat = condition_number(_proxy_matrix(_split_eta(eta.values, eta.k_w, eta.k_e)))
    work = EtaVector(values, eta.cov, eta.n, eta.k_w, eta.k_e)
    point_u = h_of_eta(work, eval_tol)
    grad = grad_h(work, eval_tol)
    sigma2 = float(grad @ work.cov @ grad)
    sigma_hat = math.sqrt(max(sigma2, 0.0))
    half = sigma_hat / math.sqrt(eta.n) * normal_quantile(1.0 - alpha / 2.0)
    lo_u, hi_u = point_u - half, point_u + half
    point = _clip01(point_u)
    lo, hi = _clip01(lo_u), _clip01(hi_u)
    flags = EstimateFlags(
        rank_perturbed=perturbed,
        clipped_point=point != point_u,
        clipped_ci=(lo != lo_u) or (hi != hi_u),
    )
    return EffectEstimate(
        point=point, point_unclipped=point_u, n=eta.n, alpha=alpha,
        sigma_hat=sigma_hat, ci_lower=lo, ci_upper=hi,
        ci_lower_unclipped=lo_u, ci_upper_unclipped=hi_u,
        kappa_hat=kappa_hat, flags=flags)


class BootstrapCI(NamedTuple):
    ci_lower: float
    ci_upper: float
    sigma_boot: float


def bootstrap_ci(ds: Dataset, x: int, y: int, n_boot: int, alpha: float = 0.05,
                 rng: np.random.Generator | int | None = None,
                 rank_tol: float = RANK_REL_TOL,
                 failure_budget: float = 0.1) -> BootstrapCI:
    """Normal-approximation bootstrap interval for the plug-in estimator.

    Each resample redraws the ``n`` records with replacement (realised as a
    multinomial redraw of the cell counts, which is equivalent and avoids
    touching individual records); the interval is centred at the full-sample
    estimate with half-width ``sigma_boot`` times the normal quantile, then
    clipped to [0, 1].  Resamples are keyed by their index, so any parallel
    execution order reproduces the same draws.  More than
    ``failure_budget * n_boot`` failed resamples abort with
    :class:`BootstrapError`.
    """
    if n_boot < 2:
        raise ValidationError("n_boot must be at least 2")
    counts = contingency_counts(ds)
    eta = eta_from_counts(counts, x, y)
    table = _cell_table(counts, x, y, eta.k_w, eta.k_e)
    probs = table.counts / table.n

    values, _, centre_tol = _maybe_perturb(eta.values, eta.k_w, eta.k_e, rank_tol)
    centre = _h_raw(values, eta.k_w, eta.k_e, centre_tol)

    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    base = int(rng.integers(2 ** 62))

    estimates = []
    failures = 0
    for b in range(n_boot):
        stream = np.random.default_rng([base, b])
        resampled = stream.multinomial(table.n, probs)
        vals = table.profiles.T @ (resampled / table.n)
        try:
            vals, _, tol = _maybe_perturb(vals, eta.k_w, eta.k_e, rank_tol)
            estimates.append(_h_raw(vals, eta.k_w, eta.k_e, tol))
        except Exception:
            failures += 1
    if failures > failure_budget * n_boot:
        raise BootstrapError(
            f"{failures}/{n_boot} bootstrap resamples failed to produce an estimate")
    sigma_boot = float(np.std(estimates, ddof=1))
    half = sigma_boot * normal_quantile(1.0 - alpha / 2.0)
    return BootstrapCI(_clip01(centre - half), _clip01(centre + half), sigma_boot)
