"""Categorical probability objects and dense linear-algebra primitives.

Conditional pmfs are stored as column-stochastic matrices: entry ``(i, j)``
is the probability of outcome ``i`` given conditioning value ``j``, so every
column sums to one.  All matrices in this problem are tiny (tens of
categories per axis), so everything is dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError, ValidationError

COLUMN_SUM_TOL = 1e-12
RANK_REL_TOL = 1e-9

# Relative singular-value cutoff below which a matrix is treated as exactly
# singular; comfortably above double-precision noise for entries in [0, 1].
_SINGULAR_REL_CUTOFF = 1e-12


def _as_matrix(a) -> np.ndarray:
    m = np.asarray(getattr(a, "values", a), dtype=float)
    if m.ndim != 2:
        raise ValidationError(f"expected a 2-d matrix, got ndim={m.ndim}")
    if m.size == 0:
        raise ValidationError("expected a non-empty matrix")
    return m


def validate_stochastic(matrix, tol: float = COLUMN_SUM_TOL,
                        strict_positive: bool = False) -> str | None:
    """Check that ``matrix`` is column-stochastic.

    Returns ``None`` when every entry is non-negative (strictly positive when
    ``strict_positive``) and every column sums to one within ``tol``;
    otherwise returns a report naming the first offending entry or column.
    """
    m = _as_matrix(matrix)
    if strict_positive:
        bad = np.argwhere(m <= 0.0)
        if bad.size:
            i, j = bad[0]
            return f"entry ({i}, {j}) is {m[i, j]!r}, must be strictly positive"
    else:
        bad = np.argwhere(m < 0.0)
        if bad.size:
            i, j = bad[0]
            return f"entry ({i}, {j}) is {m[i, j]!r}, must be non-negative"
    sums = m.sum(axis=0)
    off = np.abs(sums - 1.0) > tol
    if off.any():
        j = int(np.argmax(off))
        return f"column {j} sums to {sums[j]!r}, expected 1 within {tol}"
    return None


def _freeze(obj, name: str, value: np.ndarray) -> None:
    value.flags.writeable = False
    object.__setattr__(obj, name, value)


@dataclass(frozen=True, eq=False)
class CategorySpec:
    """Cardinalities of the five categorical axes, with optional labels."""

    k_e: int
    k_u: int
    k_w: int
    k_x: int
    k_y: int
    labels_e: tuple[str, ...] | None = None
    labels_u: tuple[str, ...] | None = None
    labels_w: tuple[str, ...] | None = None
    labels_x: tuple[str, ...] | None = None
    labels_y: tuple[str, ...] | None = None

    def __post_init__(self):
        for axis in ("e", "u", "w", "x", "y"):
            k = getattr(self, f"k_{axis}")
            if not isinstance(k, (int, np.integer)) or k < 1:
                raise ValidationError(f"k_{axis} must be a positive integer, got {k!r}")
            labels = getattr(self, f"labels_{axis}")
            if labels is not None:
                labels = tuple(labels)
                object.__setattr__(self, f"labels_{axis}", labels)
                if len(labels) != k:
                    raise ValidationError(
                        f"labels_{axis} has {len(labels)} entries for cardinality {k}")
                if len(set(labels)) != len(labels):
                    raise ValidationError(f"labels_{axis} contains duplicates")

    def __eq__(self, other):
        if not isinstance(other, CategorySpec):
            return NotImplemented
        return all(
            getattr(self, f) == getattr(other, f)
            for f in ("k_e", "k_u", "k_w", "k_x", "k_y",
                      "labels_e", "labels_u", "labels_w", "labels_x", "labels_y"))


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """A validated column-stochastic matrix of conditional probabilities."""

    values: np.ndarray
    strict_positive: bool = False

    def __post_init__(self):
        m = _as_matrix(self.values).copy()
        report = validate_stochastic(m, strict_positive=self.strict_positive)
        if report is not None:
            raise ValidationError(report)
        _freeze(self, "values", m)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ProbVector:
    """A validated marginal pmf stored as a 1-d array."""

    values: np.ndarray
    strict_positive: bool = False

    def __post_init__(self):
        v = np.asarray(getattr(self.values, "values", self.values), dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValidationError("expected a non-empty 1-d probability vector")
        report = validate_stochastic(v[:, None], strict_positive=self.strict_positive)
        if report is not None:
            raise ValidationError(report)
        _freeze(self, "values", v.copy())

    def __len__(self) -> int:
        return self.values.size


def right_pseudoinverse(a, rank_tol: float = RANK_REL_TOL) -> np.ndarray:
    """Right pseudo-inverse of ``a`` computed through the SVD.

    For a matrix with linearly independent rows this satisfies
    ``a @ right_pseudoinverse(a) == I`` up to rounding.  Callers should check
    :func:`numeric_row_rank` first; a numerically singular system (smallest
    over largest singular value below ``rank_tol``) raises
    :class:`SingularMatrixError`.
    """
    m = _as_matrix(a)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s[0] <= 0.0 or s[-1] / s[0] < rank_tol:
        raise SingularMatrixError(
            f"singular system: singular-value ratio {s[-1] / s[0] if s[0] > 0 else 0.0:.3e} "
            f"below tolerance {rank_tol:.1e}")
    return (vt.T / s) @ u.T


def condition_number(a) -> float:
    """Ratio of the extreme singular values of ``a``.

    ``sigma_min`` is the smallest of the first ``min(rows, cols)`` singular
    values.  Returns ``inf`` when the matrix is numerically rank-deficient
    (``sigma_min`` below an absolute floor of 1e-300 or a relative cutoff of
    1e-12 times ``sigma_max``), so exactly-dependent rows or columns report
    an infinite condition number rather than a rounding artefact.
    """
    m = _as_matrix(a)
    s = np.linalg.svd(m, compute_uv=False)
    s_max, s_min = float(s[0]), float(s[-1])
    if s_min < max(1e-300, _SINGULAR_REL_CUTOFF * s_max):
        return float("inf")
    return s_max / s_min


def numeric_row_rank(a, rel_tol: float = RANK_REL_TOL) -> int:
    """Number of singular values of ``a`` at least ``rel_tol * sigma_max``."""
    m = _as_matrix(a)
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s >= rel_tol * s[0]))
