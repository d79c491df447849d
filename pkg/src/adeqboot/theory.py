"""Theoretical coverage and adequate size under the quadratic KL approximation.

A distortion x = (x1, x2) of the data model splits into ``m`` in-family
directions and ``k`` out-of-family directions with Fisher blocks H11, H12,
H22.  The adequate bootstrap covers the true in-family point when
``c_m A^2 >= c_k B^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import standard_normal_boundaries
from .statdist import Sampler, chi2_quantile, f_cdf

COND_LIMIT = 1e12
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class TheoryError(ValueError):
    pass


def _spd_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    if np.linalg.cond(A) > COND_LIMIT:
        raise TheoryError("H11 is numerically singular (condition number > 1e12)")
    L = np.linalg.cholesky(A)
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


@dataclass(frozen=True)
class FisherBlocks:
    H11: np.ndarray
    H12: np.ndarray
    H22: np.ndarray

    def __post_init__(self):
        H11 = np.atleast_2d(np.asarray(self.H11, dtype=float))
        H22 = np.atleast_2d(np.asarray(self.H22, dtype=float))
        H12 = np.asarray(self.H12, dtype=float).reshape(H11.shape[0], H22.shape[0])
        if H11.shape[0] != H11.shape[1] or H22.shape[0] != H22.shape[1]:
            raise TheoryError("diagonal blocks must be square")
        if not np.allclose(H11, H11.T) or not np.allclose(H22, H22.T):
            raise TheoryError("diagonal blocks must be symmetric")
        if np.any(np.linalg.eigvalsh(H11) <= 0):
            raise TheoryError("H11 must be positive definite")
        object.__setattr__(self, "H11", H11)
        object.__setattr__(self, "H12", H12)
        object.__setattr__(self, "H22", H22)

    @classmethod
    def from_matrix(cls, H, m: int) -> "FisherBlocks":
        H = np.asarray(H, dtype=float)
        return cls(H[:m, :m], H[:m, m:], H[m:, m:])

    @property
    def m(self) -> int:
        return self.H11.shape[0]

    @property
    def k(self) -> int:
        return self.H22.shape[0]

    @property
    def H21(self) -> np.ndarray:
        return self.H12.T

    def full(self) -> np.ndarray:
        return np.block([[self.H11, self.H12], [self.H21, self.H22]])

    def projection(self) -> np.ndarray:
        """H21 H11^-1 H12."""
        return self.H21 @ _spd_solve(self.H11, self.H12)

    def schur(self) -> np.ndarray:
        """H22 - H21 H11^-1 H12."""
        return self.H22 - self.projection()


@dataclass(frozen=True)
class DivergencePair:
    a2: float
    b2: float


def divergences(blocks: FisherBlocks, x1, x2) -> DivergencePair:
    """A^2 (distance to the best in-family model) and B^2 (its distance to the truth)."""
    x1 = np.asarray(x1, dtype=float).reshape(blocks.m)
    x2 = np.asarray(x2, dtype=float).reshape(blocks.k)
    h = blocks.H12 @ x2
    w = _spd_solve(blocks.H11, h)
    cross = float(h @ w)
    a2 = float(x2 @ blocks.H22 @ x2) - cross
    b2 = float(x1 @ blocks.H11 @ x1) + 2.0 * float(x1 @ h) + cross
    # rounding can push a zero form just below 0
    return DivergencePair(max(a2, 0.0), max(b2, 0.0))


def is_covered(pair: DivergencePair, c_m: float, c_k: float) -> bool:
    if pair.a2 == 0.0:
        return True
    return c_m * pair.a2 >= c_k * pair.b2


def coverage_fisher(m: int, k: int, adequacy_alpha: float = 0.05, ci_level: float = 0.95) -> float:
    """Coverage when H is the identity and the distortion is isotropic normal.

    ``P(F(m, k) <= k c_m / (m c_k))``.
    """
    if m < 1 or k < 1:
        raise TheoryError("m and k must be at least 1")
    c_m = chi2_quantile(ci_level, m)
    c_k = chi2_quantile(1.0 - adequacy_alpha, k)
    return f_cdf(k * c_m / (m * c_k), m, k)


def coverage_table(max_m: int = 9, max_k: int = 9, adequacy_alpha: float = 0.05, ci_level: float = 0.95) -> np.ndarray:
    """Rows k = 1..max_k, columns m = 1..max_m."""
    if max_m < 1 or max_k < 1:
        raise TheoryError("table dimensions must be positive")
    return np.array(
        [[coverage_fisher(m, k, adequacy_alpha, ci_level) for m in range(1, max_m + 1)] for k in range(1, max_k + 1)]
    )


def coverage_table_tsv(table: np.ndarray) -> str:
    max_k, max_m = table.shape
    rows = ["k\\m\t" + "\t".join(str(m) for m in range(1, max_m + 1))]
    for k in range(max_k):
        rows.append(f"{k + 1}\t" + "\t".join(f"{v:.3f}" for v in table[k]))
    return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class CoverageEstimate:
    coverage: float
    se: float
    reps: int


def coverage_general(
    blocks: FisherBlocks,
    distortion: Callable[[Sampler], tuple],
    adequacy_alpha: float = 0.05,
    ci_level: float = 0.95,
    mc_reps: int = 10000,
    sampler: Sampler | None = None,
    k_df: int | None = None,
) -> CoverageEstimate:
    """Monte Carlo frequency of ``c_m A^2 >= c_k B^2`` over random distortions.

    ``distortion(sampler)`` returns one ``(x1, x2)``.  ``k_df`` overrides the
    degrees of freedom of the adequacy critical value (defaults to k).
    """
    if mc_reps < 1000:
        raise TheoryError("mc_reps must be at least 1000")
    sampler = sampler or Sampler(np.random.default_rng(0))
    c_m = chi2_quantile(ci_level, blocks.m)
    c_k = chi2_quantile(1.0 - adequacy_alpha, k_df or blocks.k)
    hits = 0
    for _ in range(mc_reps):
        x1, x2 = distortion(sampler)
        hits += is_covered(divergences(blocks, x1, x2), c_m, c_k)
    p = hits / mc_reps
    return CoverageEstimate(p, math.sqrt(p * (1 - p) / mc_reps), mc_reps)


# ---------------------------------------------------------------------------
# Sampling-bias specialisation
# ---------------------------------------------------------------------------


def _edge(c: float) -> float:
    return 0.0 if math.isinf(c) else c * math.exp(-c * c / 2.0)


def sampling_bias_hessian(J: int) -> FisherBlocks:
    """Fisher information at sigma = 1, p_i = 1 with equiprobable classes.

    Parameters are (sigma; p_1..p_J).
    """
    if J < 2:
        raise TheoryError("J must be at least 2")
    c = standard_normal_boundaries(J)
    H12 = np.array([[_INV_SQRT_2PI * (_edge(c[i]) - _edge(c[i + 1])) for i in range(J)]])
    H22 = np.eye(J) / J - np.ones((J, J)) / J**2
    return FisherBlocks(np.array([[2.0]]), H12, H22)


def sampling_bias_projection(J: int) -> float:
    """The scalar H12 H21 / H11."""
    b = sampling_bias_hessian(J)
    return float((b.H12 @ b.H21)[0, 0]) / float(b.H11[0, 0])


def schur_eigen_coefficient(J: int) -> float:
    """Schur-complement eigenvalue along H21: 1/J - H12 H21 / H11.

    The other nonzero eigenvalues equal 1/J (multiplicity J - 2) and the
    all-ones direction has eigenvalue 0.
    """
    return 1.0 / J - sampling_bias_projection(J)


def sampling_bias_coverage(J: int, alpha: float = 0.05) -> float:
    """Theoretical coverage for sigma under random log-normal inclusion weights.

    ``1 - P(F(J-2, 1) <= t)`` with
    ``t = (J (c_{J-1} + c_1) H12 H21 / H11 - c_1) / ((J - 2) c_1)``.
    """
    if J < 3:
        raise TheoryError("J must be at least 3")
    c1 = chi2_quantile(1.0 - alpha, 1)
    ck = chi2_quantile(1.0 - alpha, J - 1)
    q = sampling_bias_projection(J)
    t = (J * (ck + c1) * q - c1) / ((J - 2) * c1)
    if t <= 0:
        return 1.0
    return 1.0 - f_cdf(t, J - 2, 1)


def sampling_bias_theoretical_size(J: int, x2, alpha: float = 0.05) -> float:
    """``c_{J-1} / (x2' S x2)`` with S the Schur complement; inf along the null direction.

    ``x2`` is the distortion of the inclusion weights; with weights
    ``p_i = exp(x2_i)`` it is ``log p``, invariant to rescaling p.
    """
    x2 = np.asarray(x2, dtype=float)
    S = sampling_bias_hessian(J).schur()
    q = float(x2 @ S @ x2)
    if q <= 1e-14 * max(float(x2 @ x2), 1e-300):
        return math.inf
    return chi2_quantile(1.0 - alpha, J - 1) / q


LIMIT_KS = (100, 1000, 10000)


def coverage_limit_series(m: int, adequacy_alpha: float = 0.05, ci_level: float = 0.95) -> dict[int, float]:
    return {k: coverage_fisher(m, k, adequacy_alpha, ci_level) for k in LIMIT_KS}


def coverage_limit_check(m: int) -> float:
    """Coverage at k = 10^4, which should approach the nominal 0.95."""
    return coverage_limit_series(m)[LIMIT_KS[-1]]
