"""Model-adequacy tests: Pearson chi-square and likelihood ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .statdist import chi2_quantile

PEARSON = "pearson"
LIKELIHOOD_RATIO = "likelihood_ratio"

# below this an expected class count makes the statistic meaningless
_MIN_EXPECTED = 1e-8
_LR_NEGATIVE_TOL = 1e-6


class AdequacyError(RuntimeError):
    """The adequacy test could not be evaluated."""


@dataclass(frozen=True)
class GroupedData:
    """Counts on contiguous classes ``(c[i-1], c[i]]``.

    ``boundaries`` may start at ``-inf`` and end at ``+inf``.
    """

    boundaries: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        c = np.asarray(self.counts)
        if b.ndim != 1 or len(b) < 2:
            raise ValueError("need at least two boundaries")
        if np.any(np.isnan(b)) or np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must be strictly increasing")
        if c.shape != (len(b) - 1,):
            raise ValueError(f"expected {len(b) - 1} counts, got {c.shape}")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise ValueError("counts must be nonnegative integers")
        c = c.astype(np.int64)
        if c.sum() <= 0:
            raise ValueError("grouped data must contain at least one observation")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return len(self.counts)

    def __len__(self) -> int:
        return self.n

    def with_counts(self, counts) -> "GroupedData":
        return GroupedData(self.boundaries, counts)

    def __eq__(self, other):
        if not isinstance(other, GroupedData):
            return NotImplemented
        return np.array_equal(self.boundaries, other.boundaries) and np.array_equal(
            self.counts, other.counts
        )


@dataclass(frozen=True)
class AdequacyOutcome:
    statistic: float
    df: int
    critical_value: float
    rejected: bool
    test_kind: str
    alpha: float


def _outcome(statistic: float, df: int, alpha: float, kind: str) -> AdequacyOutcome:
    crit = chi2_quantile(1.0 - alpha, df)
    return AdequacyOutcome(float(statistic), int(df), crit, bool(statistic > crit), kind, alpha)


# ---------------------------------------------------------------------------
# Classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassLayout:
    """How classes are cut for individual data.

    ``equiprobable``: K classes of model probability 1/K each.
    ``tails``: two tail classes of probability ``tail_prob`` and K-2 equal
    central classes.  The tails make the test sensitive to a handful of
    outliers, which equiprobable classes are not.
    """

    kind: str = "equiprobable"
    K: int = 10
    tail_prob: float = 0.001

    def __post_init__(self):
        if self.kind not in ("equiprobable", "tails"):
            raise ValueError(f"unknown class layout {self.kind!r}")
        if self.K < 2:
            raise ValueError("need at least two classes")
        if self.kind == "tails":
            if self.K < 3:
                raise ValueError("tail layout needs K >= 3")
            if not 0.0 < self.tail_prob < 0.5 / (self.K - 2 + 1):
                raise ValueError(f"tail_prob {self.tail_prob} too large for K={self.K}")

    def levels(self) -> np.ndarray:
        """Interior CDF levels, length K-1."""
        if self.kind == "equiprobable":
            return np.arange(1, self.K) / self.K
        q = self.tail_prob
        inner = q + (1.0 - 2.0 * q) * np.arange(1, self.K - 2) / (self.K - 2)
        return np.concatenate([[q], inner, [1.0 - q]])

    def probs(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.levels(), [1.0]]))


def equiprobable_classes(
    model_cdf: Callable[[float], float],
    K: int,
    support: tuple[float, float] = (-math.inf, math.inf),
) -> np.ndarray:
    """Boundaries cutting ``support`` into K classes of equal model probability.

    Returns K+1 boundaries including the support endpoints.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    return quantile_boundaries(model_cdf, np.arange(1, K) / K, support)


def quantile_boundaries(model_cdf, levels: Sequence[float], support) -> np.ndarray:
    lo, hi = support
    inner = [_invert(model_cdf, u, lo, hi) for u in levels]
    return np.array([lo, *inner, hi], dtype=float)


def _invert(cdf, u: float, lo: float, hi: float) -> float:
    a = lo if math.isfinite(lo) else -1.0
    b = hi if math.isfinite(hi) else 1.0
    if not math.isfinite(lo):
        step = 1.0
        while cdf(a) > u:
            a -= step
            step *= 2.0
            if step > 1e300:
                raise AdequacyError(f"could not bracket the {u} quantile from below")
    if not math.isfinite(hi):
        step = 1.0
        while cdf(b) < u:
            b += step
            step *= 2.0
            if step > 1e300:
                raise AdequacyError(f"could not bracket the {u} quantile from above")
    if a > b:
        a, b = b, a
    if not cdf(a) <= u <= cdf(b):
        raise AdequacyError(f"quantile {u} not bracketed on [{a}, {b}]")
    for _ in range(300):
        mid = 0.5 * (a + b)
        if cdf(mid) < u:
            a = mid
        else:
            b = mid
        if b - a <= 1e-15 * max(1.0, abs(mid)):
            break
    return 0.5 * (a + b)


def merge_sparse_classes(counts, probs, n: int, min_expected: float = 5.0):
    """Merge neighbouring classes until every expected count reaches ``min_expected``.

    Greedy from the left; a short final run is folded into its neighbour.
    """
    counts = np.asarray(counts)
    probs = np.asarray(probs, dtype=float)
    out_c: list[float] = []
    out_p: list[float] = []
    acc_c = 0
    acc_p = 0.0
    for c, p in zip(counts, probs):
        acc_c += c
        acc_p += p
        if n * acc_p >= min_expected:
            out_c.append(acc_c)
            out_p.append(acc_p)
            acc_c, acc_p = 0, 0.0
    if acc_p > 0 or acc_c > 0:
        if out_c:
            out_c[-1] += acc_c
            out_p[-1] += acc_p
        else:
            out_c.append(acc_c)
            out_p.append(acc_p)
    return np.asarray(out_c), np.asarray(out_p)


# ---------------------------------------------------------------------------
# Pearson
# ---------------------------------------------------------------------------


def pearson_statistic(counts, class_probs, n: int) -> float:
    counts = np.asarray(counts, dtype=float)
    p = np.asarray(class_probs, dtype=float)
    if np.any(p <= 0):
        raise AdequacyError("class probabilities must be strictly positive")
    expected = n * p
    return float(np.sum((counts - expected) ** 2 / expected))


def pearson_adequacy_test(
    data,
    family,
    alpha: float = 0.05,
    K: int = 10,
    param_source: str = "refit",
    params=None,
    layout: ClassLayout | None = None,
) -> AdequacyOutcome:
    """Pearson goodness-of-fit of ``family`` to ``data``.

    ``param_source='refit'`` fits the family to ``data`` and uses
    ``df = K - 1 - m`` (floored at 1); ``'fixed'`` uses the given ``params``
    and ``df = K - 1``.  Grouped data brings its own classes, with sparse
    classes merged until each expected count is at least 5.
    """
    if param_source == "refit":
        params = family.fit(data)
    elif param_source == "fixed":
        if params is None:
            raise ValueError("fixed parameter source needs params")
    else:
        raise ValueError(f"unknown param_source {param_source!r}")

    if isinstance(data, GroupedData):
        n = data.n
        probs = np.asarray(family.class_probs(data.boundaries, params), dtype=float)
        total = probs.sum()
        if total <= 0:
            raise AdequacyError("model puts no mass on the observed classes")
        counts, probs = merge_sparse_classes(data.counts, probs / total, n)
    else:
        x = np.asarray(data, dtype=float)
        n = len(x)
        if layout is None:
            layout = ClassLayout("equiprobable", K)
        inner = np.asarray(family.quantile(layout.levels(), params), dtype=float)
        counts = np.bincount(np.searchsorted(inner, x, side="left"), minlength=layout.K)
        probs = layout.probs()
    k_eff = len(counts)
    if np.any(n * probs < _MIN_EXPECTED):
        raise AdequacyError("an expected class count is below 1e-8")
    stat = pearson_statistic(counts, probs, n)
    if param_source == "refit":
        df = max(1, k_eff - 1 - family.n_params)
    else:
        df = max(1, k_eff - 1)
    return _outcome(stat, df, alpha, PEARSON)


# ---------------------------------------------------------------------------
# Likelihood ratio
# ---------------------------------------------------------------------------


def lr_adequacy_test(data, null_family, alt_family, alpha: float = 0.05) -> AdequacyOutcome:
    """Likelihood-ratio test of a family against a larger family containing it.

    ``df`` is the difference in identifiable parameter counts.
    """
    null_params = null_family.fit(data)
    alt_params = alt_family.fit(data)
    stat = 2.0 * (alt_family.loglik(data, alt_params) - null_family.loglik(data, null_params))
    if stat < -_LR_NEGATIVE_TOL:
        raise AdequacyError(
            f"likelihood ratio statistic {stat:.3g} < 0; the alternative fit did not converge"
        )
    stat = max(stat, 0.0)
    df = alt_family.n_params - null_family.n_params
    if df < 1:
        raise ValueError("alternative family must have more free parameters than the null")
    return _outcome(stat, df, alpha, LIKELIHOOD_RATIO)


# ---------------------------------------------------------------------------
# Test objects consumed by the engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PearsonTest:
    alpha: float = 0.05
    layout: ClassLayout = ClassLayout()
    param_source: str = "refit"

    kind = PEARSON

    def __call__(self, data, family, full_params=None) -> AdequacyOutcome:
        return pearson_adequacy_test(
            data,
            family,
            alpha=self.alpha,
            K=self.layout.K,
            param_source=self.param_source,
            params=full_params,
            layout=self.layout,
        )


@dataclass(frozen=True)
class LikelihoodRatioTest:
    alt_family: object
    alpha: float = 0.05

    kind = LIKELIHOOD_RATIO

    def __call__(self, data, family, full_params=None) -> AdequacyOutcome:
        return lr_adequacy_test(data, family, self.alt_family, self.alpha)
