"""Distribution functions and seedable samplers.

Everything here is scalar, pure Python on top of :mod:`math`, except the
samplers which wrap :class:`numpy.random.Generator`.  Accuracy targets:

* normal, chi-square and F CDFs: absolute error below 1e-10 for df up to
  a few thousand;
* quantiles: ``|cdf(quantile(p)) - p| <= 1e-10`` (bracketed bisection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 20000


class DomainError(ValueError):
    """Argument outside the domain of a distribution function."""


@dataclass(frozen=True)
class DistAccuracy:
    abs_tol: float
    quantile_tol: float


ACCURACY = DistAccuracy(abs_tol=1e-10, quantile_tol=1e-10)


# ---------------------------------------------------------------------------
# Normal
# ---------------------------------------------------------------------------


def normal_cdf(x: float) -> float:
    """Standard normal CDF, defined on the extended reals."""
    if math.isnan(x):
        raise DomainError("normal_cdf of NaN")
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_pdf(x: float) -> float:
    if math.isinf(x):
        return 0.0
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


@lru_cache(maxsize=4096)
def normal_quantile(p: float) -> float:
    _check_prob(p)
    if p == 0.5:
        return 0.0
    # cdf is symmetric; solve in the lower tail where erfc keeps relative precision
    if p > 0.5:
        return -normal_quantile(1.0 - p)
    lo, hi = -40.0, 0.0
    return _bisect(normal_cdf, p, lo, hi)


# ---------------------------------------------------------------------------
# Incomplete gamma / chi-square
# ---------------------------------------------------------------------------


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError(f"gamma series did not converge (a={a}, x={x})")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    # modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"gamma continued fraction did not converge (a={a}, x={x})")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_p(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x)."""
    if a <= 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_p_series(a, x))
    return max(0.0, 1.0 - _gamma_q_contfrac(a, x))


def chi2_cdf(x: float, df: float) -> float:
    if df <= 0:
        raise DomainError(f"df must be positive, got {df}")
    if x < 0:
        raise DomainError(f"chi-square support is x >= 0, got {x}")
    return regularized_gamma_p(0.5 * df, 0.5 * x)


@lru_cache(maxsize=4096)
def chi2_quantile(p: float, df: float) -> float:
    _check_prob(p)
    if df <= 0:
        raise DomainError(f"df must be positive, got {df}")
    hi = max(1.0, 2.0 * df)
    while chi2_cdf(hi, df) < p:
        hi *= 2.0
    return _bisect(lambda x: chi2_cdf(x, df), p, 0.0, hi)


def noncentral_chi2_cdf(x: float, df: float, lam: float, tail_mass: float = 1e-12) -> float:
    """Non-central chi-square CDF as a Poisson(lam/2) mixture of central CDFs.

    Terms are summed outward from the Poisson mode until the neglected
    Poisson mass drops below ``tail_mass``.
    """
    if x < 0 or lam < 0:
        raise DomainError(f"need x >= 0 and lam >= 0, got x={x}, lam={lam}")
    if df <= 0:
        raise DomainError(f"df must be positive, got {df}")
    if x == 0:
        return 0.0
    if lam == 0:
        return chi2_cdf(x, df)
    mu = 0.5 * lam
    mode = int(mu)

    def weight(j: int) -> float:
        return math.exp(-mu + j * math.log(mu) - math.lgamma(j + 1.0))

    total = 0.0
    mass = 0.0
    j = mode
    while j >= 0:
        w = weight(j)
        total += w * chi2_cdf(x, df + 2 * j)
        mass += w
        j -= 1
        if w < tail_mass * 1e-3 and j < mode:
            break
    j = mode + 1
    while 1.0 - mass >= tail_mass:
        w = weight(j)
        total += w * chi2_cdf(x, df + 2 * j)
        mass += w
        j += 1
        if w == 0.0:
            break
    return min(1.0, max(0.0, total))


@lru_cache(maxsize=512)
def noncentral_chi2_median_lambda(df: float, target: float, tol: float = 1e-8) -> float:
    """Noncentrality whose distribution has median ``target``.

    The CDF at fixed x is strictly decreasing in lambda, so bisection on
    ``cdf(target, df, lam) - 0.5`` is well posed.
    """
    f0 = noncentral_chi2_cdf(target, df, 0.0)
    if f0 < 0.5 - tol:
        raise DomainError(
            f"target {target} is below the central chi-square median for df={df}; "
            "no nonnegative noncentrality has this median"
        )
    if abs(f0 - 0.5) <= tol:
        return 0.0
    lo, hi = 0.0, max(1.0, target)
    while noncentral_chi2_cdf(target, df, hi) > 0.5:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = noncentral_chi2_cdf(target, df, mid)
        if abs(fm - 0.5) <= tol * 0.01:
            return mid
        if fm > 0.5:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Incomplete beta / F
# ---------------------------------------------------------------------------


def _beta_contfrac(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise DomainError(f"beta parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_contfrac(a, b, x) / a
    return 1.0 - front * _beta_contfrac(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: float, d2: float) -> float:
    if d1 <= 0 or d2 <= 0:
        raise DomainError(f"degrees of freedom must be positive, got {d1}, {d2}")
    if x < 0:
        raise DomainError(f"F support is x >= 0, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    # I_{d1 x / (d1 x + d2)}(d1/2, d2/2), written to avoid cancellation near 1
    z = d1 * x
    return regularized_beta(0.5 * d1, 0.5 * d2, z / (z + d2))


# ---------------------------------------------------------------------------
# Binomial
# ---------------------------------------------------------------------------


def binomial_cdf(k: int, n: int, p: float) -> float:
    """P(X <= k) for X ~ Binomial(n, p), by direct log-space summation."""
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    if p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 0.0
    lp, lq = math.log(p), math.log1p(-p)
    lgn = math.lgamma(n + 1.0)
    terms = [
        lgn - math.lgamma(j + 1.0) - math.lgamma(n - j + 1.0) + j * lp + (n - j) * lq
        for j in range(k + 1)
    ]
    top = max(terms)
    return min(1.0, math.exp(top) * math.fsum(math.exp(t - top) for t in terms))


def binomial_quantile(u: float, n: int, p: float) -> int:
    """Smallest k with P(X <= k) >= u."""
    _check_prob(u)
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if binomial_cdf(mid, n, p) >= u:
            hi = mid
        else:
            lo = mid + 1
    return lo


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _check_prob(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie strictly inside (0, 1), got {p}")


def _bisect(cdf, p: float, lo: float, hi: float) -> float:
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4e-16 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


class Sampler:
    """Seedable source of the random variates the simulations need.

    One sampler per consumer; do not share across threads.
    """

    def __init__(self, rng: np.random.Generator | int | None = None):
        if isinstance(rng, np.random.Generator):
            self.rng = rng
        else:
            self.rng = np.random.default_rng(rng)

    def normal(self, mu: float = 0.0, sigma: float = 1.0, size=None):
        if sigma <= 0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        return self.rng.normal(mu, sigma, size)

    def lognormal(self, mu: float = 0.0, sigma: float = 1.0, size=None):
        if sigma <= 0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        return self.rng.lognormal(mu, sigma, size)

    def pareto1(self, alpha: float, eta: float = 1.0, size=None):
        """Type-1 Pareto with survival (x / eta) ** -alpha on x >= eta."""
        if alpha <= 0 or eta <= 0:
            raise DomainError(f"alpha and eta must be positive, got {alpha}, {eta}")
        u = 1.0 - self.rng.random(size)  # (0, 1]
        return eta * u ** (-1.0 / alpha)

    def bernoulli(self, p: float, size=None):
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {p}")
        return self.rng.random(size) < p

    def categorical(self, probs, size=None):
        probs = np.asarray(probs, dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("category probabilities must be nonnegative and sum to 1")
        return self.rng.choice(len(probs), size=size, p=probs)

    def uniform_int(self, n: int, size=None):
        """Uniform integers on 0..n-1."""
        if n < 1:
            raise DomainError(f"n must be >= 1, got {n}")
        return self.rng.integers(0, n, size)

    def uniform(self, size=None):
        return self.rng.random(size)
