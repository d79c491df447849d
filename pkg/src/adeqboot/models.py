"""Parametric families used by the adequate bootstrap.

Every family exposes the same surface:

    fit(data) -> params
    loglik(data, params) -> float
    cdf(x, params), quantile(u, params)
    class_probs(boundaries, params)
    simulate(n, params, sampler)
    params_of_interest(params) -> dict[str, float]

plus ``n_params`` (identifiable free parameters) and ``support``.  Simple
families use ``dict`` params; the sampling-bias family has its own
dataclass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adequacy import GroupedData
from .statdist import (
    Sampler,
    binomial_quantile,
    normal_cdf,
    normal_quantile,
)

_LOG_2PI = math.log(2.0 * math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class FitError(RuntimeError):
    """A family could not be fitted to the supplied data."""


_phi = np.vectorize(normal_cdf, otypes=[float])


def _std_quantiles(u) -> np.ndarray:
    return np.array([normal_quantile(float(v)) for v in np.atleast_1d(u)])


def _as_sample(data) -> np.ndarray:
    if isinstance(data, GroupedData):
        raise FitError("this family needs individual observations, not grouped data")
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise FitError("need a nonempty one-dimensional sample")
    return x


class ModelFamily:
    name = "family"
    n_params = 1
    support = (-math.inf, math.inf)

    def fit(self, data):
        raise NotImplementedError

    def loglik(self, data, params) -> float:
        raise NotImplementedError

    def cdf(self, x, params):
        raise NotImplementedError

    def quantile(self, u, params):
        raise NotImplementedError

    def class_probs(self, boundaries, params) -> np.ndarray:
        return np.diff(np.asarray(self.cdf(np.asarray(boundaries, dtype=float), params)))

    def simulate(self, n: int, params, sampler: Sampler):
        return self.quantile(sampler.uniform(n), params)

    def params_of_interest(self, params) -> dict[str, float]:
        return {k: float(v) for k, v in params.items()}


# ---------------------------------------------------------------------------
# Normal families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalKnownVariance(ModelFamily):
    """Normal with known standard deviation; the mean is estimated."""

    sigma: float = 1.0
    name = "normal-mean"
    n_params = 1

    def fit(self, data):
        return {"mean": float(np.mean(_as_sample(data)))}

    def loglik(self, data, params):
        x = _as_sample(data)
        r = x - params["mean"]
        n = len(x)
        return float(-np.dot(r, r) / (2 * self.sigma**2) - n * math.log(self.sigma) - 0.5 * n * _LOG_2PI)

    def cdf(self, x, params):
        return _phi((np.asarray(x, dtype=float) - params["mean"]) / self.sigma)

    def quantile(self, u, params):
        return params["mean"] + self.sigma * _std_quantiles(u)

    def simulate(self, n, params, sampler):
        return sampler.normal(params["mean"], self.sigma, n)


@dataclass(frozen=True)
class NormalKnownMean(ModelFamily):
    """Normal with known mean; the standard deviation is estimated."""

    mean: float = 0.0
    name = "normal-sigma"
    n_params = 1

    def fit(self, data):
        x = _as_sample(data) - self.mean
        s = math.sqrt(float(np.dot(x, x)) / len(x))
        if s == 0.0:
            raise FitError("all observations equal the known mean; sigma MLE is 0")
        return {"sigma": s}

    def loglik(self, data, params):
        x = _as_sample(data) - self.mean
        s = params["sigma"]
        n = len(x)
        return float(-np.dot(x, x) / (2 * s * s) - n * math.log(s) - 0.5 * n * _LOG_2PI)

    def cdf(self, x, params):
        return _phi((np.asarray(x, dtype=float) - self.mean) / params["sigma"])

    def quantile(self, u, params):
        return self.mean + params["sigma"] * _std_quantiles(u)

    def simulate(self, n, params, sampler):
        return sampler.normal(self.mean, params["sigma"], n)


# ---------------------------------------------------------------------------
# Log-normal with Value at Risk
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogNormal(ModelFamily):
    """Log-normal; reports the lower ``1 - var_level`` quantile as ``var``."""

    var_level: float = 0.99
    name = "lognormal"
    n_params = 2
    support = (0.0, math.inf)

    def fit(self, data):
        x = _as_sample(data)
        if np.any(x <= 0):
            raise FitError("log-normal needs strictly positive observations")
        y = np.log(x)
        mu = float(np.mean(y))
        sigma = math.sqrt(float(np.mean((y - mu) ** 2)))
        return {"mu": mu, "sigma": sigma}

    def loglik(self, data, params):
        x = _as_sample(data)
        if np.any(x <= 0):
            return -math.inf
        y = np.log(x)
        s = params["sigma"]
        n = len(x)
        r = y - params["mu"]
        return float(-np.dot(r, r) / (2 * s * s) - n * math.log(s) - 0.5 * n * _LOG_2PI - y.sum())

    def cdf(self, x, params):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.where(x > 0, x, 0.0)) - params["mu"]) / params["sigma"]
        return np.where(x > 0, _phi(z), 0.0)

    def quantile(self, u, params):
        return np.exp(params["mu"] + params["sigma"] * _std_quantiles(u))

    def simulate(self, n, params, sampler):
        return sampler.lognormal(params["mu"], params["sigma"], n)

    def value_at_risk(self, params) -> float:
        z = normal_quantile(1.0 - self.var_level)
        return math.exp(params["mu"] + params["sigma"] * z)

    def params_of_interest(self, params):
        return {"mu": params["mu"], "sigma": params["sigma"], "var": self.value_at_risk(params)}


def var99(params) -> float:
    """99% Value at Risk (1st percentile) of a fitted log-normal."""
    return LogNormal(0.99).value_at_risk(params)


# ---------------------------------------------------------------------------
# Type-1 Pareto
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pareto1(ModelFamily):
    """Type-1 Pareto with survival ``(x / eta) ** -alpha`` and known ``eta``."""

    eta: float = 1.0
    name = "pareto"
    n_params = 1

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def support(self):
        return (self.eta, math.inf)

    def fit(self, data):
        x = _as_sample(data)
        if np.any(x < self.eta):
            raise FitError(f"observations below the lower limit eta={self.eta}")
        s = float(np.sum(np.log(x / self.eta)))
        if s <= 0:
            raise FitError("every observation equals eta; alpha MLE is unbounded")
        return {"alpha": len(x) / s}

    def loglik(self, data, params):
        x = _as_sample(data)
        if np.any(x < self.eta):
            return -math.inf
        a = params["alpha"]
        n = len(x)
        return float(n * math.log(a) + n * a * math.log(self.eta) - (a + 1) * np.log(x).sum())

    def survival(self, x, params):
        x = np.asarray(x, dtype=float)
        a = params["alpha"]
        with np.errstate(divide="ignore", over="ignore"):
            s = np.where(x <= self.eta, 1.0, (np.maximum(x, self.eta) / self.eta) ** (-a))
        return s

    def cdf(self, x, params):
        return 1.0 - self.survival(x, params)

    def quantile(self, u, params):
        u = np.asarray(u, dtype=float)
        return self.eta * (1.0 - u) ** (-1.0 / params["alpha"])

    def simulate(self, n, params, sampler):
        return sampler.pareto1(params["alpha"], self.eta, n)


def _log_ratio(x, eta):
    return math.inf if math.isinf(x) else math.log(x / eta)


@dataclass(frozen=True)
class Pareto1Grouped(Pareto1):
    """Type-1 Pareto fitted to grouped counts by multinomial likelihood.

    If the classes do not reach +inf the likelihood is conditional on the
    covered range.
    """

    name = "pareto-grouped"

    def _terms(self, data: GroupedData):
        if not isinstance(data, GroupedData):
            raise FitError("pareto-grouped needs grouped data")
        if data.boundaries[0] < self.eta * (1 - 1e-12):
            raise FitError(f"classes start below the lower limit eta={self.eta}")
        L = np.array([_log_ratio(max(c, self.eta), self.eta) for c in data.boundaries])
        return L, data.counts.astype(float)

    @staticmethod
    def _loglik_alpha(a, L, counts):
        # S(x) = exp(-a L); S(inf) = 0
        S = np.exp(-a * L)
        diff = S[:-1] - S[1:]
        total = S[0] - S[-1]
        occ = counts > 0
        if np.any(diff[occ] <= 0):
            return -math.inf
        return float(np.sum(counts[occ] * np.log(diff[occ])) - counts.sum() * math.log(total))

    @staticmethod
    def _derivs(a, L, counts):
        S = np.exp(-a * L)
        Lf = np.where(np.isinf(L), 0.0, L)
        LS = Lf * S
        L2S = Lf * Lf * S
        diff = S[:-1] - S[1:]
        occ = counts > 0
        d1 = (-LS[:-1] + LS[1:])[occ] / diff[occ]
        d2 = (L2S[:-1] - L2S[1:])[occ] / diff[occ] - d1**2
        tot = S[0] - S[-1]
        t1 = (-LS[0] + LS[-1]) / tot
        t2 = (L2S[0] - L2S[-1]) / tot - t1**2
        n = counts.sum()
        c = counts[occ]
        return float(np.sum(c * d1) - n * t1), float(np.sum(c * d2) - n * t2)

    def fit(self, data):
        L, counts = self._terms(data)
        occupied = np.nonzero(counts > 0)[0]
        last_open = math.isinf(L[-1])
        if occupied[-1] == 0:
            raise FitError("all mass in the first class; alpha MLE is unbounded")
        if last_open and occupied[0] == len(counts) - 1:
            raise FitError("all mass in the open last class; alpha MLE is 0")

        f = lambda a: self._loglik_alpha(a, L, counts)  # noqa: E731
        # bracket on log alpha, then golden section, then Newton polish
        lo, hi = math.log(1e-6), math.log(1e3)
        g = (math.sqrt(5) - 1) / 2
        a_, b_ = lo, hi
        c_ = b_ - g * (b_ - a_)
        d_ = a_ + g * (b_ - a_)
        fc, fd = f(math.exp(c_)), f(math.exp(d_))
        for _ in range(200):
            if fc >= fd:
                b_, d_, fd = d_, c_, fc
                c_ = b_ - g * (b_ - a_)
                fc = f(math.exp(c_))
            else:
                a_, c_, fc = c_, d_, fd
                d_ = a_ + g * (b_ - a_)
                fd = f(math.exp(d_))
            if b_ - a_ < 1e-9:
                break
        a = math.exp(0.5 * (a_ + b_))
        for _ in range(50):
            d1, d2 = self._derivs(a, L, counts)
            if not d2 < 0:
                break
            step = d1 / d2
            a_new = a - step
            if not a_new > 0 or f(a_new) < f(a) - 1e-12:
                break
            a = a_new
            if abs(step) < 1e-12 * max(1.0, a):
                break
        if math.isclose(a, math.exp(hi), rel_tol=1e-3) or math.isclose(a, math.exp(lo), rel_tol=1e-3):
            raise FitError("grouped Pareto MLE ran to the edge of the search range")
        return {"alpha": a}

    def loglik(self, data, params):
        L, counts = self._terms(data)
        return self._loglik_alpha(params["alpha"], L, counts)

    def class_probs(self, boundaries, params):
        S = self.survival(np.asarray(boundaries, dtype=float), params)
        return S[:-1] - S[1:]


# ---------------------------------------------------------------------------
# Sampling-bias family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingBiasParams:
    """Normal scale plus relative inclusion weights on fixed classes.

    Weights are scale-free; the fitted point uses ``p_i = n_i / T_i``, so an
    empty class gets weight 0.
    """

    sigma: float
    p: np.ndarray
    boundaries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if np.any(np.asarray(self.p) < 0):
            raise ValueError("inclusion weights must be nonnegative")


def _interval_prob(a: float, b: float) -> float:
    # P(a < Z <= b), using the upper tail when both ends are positive
    if a >= 0:
        return 0.5 * (math.erfc(a / math.sqrt(2.0)) - math.erfc(b / math.sqrt(2.0)))
    return normal_cdf(b) - normal_cdf(a)


def class_masses(sigma: float, boundaries) -> np.ndarray:
    """T_i(sigma) = P(c[i-1] < X <= c[i]) for X ~ N(0, sigma^2)."""
    c = [b / sigma for b in boundaries]
    return np.array([_interval_prob(c[i], c[i + 1]) for i in range(len(c) - 1)])


def _edge_terms(sigma: float, boundaries):
    g = []
    h = []
    s2 = sigma * sigma
    for c in boundaries:
        if math.isinf(c):
            g.append(0.0)
            h.append(0.0)
            continue
        e = math.exp(-c * c / (2 * s2))
        g.append(c * e / s2)
        h.append(c * (c * c - 2 * s2) * e / (s2 * s2 * sigma))
    return np.array(g), np.array(h)


def class_mass_derivatives(sigma: float, boundaries):
    """First and second derivatives of T_i with respect to sigma.

    Infinite boundaries contribute nothing (c exp(-c^2/2s^2) -> 0).
    """
    g, h = _edge_terms(sigma, boundaries)
    d1 = (g[:-1] - g[1:]) * _INV_SQRT_2PI
    d2 = (h[:-1] - h[1:]) * _INV_SQRT_2PI
    return d1, d2


def class_counts(x, boundaries) -> np.ndarray:
    inner = np.asarray(boundaries, dtype=float)[1:-1]
    return np.bincount(np.searchsorted(inner, x, side="left"), minlength=len(inner) + 1)


def profile_loglik(sigma: float, counts, sum_sq: float, boundaries) -> float:
    """Sampling-bias log-likelihood with the weights profiled out.

    ``-sum_sq/(2 sigma^2) - n log sigma - sum n_i log T_i(sigma)``, dropping
    terms free of sigma.  ``sum_sq`` is the sum of squared observations.
    """
    counts = np.asarray(counts)
    n = counts.sum()
    T = class_masses(sigma, boundaries)
    occ = counts > 0
    if np.any(T[occ] <= 0):
        raise FitError(f"an occupied class has zero mass at sigma={sigma}")
    return float(-sum_sq / (2 * sigma * sigma) - n * math.log(sigma) - np.sum(counts[occ] * np.log(T[occ])))


def profile_score(sigma: float, counts, sum_sq: float, boundaries):
    """Return (d/dsigma, d^2/dsigma^2) of :func:`profile_loglik`."""
    counts = np.asarray(counts)
    n = counts.sum()
    T = class_masses(sigma, boundaries)
    d1, d2 = class_mass_derivatives(sigma, boundaries)
    occ = counts > 0
    if np.any(T[occ] <= 0):
        raise FitError(f"an occupied class has zero mass at sigma={sigma}")
    c = counts[occ]
    r1 = d1[occ] / T[occ]
    score = sum_sq / sigma**3 - n / sigma - np.sum(c * r1)
    second = -3 * sum_sq / sigma**4 + n / sigma**2 + np.sum(c * (r1 * r1 - d2[occ] / T[occ]))
    return float(score), float(second)


def _safe_profile(sigma, counts, sum_sq, boundaries):
    try:
        return profile_loglik(sigma, counts, sum_sq, boundaries)
    except FitError:
        return -math.inf


def fit_sampling_bias_sigma(counts, sum_sq: float, boundaries, tol: float = 1e-10, max_iter: int = 100) -> float:
    """Newton's method on the profile likelihood, from the RMS start.

    Falls back to golden-section search on log sigma over
    ``(0, 100 * RMS]`` if Newton leaves that range or meets a non-negative
    second derivative.
    """
    counts = np.asarray(counts)
    n = counts.sum()
    if n == 0:
        raise FitError("empty sample")
    rms = math.sqrt(sum_sq / n)
    if rms == 0:
        raise FitError("all observations are zero")
    s = rms
    for _ in range(max_iter):
        try:
            score, second = profile_score(s, counts, sum_sq, boundaries)
        except FitError:
            break
        if not second < 0:
            break
        step = score / second
        s_new = s - step
        if not 0 < s_new <= 100 * rms:
            break
        s = s_new
        if abs(step) < tol:
            return s
    return _golden_sigma(counts, sum_sq, boundaries, rms)


def _golden_sigma(counts, sum_sq, boundaries, rms) -> float:
    f = lambda t: _safe_profile(math.exp(t), counts, sum_sq, boundaries)  # noqa: E731
    a, b = math.log(rms) - 14.0, math.log(100 * rms)
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(300):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
        if b - a < 1e-13:
            break
    s = math.exp(0.5 * (a + b))
    if not math.isfinite(f(math.log(s))):
        raise FitError("sampling-bias fit failed: profile likelihood is not finite near the optimum")
    # polish; keep the golden result if Newton misbehaves
    try:
        score, second = profile_score(s, counts, sum_sq, boundaries)
        if second < 0:
            s2 = s - score / second
            if 0 < s2 <= 100 * rms and f(math.log(s2)) >= f(math.log(s)):
                s = s2
    except FitError:
        pass
    return s


@dataclass(frozen=True)
class SamplingBias(ModelFamily):
    """N(0, sigma^2) observed through stepwise inclusion weights.

    ``boundaries`` c_0 < ... < c_J are fixed and known; the weights are
    identifiable only up to scale, so ``n_params = J`` (sigma + J - 1).
    """

    boundaries: tuple = ()
    name = "sampling-bias"

    def __post_init__(self):
        b = tuple(float(v) for v in self.boundaries)
        if len(b) < 2 or any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("boundaries must be strictly increasing with at least one class")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def equiprobable(cls, J: int) -> "SamplingBias":
        """Boundaries at the 100 i/J percentiles of N(0, 1)."""
        return cls(standard_normal_boundaries(J))

    @property
    def J(self) -> int:
        return len(self.boundaries) - 1

    @property
    def n_params(self) -> int:  # type: ignore[override]
        return self.J

    def fit(self, data) -> SamplingBiasParams:
        x = _as_sample(data)
        counts = class_counts(x, self.boundaries)
        sigma = fit_sampling_bias_sigma(counts, float(np.dot(x, x)), self.boundaries)
        T = class_masses(sigma, self.boundaries)
        p = np.where(counts > 0, counts / np.where(T > 0, T, 1.0), 0.0)
        return SamplingBiasParams(sigma, p, np.array(self.boundaries))

    def loglik(self, data, params: SamplingBiasParams) -> float:
        x = _as_sample(data)
        counts = class_counts(x, self.boundaries)
        s = params.sigma
        n = len(x)
        T = class_masses(s, self.boundaries)
        occ = counts > 0
        p = np.asarray(params.p, dtype=float)
        if np.any(p[occ] <= 0):
            return -math.inf
        base = -float(np.dot(x, x)) / (2 * s * s) - n * math.log(s) - 0.5 * n * _LOG_2PI
        return float(base + np.sum(counts[occ] * np.log(p[occ])) - n * math.log(np.dot(T, p)))

    def cdf(self, x, params: SamplingBiasParams):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.boundaries)
        p = np.asarray(params.p, dtype=float)
        s = params.sigma
        Fc = _phi(c / s)
        norm = float(np.dot(p, np.diff(Fc)))
        Fx = _phi(x / s)
        out = np.zeros_like(x, dtype=float)
        for i in range(self.J):
            lo, hi = Fc[i], Fc[i + 1]
            out = out + p[i] * np.clip(Fx, lo, hi) - p[i] * lo
        return out / norm

    def quantile(self, u, params):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        lo, hi = -50.0 * params.sigma, 50.0 * params.sigma
        out = []
        for v in u:
            a, b = lo, hi
            for _ in range(200):
                m = 0.5 * (a + b)
                if self.cdf(m, params) < v:
                    a = m
                else:
                    b = m
                if b - a < 1e-13 * max(1.0, abs(m)):
                    break
            out.append(0.5 * (a + b))
        return np.array(out)

    def simulate(self, n, params: SamplingBiasParams, sampler: Sampler):
        return biased_normal_sample(n, params.sigma, params.p, self.boundaries, sampler)

    def params_of_interest(self, params: SamplingBiasParams):
        return {"sigma": params.sigma}


def standard_normal_boundaries(J: int) -> tuple:
    if J < 1:
        raise ValueError("J must be at least 1")
    return (-math.inf, *(normal_quantile(i / J) for i in range(1, J)), math.inf)


def biased_normal_sample(n: int, sigma: float, p, boundaries, sampler: Sampler) -> np.ndarray:
    """Draw n points from N(0, sigma^2) kept with probability p_i / max(p)."""
    w = np.asarray(p, dtype=float)
    w = w / w.max()
    inner = np.asarray(boundaries, dtype=float)[1:-1]
    out: list[np.ndarray] = []
    have = 0
    accept = float(np.dot(w, class_masses(sigma, boundaries)))
    while have < n:
        m = int((n - have) / max(accept, 1e-3) * 1.1) + 16
        x = sampler.normal(0.0, sigma, m)
        keep = sampler.uniform(m) < w[np.searchsorted(inner, x, side="left")]
        x = x[keep]
        out.append(x)
        have += len(x)
    return np.concatenate(out)[:n]


# ---------------------------------------------------------------------------
# Order-statistic interval for a quantile
# ---------------------------------------------------------------------------


def nonparametric_percentile_ci(sample, q: float, coverage: float = 0.95) -> tuple[float, float]:
    """Distribution-free interval for the q-quantile from order statistics.

    With ``[n_l, n_u]`` the equal-tailed ``coverage`` interval of
    Binomial(n, q), returns ``(x_(n_l), x_(n_u + 1))``, clamped to the
    sample range.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if n < 1.0 / min(q, 1.0 - q):
        raise FitError(f"sample of {n} is too small for the {q} quantile (need {math.ceil(1 / min(q, 1 - q))})")
    n_l = binomial_quantile((1.0 - coverage) / 2.0, n, q)
    n_u = binomial_quantile((1.0 + coverage) / 2.0, n, q)
    lo_idx = min(max(n_l, 1), n)
    hi_idx = min(max(n_u + 1, 1), n)
    return float(x[lo_idx - 1]), float(x[hi_idx - 1])
