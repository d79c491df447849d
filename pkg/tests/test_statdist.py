import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from adeqboot.statdist import (
    DomainError,
    Sampler,
    binomial_cdf,
    binomial_quantile,
    chi2_cdf,
    chi2_quantile,
    f_cdf,
    noncentral_chi2_cdf,
    noncentral_chi2_median_lambda,
    normal_cdf,
    normal_quantile,
    regularized_beta,
    regularized_gamma_p,
)


class TestNormal:
    @pytest.mark.parametrize("x", [-8.0, -3.0, -1.0, 0.0, 0.5, 2.0, 6.0])
    def test_cdf_matches_scipy(self, x):
        assert normal_cdf(x) == pytest.approx(stats.norm.cdf(x), rel=1e-12, abs=1e-300)

    @pytest.mark.parametrize("p", [1e-10, 0.001, 0.01, 0.3, 0.5, 0.8, 0.99, 1 - 1e-9])
    def test_quantile_matches_scipy(self, p):
        assert normal_quantile(p) == pytest.approx(stats.norm.ppf(p), abs=1e-9)

    def test_quantile_at_one_percent(self):
        assert normal_quantile(0.01) == pytest.approx(-2.3263478740, abs=1e-9)

    def test_quantile_domain(self):
        with pytest.raises(DomainError):
            normal_quantile(0.0)
        with pytest.raises(DomainError):
            normal_quantile(1.5)


class TestGammaAndChi2:
    @pytest.mark.parametrize("a,x", [(0.5, 0.1), (1, 1), (2.5, 3), (10, 4), (10, 25), (50, 49)])
    def test_incomplete_gamma_against_mpmath(self, a, x):
        ref = float(mpmath.gammainc(a, 0, x, regularized=True))
        assert regularized_gamma_p(a, x) == pytest.approx(ref, rel=1e-10)

    @pytest.mark.parametrize("df", [1, 2, 3, 4, 8, 30])
    def test_quantile_inverts_cdf(self, df):
        for p in (0.05, 0.5, 0.95, 0.999):
            q = chi2_quantile(p, df)
            assert q == pytest.approx(stats.chi2.ppf(p, df), rel=1e-9)
            assert chi2_cdf(q, df) == pytest.approx(p, abs=1e-10)

    def test_critical_value_one_df(self):
        assert chi2_quantile(0.95, 1) == pytest.approx(3.841458821, abs=1e-8)

    def test_cdf_by_quadrature(self):
        # independent oracle: integrate the density directly
        for df, x in [(3, 2.0), (5, 11.0), (1, 0.3)]:
            dens = lambda t: t ** (df / 2 - 1) * math.exp(-t / 2) / (2 ** (df / 2) * math.gamma(df / 2))
            ref, _ = integrate.quad(dens, 0, x)
            assert chi2_cdf(x, df) == pytest.approx(ref, abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(df=st.integers(1, 40), x=st.floats(0.01, 200))
    def test_cdf_property_against_scipy(self, df, x):
        assert chi2_cdf(x, df) == pytest.approx(stats.chi2.cdf(x, df), abs=1e-10)


class TestNoncentral:
    @pytest.mark.parametrize("df,lam,x", [(1, 0.5, 2.0), (4, 3.0, 5.0), (9, 8.8, 16.9), (2, 40.0, 30.0), (9, 0.0, 16.9)])
    def test_cdf_matches_scipy(self, df, lam, x):
        ref = stats.chi2.cdf(x, df) if lam == 0 else stats.ncx2.cdf(x, df, lam)
        assert noncentral_chi2_cdf(x, df, lam) == pytest.approx(ref, abs=1e-10)

    def test_cdf_monte_carlo(self):
        rng = np.random.default_rng(11)
        df, lam, x = 3, 5.0, 9.0
        mu = np.zeros(df)
        mu[0] = math.sqrt(lam)
        draws = ((rng.normal(size=(200_000, df)) + mu) ** 2).sum(axis=1)
        p = np.mean(draws <= x)
        se = math.sqrt(p * (1 - p) / len(draws))
        assert abs(noncentral_chi2_cdf(x, df, lam) - p) < 4 * se

    @pytest.mark.parametrize("df", range(1, 11))
    def test_median_lambda_hits_target(self, df):
        target = chi2_quantile(0.95, df)
        lam = noncentral_chi2_median_lambda(df, target)
        assert abs(noncentral_chi2_cdf(target, df, lam) - 0.5) <= 1e-8

    def test_median_lambda_df9(self):
        # frozen from an independent scipy root solve
        assert noncentral_chi2_median_lambda(9, chi2_quantile(0.95, 9)) == pytest.approx(8.8103794, abs=1e-6)

    def test_median_lambda_below_central_median(self):
        with pytest.raises(DomainError):
            noncentral_chi2_median_lambda(3, 1.0)


class TestBetaAndF:
    @pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2, 3, 0.4), (10, 1, 0.9), (0.5, 20, 0.01)])
    def test_regularized_beta_against_mpmath(self, a, b, x):
        ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
        assert regularized_beta(a, b, x) == pytest.approx(ref, rel=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(d1=st.integers(1, 20), d2=st.integers(1, 20), x=st.floats(0.001, 50))
    def test_f_cdf_against_scipy(self, d1, d2, x):
        assert f_cdf(x, d1, d2) == pytest.approx(stats.f.cdf(x, d1, d2), abs=1e-10)

    def test_f_one_one_symmetry(self):
        assert f_cdf(1.0, 1, 1) == pytest.approx(0.5, abs=1e-14)


class TestBinomial:
    def test_cdf_matches_scipy(self):
        for k in (0, 3, 10, 17, 40):
            assert binomial_cdf(k, 1000, 0.01) == pytest.approx(stats.binom.cdf(k, 1000, 0.01), abs=1e-12)

    def test_quantile_interval_for_var(self):
        assert binomial_quantile(0.025, 1000, 0.01) == 4
        assert binomial_quantile(0.975, 1000, 0.01) == 17

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(1, 300), p=st.floats(0.01, 0.99), u=st.floats(0.001, 0.999))
    def test_quantile_is_smallest_k(self, n, p, u):
        k = binomial_quantile(u, n, p)
        assert binomial_cdf(k, n, p) >= u - 1e-12
        if k > 0:
            assert binomial_cdf(k - 1, n, p) < u + 1e-12


class TestSampler:
    def test_pareto_tail(self):
        s = Sampler(np.random.default_rng(3))
        x = s.pareto1(2.0, 1.5, 100_000)
        assert x.min() >= 1.5
        assert np.mean(x > 3.0) == pytest.approx(0.25, abs=0.006)

    def test_seeded_reproducible(self):
        a = Sampler(np.random.default_rng(9)).normal(0, 1, 5)
        b = Sampler(np.random.default_rng(9)).normal(0, 1, 5)
        assert np.array_equal(a, b)
