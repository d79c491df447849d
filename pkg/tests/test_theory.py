import math

import numpy as np
import pytest
from scipy import stats

from adeqboot.statdist import Sampler, chi2_quantile
from adeqboot.theory import (
    FisherBlocks,
    TheoryError,
    coverage_fisher,
    coverage_general,
    coverage_limit_check,
    coverage_limit_series,
    coverage_table,
    coverage_table_tsv,
    divergences,
    sampling_bias_coverage,
    sampling_bias_hessian,
    sampling_bias_theoretical_size,
    schur_eigen_coefficient,
)


def random_blocks(rng, m=3, k=4):
    A = rng.normal(size=(m + k, m + k))
    return FisherBlocks.from_matrix(A @ A.T + 0.1 * np.eye(m + k), m)


class TestDivergences:
    def test_inside_family(self):
        b = random_blocks(np.random.default_rng(0))
        x1 = np.array([0.3, -1.0, 2.0])
        d = divergences(b, x1, np.zeros(4))
        assert d.a2 == 0.0
        assert d.b2 == pytest.approx(x1 @ b.H11 @ x1)

    def test_orthogonal(self):
        H22 = np.diag([1.0, 2.0])
        b = FisherBlocks(np.eye(2), np.zeros((2, 2)), H22)
        x2 = np.array([1.0, 3.0])
        d = divergences(b, np.zeros(2), x2)
        assert d.b2 == 0.0
        assert d.a2 == pytest.approx(x2 @ H22 @ x2)

    @pytest.mark.parametrize("seed", range(100))
    def test_direct_minimisation(self, seed):
        rng = np.random.default_rng(seed)
        b = random_blocks(rng)
        H = b.full()
        x1, x2 = rng.normal(size=3), rng.normal(size=4)
        x = np.concatenate([x1, x2])
        # minimise (x - (t, 0))' H (x - (t, 0)) over t by solving the normal equations
        t = np.linalg.solve(H[:3, :3], H[:3, :] @ x)
        r = x - np.concatenate([t, np.zeros(4)])
        d = divergences(b, x1, x2)
        assert d.a2 == pytest.approx(r @ H @ r, abs=1e-10 * max(1, abs(d.a2)))
        assert d.b2 == pytest.approx(t @ H[:3, :3] @ t, abs=1e-10 * max(1, d.b2))

    def test_singular_h11(self):
        b = FisherBlocks(np.diag([1.0, 1e-14]), np.zeros((2, 1)), np.eye(1))
        with pytest.raises(TheoryError):
            divergences(b, np.zeros(2), np.ones(1))


class TestCoverageFisher:
    @pytest.mark.parametrize("m,k,expected", [(1, 1, 0.500), (2, 3, 0.574), (1, 9, 0.813)])
    def test_table_cells(self, m, k, expected):
        assert coverage_fisher(m, k) == pytest.approx(expected, abs=5e-4)

    def test_matches_scipy(self):
        for m in range(1, 10):
            for k in range(1, 10):
                x = k * stats.chi2.ppf(0.95, m) / (m * stats.chi2.ppf(0.95, k))
                assert coverage_fisher(m, k) == pytest.approx(stats.f.cdf(x, m, k), abs=1e-10)

    def test_monotone(self):
        t = coverage_table()
        assert np.all(np.diff(t, axis=0) > 0)  # increasing in k
        assert np.all(np.diff(t, axis=1) < 0)  # decreasing in m

    def test_domain(self):
        with pytest.raises(TheoryError):
            coverage_fisher(0, 2)

    def test_tsv_shape(self):
        text = coverage_table_tsv(coverage_table(1, 1))
        assert text == "k\\m\t1\n1\t0.500\n"

    @pytest.mark.parametrize("m", [1, 5])
    def test_limit(self, m):
        assert coverage_limit_check(m) == pytest.approx(0.95, abs=0.01)
        vals = list(coverage_limit_series(m).values())
        assert vals == sorted(vals)


class TestCoverageGeneral:
    def test_identity_matches_fisher(self):
        b = FisherBlocks(np.eye(2), np.zeros((2, 3)), np.eye(3))
        est = coverage_general(b, lambda s: (s.normal(size=2), s.normal(size=3)), mc_reps=20000, sampler=Sampler(np.random.default_rng(1)))
        assert abs(est.coverage - coverage_fisher(2, 3)) < 3 * est.se

    def test_zero_distortion_covered(self):
        b = FisherBlocks(np.eye(1), np.zeros((1, 2)), np.eye(2))
        est = coverage_general(b, lambda s: (np.zeros(1), np.zeros(2)), mc_reps=1000)
        assert est.coverage == 1.0

    def test_x1_zero_enumeration(self):
        rng = np.random.default_rng(5)
        b = random_blocks(rng, 2, 3)
        draws = rng.normal(size=(1000, 3))
        it = iter(draws)
        est = coverage_general(b, lambda s: (np.zeros(2), next(it)), mc_reps=1000)
        c_m, c_k = chi2_quantile(0.95, 2), chi2_quantile(0.95, 3)
        P = b.projection()
        S = b.schur()
        ref = np.mean([c_m * (x @ S @ x) >= c_k * (x @ P @ x) for x in draws])
        assert est.coverage == ref

    def test_min_reps(self):
        b = FisherBlocks(np.eye(1), np.zeros((1, 1)), np.eye(1))
        with pytest.raises(TheoryError):
            coverage_general(b, lambda s: (np.zeros(1), np.zeros(1)), mc_reps=10)


class TestSamplingBiasTheory:
    @pytest.mark.parametrize("J", [3, 5, 8])
    def test_null_directions(self, J):
        b = sampling_bias_hessian(J)
        one = np.ones(J)
        assert b.H22 @ one == pytest.approx(np.zeros(J), abs=1e-15)
        assert b.H12 @ one == pytest.approx(np.zeros(1), abs=1e-15)

    @pytest.mark.parametrize("J", [3, 5, 8])
    def test_psd_single_zero_eigenvalue(self, J):
        b = sampling_bias_hessian(J)
        H = b.full()
        assert np.allclose(H, H.T)
        ev = np.linalg.eigvalsh(H)
        assert ev.min() > -1e-12
        assert np.sum(np.abs(ev) < 1e-10) == 1

    def test_eigen_coefficient_j5(self):
        assert schur_eigen_coefficient(5) == pytest.approx(0.1063486465, abs=1e-8)
        ev = np.sort(np.linalg.eigvalsh(sampling_bias_hessian(5).schur()))
        assert ev == pytest.approx([0.0, 0.1063486465, 0.2, 0.2, 0.2], abs=1e-9)

    def test_hessian_by_quadrature(self):
        # Fisher information is the score covariance; at sigma=1, p=1 the scores are
        # x^2 - 1 for sigma and 1{class i} - 1/J for p_i
        from scipy import integrate

        J = 4
        b = sampling_bias_hessian(J)
        c = [-math.inf, *stats.norm.ppf([0.25, 0.5, 0.75]), math.inf]
        for i in range(J):
            val, _ = integrate.quad(lambda x: (x * x - 1) * stats.norm.pdf(x), c[i], c[i + 1])
            assert b.H12[0, i] == pytest.approx(val, abs=1e-9)
        h11, _ = integrate.quad(lambda x: (x * x - 1) ** 2 * stats.norm.pdf(x), -math.inf, math.inf)
        assert b.H11[0, 0] == pytest.approx(h11)

    def test_coverage_j3_j8(self):
        assert sampling_bias_coverage(3) == pytest.approx(1.0, abs=1e-3)
        assert sampling_bias_coverage(8) == pytest.approx(0.868, abs=1e-3)

    def test_coverage_j5_formula_value(self):
        # the displayed formula evaluates to 0.8839 at J = 5
        assert sampling_bias_coverage(5) == pytest.approx(0.88389, abs=1e-4)

    def test_coverage_j5_monte_carlo_cross_check(self):
        b = sampling_bias_hessian(5)
        est = coverage_general(
            b,
            lambda s: (np.zeros(1), s.normal(size=5)),
            mc_reps=40000,
            sampler=Sampler(np.random.default_rng(8)),
            k_df=4,
        )
        assert abs(est.coverage - sampling_bias_coverage(5)) < 3 * est.se

    def test_domain(self):
        with pytest.raises(TheoryError):
            sampling_bias_coverage(2)

    def test_size_null_direction(self):
        assert sampling_bias_theoretical_size(5, np.ones(5) * 0.7) == math.inf

    def test_size_quarters_when_doubled(self):
        x = np.array([0.3, -0.1, 0.5, 0.0, -0.2])
        assert sampling_bias_theoretical_size(5, 2 * x) == pytest.approx(sampling_bias_theoretical_size(5, x) / 4)

    def test_size_distribution(self):
        rng = np.random.default_rng(10)
        c4 = chi2_quantile(0.95, 4)
        sizes = np.array([sampling_bias_theoretical_size(5, rng.normal(size=5)) for _ in range(10000)])
        ref = c4 / (0.1063486465 * rng.chisquare(1, 200000) + 0.2 * rng.chisquare(3, 200000))
        assert stats.ks_2samp(sizes, ref).statistic < 0.02
