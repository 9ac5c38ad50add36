import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from breg.asymptotics import (SpectralLimit, categorical_sigma, empirical_distributions,
                              empirical_law_check, jacobi_eigh, law_samples, limit_spectrum, mc_quantile,
                              psd_sqrt, subspace_spectrum, weighted_chi2_draws)
from breg.generators import BUILTINS, DomainError, make_builtin


def _make(name, d, rng=None):
    if name == "mahalanobis":
        rng = rng or np.random.default_rng(0)
        a = rng.normal(size=(d, d))
        return make_builtin(name, d, matrix=a @ a.T + 0.5 * np.eye(d))
    return make_builtin(name, d)


class TestJacobi:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 7), st.integers(0, 2**32 - 1))
    def test_matches_eigh(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(n, n))
        a = a + a.T
        w, v = jacobi_eigh(a)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-12 * max(1, np.abs(a).max()))
        np.testing.assert_allclose(a @ v, v * w, atol=1e-11 * max(1, np.abs(a).max()))
        np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-12)

    def test_rank_deficient(self):
        w, _ = jacobi_eigh(np.ones((4, 4)))
        np.testing.assert_allclose(w, [0, 0, 0, 4], atol=1e-14)

    def test_not_square(self):
        with pytest.raises(ValueError):
            jacobi_eigh(np.zeros((2, 3)))


class TestSigma:
    def test_two_point(self):
        sigma = categorical_sigma([0.5, 0.5])
        np.testing.assert_allclose(sigma, [[0.25, -0.25], [-0.25, 0.25]])
        np.testing.assert_allclose(np.linalg.eigvalsh(sigma), [0, 0.5], atol=1e-15)

    def test_uniform_three(self):
        np.testing.assert_allclose(np.linalg.eigvalsh(categorical_sigma(np.full(3, 1 / 3))),
                                   [0, 1 / 3, 1 / 3], atol=1e-15)

    def test_null_vector(self):
        p = np.random.default_rng(1).dirichlet(np.ones(5))
        np.testing.assert_allclose(categorical_sigma(p) @ np.ones(5), 0, atol=1e-15)

    def test_boundary_rejected(self):
        with pytest.raises(DomainError):
            categorical_sigma([1.0, 0.0, 0.0])

    def test_psd_sqrt(self):
        sigma = categorical_sigma([0.2, 0.3, 0.5])
        s = psd_sqrt(sigma)
        np.testing.assert_allclose(s @ s, sigma, atol=1e-15)
        np.testing.assert_allclose(s, s.T)


class TestSpectrum:
    def test_squared_l2_two_point(self):
        spec = limit_spectrum(make_builtin("squared_l2", 2), [0.5, 0.5])
        assert isinstance(spec, SpectralLimit)
        assert spec.rank == 1
        np.testing.assert_allclose(spec.eigenvalues, [1.0], atol=1e-12)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_neg_entropy_uniform(self, d):
        spec = limit_spectrum(make_builtin("neg_entropy", d), np.full(d, 1 / d))
        assert spec.rank == d - 1
        np.testing.assert_allclose(spec.eigenvalues, np.ones(d - 1), atol=1e-12)

    def test_neg_entropy_any_interior_p(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = int(rng.integers(2, 7))
            p = rng.dirichlet(np.ones(d))
            spec = limit_spectrum(make_builtin("neg_entropy", d), p)
            assert spec.rank == d - 1
            np.testing.assert_allclose(spec.eigenvalues, 1.0, atol=1e-9)

    @pytest.mark.parametrize("name", BUILTINS)
    def test_matches_nonsymmetric_route(self, name):
        rng = np.random.default_rng(3)
        for _ in range(10):
            d = int(rng.integers(2, 5))
            g = _make(name, d, rng)
            p = rng.dirichlet(np.ones(d)) * 0.9 + 0.1 / d
            spec = limit_spectrum(g, p)
            hs = spec.hessian @ spec.sigma
            ref = subspace_spectrum(hs)[: spec.rank]
            np.testing.assert_allclose(spec.eigenvalues, ref, rtol=1e-9, atol=1e-12)
            full = np.sort(np.linalg.eigvals(hs).real)[::-1][: spec.rank]
            np.testing.assert_allclose(spec.eigenvalues, full, rtol=1e-9)

    @pytest.mark.parametrize("name", ["neg_entropy", "itakura_saito", "exponential"])
    def test_permutation_invariant(self, name):
        rng = np.random.default_rng(4)
        for _ in range(20):
            p = rng.dirichlet(np.ones(5))
            perm = rng.permutation(5)
            g = make_builtin(name, 5)
            np.testing.assert_allclose(limit_spectrum(g, p).eigenvalues,
                                       limit_spectrum(g, p[perm]).eigenvalues, rtol=1e-9)

    def test_mahalanobis_permuted_matrix(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(4, 4))
        a = a @ a.T + np.eye(4)
        p = rng.dirichlet(np.ones(4))
        perm = rng.permutation(4)
        left = limit_spectrum(make_builtin("mahalanobis", 4, matrix=a), p).eigenvalues
        right = limit_spectrum(make_builtin("mahalanobis", 4, matrix=a[np.ix_(perm, perm)]), p[perm]).eigenvalues
        np.testing.assert_allclose(left, right, rtol=1e-9)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            limit_spectrum(make_builtin("squared_l2", 3), [0.5, 0.5])


class TestQuantile:
    def test_chi2_one(self):
        assert mc_quantile([1.0], 0.95, K=200000, seed=0) == pytest.approx(stats.chi2.ppf(0.95, 1), abs=0.05)

    def test_chi2_two(self):
        assert mc_quantile([1.0, 1.0], 0.95, K=200000, seed=0) == pytest.approx(stats.chi2.ppf(0.95, 2), abs=0.05)

    def test_scaling(self):
        one = mc_quantile([1.0], 0.95, K=20000, seed=7)
        assert mc_quantile([2.0], 0.95, K=20000, seed=7) == 2 * one

    def test_monotone_in_alpha(self):
        values = [mc_quantile([1.0, 0.5], a, K=5000, seed=3) for a in np.linspace(0.01, 0.99, 50)]
        assert np.all(np.diff(values) >= 0)

    def test_reproducible(self):
        spec = limit_spectrum(make_builtin("neg_entropy", 3), np.full(3, 1 / 3))
        assert mc_quantile(spec, 0.9, K=4000, seed=11) == mc_quantile(spec, 0.9, K=4000, seed=11)

    def test_seeds_agree_statistically(self):
        a = mc_quantile([1.0, 1.0, 1.0], 0.95, K=50000, seed=1)
        b = mc_quantile([1.0, 1.0, 1.0], 0.95, K=50000, seed=2)
        # standard error of an empirical quantile: sqrt(a(1-a)/K) / density
        q = stats.chi2.ppf(0.95, 3)
        se = np.sqrt(0.95 * 0.05 / 50000) / stats.chi2.pdf(q, 3)
        assert abs(a - b) <= 3 * np.sqrt(2) * se

    @pytest.mark.parametrize("kwargs", [{"alpha": 0.0}, {"alpha": 1.0}, {"alpha": 0.5, "K": 999}])
    def test_preconditions(self, kwargs):
        with pytest.raises(ValueError):
            mc_quantile([1.0], **kwargs)

    def test_draws_are_chi2(self):
        draws = weighted_chi2_draws([1.0], 100000, seed=5)
        assert stats.kstest(draws, stats.chi2(1).cdf).statistic < 0.01


class TestEmpiricalLaw:
    def test_distributions_on_lattice(self):
        p_hat = empirical_distributions([0.2, 0.3, 0.5], 50, 1000, seed=1)
        assert p_hat.shape == (1000, 3)
        np.testing.assert_allclose(p_hat.sum(axis=1), 1.0)
        np.testing.assert_allclose(p_hat * 50, np.round(p_hat * 50), atol=1e-12)

    def test_distributions_reproducible(self):
        a = empirical_distributions([0.5, 0.5], 10, 5000, seed=3)
        np.testing.assert_array_equal(a, empirical_distributions([0.5, 0.5], 10, 5000, seed=3))

    def test_kl_uniform_d4(self):
        g = make_builtin("neg_entropy", 4)
        result = empirical_law_check(g, np.full(4, 0.25), 5000, 20000, seed=1, full=True)
        assert result.ks <= 0.02
        # classical oracle: 2 n KL converges to chi-square with 3 degrees of freedom
        assert stats.kstest(2 * result.statistics, stats.chi2(3).cdf).statistic <= 0.02

    def test_squared_l2_two_point(self):
        assert empirical_law_check(make_builtin("squared_l2", 2), [0.5, 0.5], 5000, 20000, seed=1) <= 0.02

    @pytest.mark.parametrize("name", ["neg_entropy", "squared_l2", "exponential"])
    def test_direction_swap(self, name):
        g = make_builtin(name, 3)
        p = np.array([0.2, 0.3, 0.5])
        fwd = law_samples(g, p, 5000, 20000, seed=4, direction="true_first")
        rev = law_samples(g, p, 5000, 20000, seed=4, direction="empirical_first")
        assert stats.ks_2samp(fwd, rev).statistic <= 0.03

    def test_preconditions(self):
        g = make_builtin("neg_entropy", 2)
        with pytest.raises(ValueError):
            empirical_law_check(g, [0.5, 0.5], 50, 2000, seed=0)
        with pytest.raises(ValueError):
            empirical_law_check(g, [0.5, 0.5], 500, 200, seed=0)
        with pytest.raises(ValueError):
            law_samples(g, [0.5, 0.5], 100, 10, seed=0, direction="sideways")
