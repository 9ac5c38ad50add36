import numpy as np
import pytest

from breg.generators import make_builtin
from breg.learn import (ObjectiveError, PushforwardFamily, fd_gradient, fit, lipschitz_probe,
                        lipschitz_stability, objective)
from breg.transport import DiscreteDistribution

SQ1 = make_builtin("squared_l2", 1)


def _realizable(seed=0, d=2, m=20):
    rng = np.random.default_rng(seed)
    fam = PushforwardFamily(rng.uniform(-1, 1, size=(m, d)))
    theta_true = fam.pack(rng.uniform(0.5, 1.5, size=d), rng.uniform(0.5, 1.5, size=d))
    return fam, fam.distribution(theta_true), theta_true


class TestFamily:
    def test_pack_unpack(self):
        fam = PushforwardFamily(np.zeros((3, 2)))
        theta = fam.pack([1.0, 2.0], [0.5, 4.0])
        loc, scale = fam.unpack(theta)
        np.testing.assert_allclose(loc, [1.0, 2.0])
        np.testing.assert_allclose(scale, [0.5, 4.0])
        assert fam.n_params == 4

    def test_atoms(self):
        fam = PushforwardFamily([-0.5, 0.5])
        np.testing.assert_allclose(fam.atoms(fam.pack(0.5, 1.0)), [[0.0], [1.0]])

    @pytest.mark.parametrize("base", [np.zeros((65, 1)), np.zeros((0, 1)), [[np.inf]]])
    def test_rejects(self, base):
        with pytest.raises(ValueError):
            PushforwardFamily(base)

    def test_scale_positive(self):
        with pytest.raises(ValueError):
            PushforwardFamily([0.0, 1.0]).pack(0.0, -1.0)


class TestObjective:
    def test_exact_match(self):
        fam = PushforwardFamily([-0.5, 0.5])
        Q = DiscreteDistribution([0.0, 1.0])
        assert objective(SQ1, Q, fam, fam.pack(0.5, 1.0)) == 0.0

    def test_shift(self):
        fam = PushforwardFamily([-0.5, 0.5])
        Q = DiscreteDistribution([0.0, 1.0])
        assert objective(SQ1, Q, fam, fam.pack(0.6, 1.0)) == pytest.approx(0.01, abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(1)
        fam, Q, _ = _realizable()
        g = make_builtin("squared_l2", 2)
        for _ in range(50):
            assert objective(g, Q, fam, rng.normal(size=4)) >= 0

    def test_domain_error_surfaces(self):
        g = make_builtin("exponential", 1)
        fam = PushforwardFamily([0.0, 1.0])
        with pytest.raises(Exception) as info:
            objective(g, DiscreteDistribution([0.0]), fam, fam.pack(800.0, 1.0))
        assert type(info.value).__name__ == "DomainError"

    def test_dimension_mismatch(self):
        fam = PushforwardFamily(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            objective(SQ1, DiscreteDistribution([0.0]), fam, np.zeros(4))

    def test_target_size_cap(self):
        fam = PushforwardFamily([0.0])
        with pytest.raises(ValueError):
            objective(SQ1, DiscreteDistribution(np.arange(65.0)), fam, np.zeros(2))


class TestFit:
    def test_realizable_recovery(self):
        fam, Q, theta_true = _realizable()
        g = make_builtin("squared_l2", 2)
        theta0 = theta_true + np.array([0.05, -0.05, 0.05, -0.05])
        theta, trace = fit(g, Q, fam, theta0, steps=25, lr=0.5)
        assert trace[-1] <= 1e-6
        np.testing.assert_allclose(theta, theta_true, atol=1e-3)
        assert len(trace) == 26

    def test_start_at_truth(self):
        fam, Q, theta_true = _realizable()
        g = make_builtin("squared_l2", 2)
        grad = fd_gradient(lambda t: objective(g, Q, fam, t), theta_true)
        assert np.abs(grad).max() <= 1e-4
        _, trace = fit(g, Q, fam, theta_true, steps=3, lr=0.5)
        assert np.ptp(trace) <= 1e-10

    def test_traces_monotone_and_generators_differ(self):
        rng = np.random.default_rng(2)
        fam = PushforwardFamily(rng.dirichlet(np.ones(2), size=8) - 0.5)
        Q = DiscreteDistribution(rng.dirichlet(np.full(2, 4.0), size=10))
        theta0 = fam.pack([0.5, 0.5], [0.2, 0.2])
        finals = []
        for name in ("squared_l2", "neg_entropy"):
            g = make_builtin(name, 2)
            _, trace = fit(g, Q, fam, theta0, steps=10, lr=0.1)
            assert np.all(np.diff(trace) <= 0)
            finals.append(trace[-1])
        assert abs(finals[0] - finals[1]) > 1e-6

    def test_callback(self):
        fam, Q, theta_true = _realizable()
        seen = []
        fit(make_builtin("squared_l2", 2), Q, fam, theta_true + 0.1, steps=3, lr=0.5,
            callback=lambda step, theta, value: seen.append((step, value)))
        assert [s for s, _ in seen] == [0, 1, 2, 3]

    def test_invalid_start_reports_theta(self):
        g = make_builtin("itakura_saito", 1)
        fam = PushforwardFamily([0.5, 1.0])
        with pytest.raises(ObjectiveError) as info:
            fit(g, DiscreteDistribution([0.5]), fam, fam.pack(-5.0, 1.0), steps=1, lr=0.1)
        np.testing.assert_allclose(info.value.theta, fam.pack(-5.0, 1.0))

    @pytest.mark.parametrize("kwargs", [{"steps": 0, "lr": 0.1}, {"steps": 1, "lr": 0.0}])
    def test_bad_arguments(self, kwargs):
        fam, Q, theta_true = _realizable()
        with pytest.raises(ValueError):
            fit(make_builtin("squared_l2", 2), Q, fam, theta_true, **kwargs)


class TestGradient:
    def test_step_size_consistency(self):
        rng = np.random.default_rng(3)
        fam = PushforwardFamily(rng.normal(size=(6, 1)))
        Q = DiscreteDistribution(rng.normal(size=7))
        f = lambda t: objective(SQ1, Q, fam, t)  # noqa: E731
        agree = 0
        for _ in range(20):
            theta = rng.normal(size=2) * 0.5
            a, b = fd_gradient(f, theta, 1e-4), fd_gradient(f, theta, 1e-5)
            if np.linalg.norm(a - b) <= 0.05 * np.linalg.norm(b):
                agree += 1
        # plan degeneracy can spoil a point; most points must agree
        assert agree >= 18

    def test_quadratic(self):
        grad = fd_gradient(lambda t: float(t @ t), np.array([1.0, -2.0]))
        np.testing.assert_allclose(grad, [2.0, -4.0], atol=1e-8)


class TestLipschitz:
    def test_zero_base_ignores_scale(self):
        fam = PushforwardFamily(np.zeros((3, 1)))
        Q = DiscreteDistribution([0.0, 1.0])
        theta = fam.pack(0.3, 1.0)
        ratio = lipschitz_probe(SQ1, Q, fam, theta, 0.1, 50, seed=0, coordinates=[1])
        assert ratio <= 1e-12

    def test_matches_quantile_oracle(self):
        rng = np.random.default_rng(4)
        z = np.sort(rng.normal(size=8))
        q = np.sort(rng.normal(size=8) + 1.0)
        fam = PushforwardFamily(z)
        Q = DiscreteDistribution(q)
        loc, log_s = 0.2, np.log(0.8)
        theta = np.array([loc, log_s])
        # 1-d W2^2 with equal uniform weights matches sorted samples
        s = np.exp(log_s)
        resid = q - loc - s * z
        grad = np.array([-2 * resid.mean(), -2 * np.mean(resid * s * z)])
        ratio = lipschitz_probe(SQ1, Q, fam, theta, 1e-4, 400, seed=1)
        assert ratio == pytest.approx(np.linalg.norm(grad), rel=0.2)

    def test_stability_at_generic_point(self):
        fam, Q, theta_true = _realizable()
        g = make_builtin("squared_l2", 2)
        ratio, half, stable = lipschitz_stability(g, Q, fam, theta_true + 0.2, 1e-3, 200, seed=2)
        assert np.isfinite(ratio) and stable

    def test_continuity_at_truth(self):
        fam, Q, theta_true = _realizable()
        g = make_builtin("squared_l2", 2)
        ratios = [lipschitz_probe(g, Q, fam, theta_true, r, 100, seed=3) for r in (1e-2, 1e-3, 1e-4)]
        products = np.array(ratios) * np.array([1e-2, 1e-3, 1e-4])
        assert np.all(np.diff(products) < 0)

    def test_bad_arguments(self):
        fam, Q, theta_true = _realizable()
        with pytest.raises(ValueError):
            lipschitz_probe(make_builtin("squared_l2", 2), Q, fam, theta_true, 0.0, 10, seed=0)
