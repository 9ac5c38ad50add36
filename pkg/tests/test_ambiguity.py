import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from breg.ambiguity import (AmbiguitySet, build_asymptotic, build_concentration, contains, drso_demo,
                            project_simplex, solve_worst_case, worst_case_linear)
from breg.divergence import bregman
from breg.generators import BUILTINS, DomainError, make_builtin
from breg.validation import coverage_frequency, kl_tilt_value, polar_grid_worst_case


def _set(name, center, radius, d=None):
    d = d or len(center)
    g = make_builtin(name, d, matrix=np.eye(d) + 0.3) if name == "mahalanobis" else make_builtin(name, d)
    delta = g.delta if name in ("neg_entropy", "itakura_saito") else 0.0
    return AmbiguitySet(np.asarray(center, dtype=float), g, radius, {}, 100, d, delta)


def _boundary_point(s, direction):
    """Point along ``center + t * direction`` with divergence radius * (1 + 1e-6)."""
    target = s.radius * (1 + 1e-6)
    lo, hi = 0.0, 1.0
    while bregman(s.generator, s.center + hi * direction, s.center) < target:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bregman(s.generator, s.center + mid * direction, s.center) < target:
            lo = mid
        else:
            hi = mid
    return s.center + hi * direction


class TestBuild:
    def test_asymptotic_radius(self):
        s = build_asymptotic(make_builtin("neg_entropy", 4), [500] * 4, alpha=0.95, K=200000, seed=1)
        assert s.radius == pytest.approx(stats.chi2.ppf(0.95, 3) / 4000, rel=0.01)
        assert round(s.radius, 4) == 0.002
        np.testing.assert_allclose(s.provenance["beta"], [1, 1, 1], atol=1e-9)

    def test_asymptotic_deterministic(self):
        g = make_builtin("neg_entropy", 3)
        a = build_asymptotic(g, [30, 40, 50], seed=5)
        b = build_asymptotic(g, [30, 40, 50], seed=5)
        assert a.radius == b.radius
        assert a.to_dict() == b.to_dict()

    def test_asymptotic_monotone_in_alpha(self):
        g = make_builtin("neg_entropy", 3)
        radii = [build_asymptotic(g, [30, 40, 50], alpha=a, seed=5).radius for a in (0.5, 0.9, 0.99, 0.9999)]
        assert np.all(np.diff(radii) > 0)

    def test_concentration_radius(self):
        s = build_concentration(make_builtin("squared_l2", 4), [25] * 4, math.exp(-1))
        assert s.radius == pytest.approx(1.02)
        assert s.provenance == {"kind": "concentration", "delta_conf": math.exp(-1), "form": "mcdiarmid_rederived"}

    def test_concentration_exceeds_asymptotic(self):
        g = make_builtin("neg_entropy", 4)
        conc = build_concentration(g, [500] * 4, 0.05)
        asym = build_asymptotic(g, [500] * 4, alpha=0.95)
        assert conc.radius >= asym.radius

    def test_concentration_decreasing_in_n(self):
        g = make_builtin("squared_l2", 4)
        radii = [build_concentration(g, [k] * 4, 0.05).radius for k in (10, 100, 1000, 10000)]
        assert np.all(np.diff(radii) < 0)

    def test_boundary_counts_are_clamped(self):
        g = make_builtin("neg_entropy", 3)
        s = build_asymptotic(g, [0, 20, 20], seed=0)
        assert s.center.min() >= g.delta
        assert abs(s.center.sum() - 1) <= 1e-12

    @pytest.mark.parametrize("counts", [[10, 10], [40, 0], [-1, 50], [1.5, 40]])
    def test_bad_counts(self, counts):
        with pytest.raises((ValueError, DomainError)):
            build_asymptotic(make_builtin("neg_entropy", 2), counts)

    def test_dict_round_trip(self):
        s = build_asymptotic(make_builtin("itakura_saito", 3), [30, 40, 50], seed=2)
        t = AmbiguitySet.from_dict(json.loads(json.dumps(s.to_dict())))
        np.testing.assert_array_equal(t.center, s.center)
        assert t.radius == s.radius
        assert t.generator.name == "itakura_saito"
        assert t.delta == s.delta

    @pytest.mark.parametrize("patch", [
        {"radius": 0.0}, {"center": [0.5, 0.6, 0.1]}, {"center": [0.5, 0.5]}, {"generator": None},
    ])
    def test_from_dict_rejects(self, patch):
        data = build_asymptotic(make_builtin("neg_entropy", 3), [30, 40, 50]).to_dict()
        data.update(patch)
        with pytest.raises(ValueError):
            AmbiguitySet.from_dict(data)


class TestContains:
    def test_center(self):
        s = build_asymptotic(make_builtin("neg_entropy", 4), [500] * 4)
        assert contains(s, s.center)

    @pytest.mark.parametrize("name", BUILTINS)
    def test_just_outside(self, name):
        s = _set(name, [0.2, 0.3, 0.5], 0.01)
        p = _boundary_point(s, np.array([1.0, -0.5, -0.5]) / 10)
        assert not contains(s, p)
        assert contains(s, s.center + 0.99 * (p - s.center))

    def test_empirical_first_direction(self):
        s = _set("neg_entropy", [0.2, 0.3, 0.5], 0.01)
        assert contains(s, s.center, direction="empirical_first")
        with pytest.raises(ValueError):
            contains(s, s.center, direction="both")

    def test_boundary_rejected(self):
        s = _set("neg_entropy", [0.2, 0.3, 0.5], 0.01)
        with pytest.raises(DomainError):
            contains(s, [0.0, 0.5, 0.5])

    @pytest.mark.parametrize("name", ["neg_entropy", "itakura_saito", "squared_l2"])
    def test_convex_membership(self, name):
        rng = np.random.default_rng(0)
        s = _set(name, [0.3, 0.3, 0.4], 0.05)
        members = []
        while len(members) < 1000:
            p = rng.dirichlet(np.full(3, 5.0))
            if contains(s, p):
                members.append(p)
        for p1, p2 in zip(members[::2], members[1::2]):
            for lam in np.linspace(0, 1, 11):
                q = lam * p1 + (1 - lam) * p2
                assert bregman(s.generator, q, s.center) <= s.radius + 1e-10

    def test_coverage(self):
        freq = coverage_frequency(make_builtin("neg_entropy", 4), np.full(4, 0.25), 2000, 2000, 0.95, seed=42)
        assert 0.93 <= freq <= 0.97


class TestProjection:
    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.sampled_from([0.0, 1e-6, 0.05]))
    def test_projection(self, y, delta):
        y = np.asarray(y)
        if y.size * delta > 1:
            return
        p = project_simplex(y, delta)
        assert abs(p.sum() - 1) <= 1e-12
        assert p.min() >= delta - 1e-15
        # the projection is idempotent and no other feasible point is closer
        np.testing.assert_allclose(project_simplex(p, delta), p, atol=1e-12)
        q = np.random.default_rng(0).dirichlet(np.ones(y.size)) * (1 - y.size * delta) + delta
        assert np.linalg.norm(y - p) <= np.linalg.norm(y - q) + 1e-12


class TestWorstCase:
    def test_huge_radius_gives_vertex(self):
        s = _set("neg_entropy", [1 / 3, 1 / 3, 1 / 3], 100.0)
        p, value = worst_case_linear(s, [0.0, 2.0, 1.0])
        assert value == pytest.approx(2.0, abs=1e-5)
        assert np.argmax(p) == 1
        assert p.min() >= s.delta

    @pytest.mark.parametrize("name", BUILTINS)
    def test_small_radius_gives_center(self, name):
        c = np.array([1.0, -1.0, 0.5])
        s = _set(name, [0.2, 0.3, 0.5], 1e-12)
        p, value = worst_case_linear(s, c)
        np.testing.assert_allclose(p, s.center, atol=1e-5)
        assert value == pytest.approx(s.center @ c, abs=1e-5)

    def test_kl_tilt_example(self):
        s = _set("neg_entropy", [1 / 3, 1 / 3, 1 / 3], 0.01)
        c = np.array([1.0, 0.0, 0.0])
        value = worst_case_linear(s, c)[1]
        assert value == pytest.approx(kl_tilt_value(s.center, c, 0.01, s.delta), abs=1e-6)
        assert value == pytest.approx(polar_grid_worst_case(s, c, n_dirs=10**5), abs=1e-4)

    def test_kl_tilt_random(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            d = int(rng.integers(2, 7))
            center = rng.dirichlet(np.full(d, 3.0))
            c = rng.normal(size=d)
            r = float(rng.uniform(1e-3, 0.2))
            s = _set("neg_entropy", center, r)
            assert solve_worst_case(s, c).value == pytest.approx(kl_tilt_value(center, c, r, s.delta), abs=1e-6)

    @pytest.mark.parametrize("name", BUILTINS)
    def test_grid_oracle(self, name):
        rng = np.random.default_rng(2)
        center = rng.dirichlet(np.full(3, 3.0))
        c = rng.normal(size=3)
        s = _set(name, center, 0.02)
        assert solve_worst_case(s, c).value == pytest.approx(polar_grid_worst_case(s, c, n_dirs=10**5), abs=1e-4)

    @pytest.mark.parametrize("name", BUILTINS)
    def test_complementary_slackness(self, name):
        rng = np.random.default_rng(3)
        for _ in range(20):
            center = rng.dirichlet(np.full(4, 2.0))
            s = _set(name, center, float(rng.uniform(1e-3, 0.5)))
            sol = solve_worst_case(s, rng.normal(size=4))
            assert sol.divergence <= s.radius + 1e-12
            assert s.radius - sol.divergence <= 1e-8 or sol.multiplier <= 1e-8

    @pytest.mark.parametrize("name", ["neg_entropy", "mahalanobis", "exponential"])
    def test_monotone_in_radius(self, name):
        c = np.array([0.3, -1.0, 2.0, 0.0])
        values = [solve_worst_case(_set(name, [0.1, 0.2, 0.3, 0.4], r), c).value
                  for r in np.geomspace(1e-5, 10, 30)]
        assert np.all(np.diff(values) >= -1e-9)

    def test_constant_loss(self):
        s = _set("neg_entropy", [0.2, 0.3, 0.5], 0.01)
        assert solve_worst_case(s, [2.0, 2.0, 2.0]).value == pytest.approx(2.0)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            worst_case_linear(_set("neg_entropy", [0.2, 0.3, 0.5], 0.01), [1.0, 2.0])


class TestDRSO:
    def test_zero_radius_is_empirical(self):
        s = _set("neg_entropy", [0.2, 0.3, 0.5], 1e-14)
        losses = np.array([[1.0, 2.0, 3.0], [3.0, 2.0, 1.0], [2.0, 2.0, 2.0]])
        best, values = drso_demo(losses, s)
        np.testing.assert_allclose(values, losses @ s.center, atol=1e-6)
        assert best == int(np.argmin(losses @ s.center))

    def test_dominated_action_never_chosen(self):
        losses = np.array([[1.0, 2.0, 3.0], [1.5, 2.5, 3.5]])
        for r in np.geomspace(1e-4, 10, 10):
            best, values = drso_demo(losses, _set("neg_entropy", [0.2, 0.3, 0.5], r))
            assert best == 0
            assert values[0] < values[1]

    def test_matches_grid(self):
        rng = np.random.default_rng(4)
        losses = rng.normal(size=(3, 3))
        s = _set("neg_entropy", rng.dirichlet(np.full(3, 3.0)), 0.05)
        best, values = drso_demo(losses, s)
        grid = np.array([polar_grid_worst_case(s, row, n_dirs=10**5) for row in losses])
        np.testing.assert_allclose(values, grid, atol=1e-4)
        assert best == int(np.argmin(grid))

    def test_ties_pick_lowest_index(self):
        losses = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]])
        assert drso_demo(losses, _set("neg_entropy", [0.2, 0.3, 0.5], 0.1))[0] == 0

    def test_shape(self):
        with pytest.raises(ValueError):
            drso_demo(np.ones((2, 4)), _set("neg_entropy", [0.2, 0.3, 0.5], 0.1))
