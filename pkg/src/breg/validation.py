"""Acceptance checks shared by ``breg validate`` and the test suite.

Every check returns a :class:`CheckResult` with a measured value and the
bound it is held to. All randomness derives from the suite seed through
fixed per-check streams, so a report is a deterministic function of
``(seed, quick)``. Runtimes are recorded separately and only reported on
request, which keeps the default report byte-stable.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats
from scipy.special import xlogy

from . import _rng
from .ambiguity import AmbiguitySet, build_asymptotic, contains, solve_worst_case
from .asymptotics import empirical_law_check, law_samples, limit_spectrum, empirical_distributions
from .concentration import empirical_tail_check
from .divergence import bias_variance_check, bregman_rows, duality_gap, fisher_identity_check
from .generators import BUILTINS, make_builtin
from .learn import PushforwardFamily, fit, lipschitz_stability, objective
from .transport import (DiscreteDistribution, cost_matrix, decompose, solve_exact, wasserstein_bregman,
                        wasserstein_p)

TAIL_EPS = np.round(np.arange(0.02, 0.3001, 0.02), 10)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    bound: object
    runtime: float = 0.0

    def to_dict(self, timings: bool = False) -> dict:
        out = {"name": self.name, "status": "pass" if self.passed else "fail",
               "value": float(self.value), "bound": self.bound}
        if timings:
            out["runtime"] = round(self.runtime, 3)
        return out


def _rng_for(seed, stream):
    return _rng.generator(seed, stream)


# ---------------------------------------------------------------- oracles

def brute_force_transport(C, a, b) -> float:
    """Minimum cost over all basic feasible solutions of the transportation LP.

    A basis is a set of ``m + n - 1`` cells whose constraint columns are
    independent; the constraint matrix is totally unimodular, so independent
    sets have determinant ``+-1`` and dependent ones ``0``.
    """
    C = np.asarray(C, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = C.shape
    k = m + n - 1
    # drop the last column constraint, which is implied by the others
    rows = np.zeros((k, m * n))
    for i in range(m):
        rows[i, i * n:(i + 1) * n] = 1.0
    for j in range(n - 1):
        rows[m + j, j::n] = 1.0
    rhs = np.concatenate([a, b[:-1]])
    subsets = np.array(list(itertools.combinations(range(m * n), k)))
    mats = rows[:, subsets].transpose(1, 0, 2)
    dets = np.linalg.det(mats)
    keep = np.abs(dets) > 0.5
    flows = np.linalg.solve(mats[keep], np.broadcast_to(rhs, (int(keep.sum()), k))[..., None])[..., 0]
    feasible = np.all(flows >= -1e-12, axis=1)
    costs = np.sum(flows * C.reshape(-1)[subsets[keep]], axis=1)
    return float(costs[feasible].min())


def monotone_transport_1d(x, a, y, b, p: float = 2.0) -> float:
    """Quantile coupling of two 1-d distributions with cost ``|x - y|^p``."""
    ox, oy = np.argsort(x), np.argsort(y)
    x, a = np.asarray(x, dtype=float)[ox], np.asarray(a, dtype=float)[ox]
    y, b = np.asarray(y, dtype=float)[oy], np.asarray(b, dtype=float)[oy]
    ca, cb = np.cumsum(a), np.cumsum(b)
    ca[-1] = cb[-1] = 1.0
    cuts = np.union1d(np.concatenate([[0.0], ca]), cb)
    cuts = cuts[cuts <= 1.0]
    mass = np.diff(cuts)
    mid = 0.5 * (cuts[:-1] + cuts[1:])
    i = np.minimum(np.searchsorted(ca, mid), x.size - 1)
    j = np.minimum(np.searchsorted(cb, mid), y.size - 1)
    return float(np.sum(mass * np.abs(x[i] - y[j]) ** p))


def kl_tilt_value(center, c, radius, delta: float = 0.0) -> float:
    """Worst-case ``<p, c>`` over the KL ball via the exponential tilt.

    With ``delta > 0`` the feasible set is the ball intersected with
    ``p_i >= delta``. The tilt never touches that floor for the instances
    used here; when the clamped vertex lies in the ball it is the answer.
    """
    from scipy.optimize import brentq

    center = np.asarray(center, dtype=float)
    c = np.asarray(c, dtype=float)
    if delta > 0:
        k = int(np.argmax(c))
        vertex = np.full(c.size, delta)
        vertex[k] = 1.0 - (c.size - 1) * delta
        if float(np.sum(xlogy(vertex, vertex) - vertex * np.log(center))) <= radius:
            return float(vertex @ c)

    def tilt(lam):
        q = center * np.exp((c - c.max()) / lam)
        return q / q.sum()

    def gap(lam):
        q = tilt(lam)
        return float(np.sum(xlogy(q, q) - q * np.log(center))) - radius

    top = c >= c.max()
    if -math.log(center[top].sum()) <= radius:
        return float(c.max())
    lo, hi = 1e-8, 1.0
    while gap(hi) > 0:
        hi *= 10.0
    lam = brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return float(tilt(lam) @ c)


def polar_grid_worst_case(s: AmbiguitySet, c, n_dirs: int = 10**6) -> float:
    """Worst-case ``<p, c>`` for ``d = 3`` by scanning the ball boundary.

    The maximum of a linear function over the convex set lies on its
    relative boundary. ``n_dirs`` equally spaced directions in the plane of
    the simplex are followed from the center; along each ray the
    divergence is convex and zero at the start, so the boundary point
    (ball or ``p >= delta``, whichever comes first) is found by bisection.
    """
    if s.d != 3:
        raise ValueError("the polar grid oracle is for d = 3")
    c = np.asarray(c, dtype=float)
    u1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    u2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
    angles = 2.0 * math.pi * np.arange(n_dirs) / n_dirs
    dirs = np.cos(angles)[:, None] * u1 + np.sin(angles)[:, None] * u2
    center = s.center
    floor = s.delta
    with np.errstate(divide="ignore"):
        limits = np.where(dirs < 0, (center - floor) / -dirs, np.inf)
    hi = limits.min(axis=1)
    lo = np.zeros(n_dirs)
    g = s.generator

    def div(t, rows=slice(None)):
        return bregman_rows(g, center + t[:, None] * dirs[rows], center)

    inside = div(hi) <= s.radius
    lo[inside] = hi[inside]
    active = np.flatnonzero(~inside)
    # 50 halvings resolve the ray parameter far below the 1e-4 target
    for _ in range(50):
        mid = 0.5 * (lo[active] + hi[active])
        ok = div(mid, active) <= s.radius
        lo[active[ok]] = mid[ok]
        hi[active[~ok]] = mid[~ok]
    points = center + lo[:, None] * dirs
    return float(np.max(points @ c))


# ---------------------------------------------------------------- checks

def _check(name, value, bound, passed):
    return CheckResult(name, bool(passed), float(value), bound)


def check_ks_kl_d4(seed, quick):
    g = make_builtin("neg_entropy", 4)
    ks = empirical_law_check(g, np.full(4, 0.25), 5000, 20000, seed)
    return _check("ks_kl_d4", ks, 0.02, ks <= 0.02)


def check_ks_kl_chi2(seed, quick):
    g = make_builtin("neg_entropy", 4)
    sims = law_samples(g, np.full(4, 0.25), 5000, 20000, seed)
    ks = float(stats.kstest(2.0 * sims, stats.chi2(3).cdf).statistic)
    return _check("ks_kl_chi2_d4", ks, 0.02, ks <= 0.02)


def check_spectrum(seed, quick):
    rng = _rng_for(seed, 2)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 8))
        p = rng.dirichlet(np.ones(d))
        p = np.maximum(p, 1e-3)
        p /= p.sum()
        beta = limit_spectrum(make_builtin("neg_entropy", d), p).eigenvalues
        if beta.size != d - 1:
            worst = math.inf
            break
        worst = max(worst, float(np.max(np.abs(beta - 1.0))))
    beta = limit_spectrum(make_builtin("squared_l2", 2), [0.5, 0.5]).eigenvalues
    sq = float(np.max(np.abs(beta - 1.0))) if beta.size == 1 else math.inf
    value = max(worst, sq)
    return _check("spectrum", value, 1e-9, value <= 1e-9)


def check_ks_direction_swap(seed, quick):
    g = make_builtin("neg_entropy", 4)
    p = np.full(4, 0.25)
    p_hat = empirical_distributions(p, 5000, 20000, seed)
    a = law_samples(g, p, 5000, 20000, seed, direction="true_first", p_hat=p_hat)
    b = law_samples(g, p, 5000, 20000, seed, direction="empirical_first", p_hat=p_hat)
    ks = float(stats.ks_2samp(a, b).statistic)
    return _check("ks_direction_swap", ks, 0.03, ks <= 0.03)


def _tail(name, generator, direction, seed, quick):
    g = make_builtin(generator, 4)
    M = 20000 if quick else 50000
    table = empirical_tail_check(direction, g, np.full(4, 0.25), 200, M, TAIL_EPS, seed)
    excess = float(np.max(table.freq - table.mcdiarmid_bound - table.slack()))
    return _check(name, excess, 0.0, excess <= 0.0)


def check_tail_squared_l2_y(seed, quick):
    return _tail("tail_squared_l2_true_first", "squared_l2", "true_first", seed, quick)


def check_tail_squared_l2_z(seed, quick):
    return _tail("tail_squared_l2_empirical_first", "squared_l2", "empirical_first", seed, quick)


def check_tail_neg_entropy_y(seed, quick):
    return _tail("tail_neg_entropy_true_first", "neg_entropy", "true_first", seed, quick)


def check_tail_neg_entropy_z(seed, quick):
    return _tail("tail_neg_entropy_empirical_first", "neg_entropy", "empirical_first", seed, quick)


def coverage_frequency(g, p, n, reps, alpha, seed, K=10000):
    """Fraction of replications whose asymptotic set contains ``p``."""
    p = np.asarray(p, dtype=float)
    rng = _rng_for(seed, 5)
    counts = rng.multinomial(n, p, size=reps)
    hits = 0
    for row in counts:
        s = build_asymptotic(g, row, alpha=alpha, K=K, seed=seed)
        hits += contains(s, p)
    return hits / reps


def check_coverage(seed, quick):
    reps = 2000
    freq = coverage_frequency(make_builtin("neg_entropy", 4), np.full(4, 0.25), 2000, reps, 0.95, seed)
    return _check("coverage_asymptotic", freq, [0.93, 0.97], 0.93 <= freq <= 0.97)


def _random_weights(rng, k):
    return rng.dirichlet(np.ones(k))


def check_ot_bruteforce(seed, quick):
    rng = _rng_for(seed, 6)
    worst = 0.0
    for _ in range(200):
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        a, b = _random_weights(rng, m), _random_weights(rng, n)
        P = DiscreteDistribution(rng.normal(size=(m, 2)), a)
        Q = DiscreteDistribution(rng.normal(size=(n, 2)), b)
        C = cost_matrix(2.0, P, Q)
        exact = solve_exact(C, P, Q).cost
        worst = max(worst, abs(exact - brute_force_transport(C, P.weights, Q.weights)))
    return _check("ot_bruteforce", worst, 1e-9, worst <= 1e-9)


def check_ot_monotone(seed, quick):
    rng = _rng_for(seed, 7)
    P = DiscreteDistribution([0.0, 1.0, 2.0], [0.5, 0.3, 0.2])
    Q = DiscreteDistribution([0.0, 1.0, 2.0], [0.2, 0.3, 0.5])
    worst = abs(solve_exact(cost_matrix(2.0, P, Q), P, Q).cost - 0.6)
    for _ in range(100):
        m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        P = DiscreteDistribution(rng.normal(size=m), _random_weights(rng, m))
        Q = DiscreteDistribution(rng.normal(size=n), _random_weights(rng, n))
        exact = solve_exact(cost_matrix(2.0, P, Q), P, Q).cost
        oracle = monotone_transport_1d(P.atoms[:, 0], P.weights, Q.atoms[:, 0], Q.weights)
        worst = max(worst, abs(exact - oracle))
    return _check("ot_monotone_1d", worst, 1e-12, worst <= 1e-12)


def check_wb_squared_l2(seed, quick):
    rng = _rng_for(seed, 8)
    g = make_builtin("squared_l2", 2)
    worst = 0.0
    for _ in range(100):
        m, n = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        P = DiscreteDistribution(rng.normal(size=(m, 2)), _random_weights(rng, m))
        Q = DiscreteDistribution(rng.normal(size=(n, 2)), _random_weights(rng, n))
        worst = max(worst, abs(wasserstein_bregman(g, P, Q) - wasserstein_p(P, Q, 2.0) ** 2))
    return _check("wb_equals_w2_squared", worst, 1e-9, worst <= 1e-9)


def _generator_and_sampler(name, d, rng):
    """A built-in generator and a sampler of points inside its domain."""
    if name == "mahalanobis":
        a = rng.normal(size=(d, d))
        g = make_builtin(name, d, matrix=a @ a.T + 0.5 * np.eye(d))
    else:
        g = make_builtin(name, d)
    if name in ("neg_entropy", "itakura_saito"):
        return g, lambda k: rng.uniform(0.2, 2.0, size=(k, d))
    if name == "exponential":
        return g, lambda k: 0.5 * rng.normal(size=(k, d))
    return g, lambda k: rng.normal(size=(k, d))


def _decomposition(name):
    def check(seed, quick):
        rng = _rng_for(seed, 9 + BUILTINS.index(name))
        worst = 0.0
        for _ in range(100):
            g, sample = _generator_and_sampler(name, 2, rng)
            m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            Q = DiscreteDistribution(sample(m), _random_weights(rng, m))
            P = DiscreteDistribution(sample(n), _random_weights(rng, n))
            dist, pen, total = decompose(g, Q, P)
            worst = max(worst, abs(dist + pen - total))
        return _check(f"decomposition_{name}", worst, 1e-8, worst <= 1e-8)
    return check


def _duality(name):
    def check(seed, quick):
        rng = _rng_for(seed, 20 + BUILTINS.index(name))
        worst = 0.0
        for _ in range(100):
            d = int(rng.integers(2, 5))
            g, sample = _generator_and_sampler(name, d, rng)
            if name in ("neg_entropy", "itakura_saito"):
                p, q = rng.dirichlet(np.ones(d), size=2)
            else:
                p, q = sample(2)
            worst = max(worst, duality_gap(g, p, q))
        return _check(f"duality_{name}", worst, 1e-8, worst <= 1e-8)
    return check


def check_bias_variance(seed, quick):
    rng = _rng_for(seed, 30)
    worst = 0.0
    for i in range(100):
        name = BUILTINS[i % len(BUILTINS)]
        d = int(rng.integers(1, 5))
        g, sample = _generator_and_sampler(name, d, rng)
        lhs, rhs = bias_variance_check(g, sample(int(rng.integers(2, 20))), sample(1)[0])
        worst = max(worst, abs(lhs - rhs))
    return _check("bias_variance", worst, 1e-10, worst <= 1e-10)


def check_fisher(seed, quick):
    cases = [("bernoulli", mu) for mu in np.round(np.arange(0.1, 0.91, 0.1), 10)]
    cases += [("gaussian_unit_var", mu) for mu in (-2.0, 0.0, 0.5, 3.0)]
    cases += [("poisson_truncated", mu) for mu in (1.0, 3.0, 10.0)]
    worst = 0.0
    for family, mu in cases:
        lhs, rhs = fisher_identity_check(family, float(mu))
        worst = max(worst, abs(lhs - rhs))
    return _check("fisher_identity", worst, 1e-5, worst <= 1e-5)


def _realizable_problem(seed):
    rng = _rng_for(seed, 40)
    fam = PushforwardFamily(rng.normal(size=(20, 2)))
    truth = fam.pack([1.0, -0.5], [0.7, 1.3])
    start = truth + np.array([0.05, -0.04, 0.03, 0.02])
    return fam, truth, start, fam.distribution(truth)


def check_learn_realizable(seed, quick):
    fam, truth, start, Q = _realizable_problem(seed)
    theta, trace = fit(make_builtin("squared_l2", 2), Q, fam, start, 40, 0.5)
    err = float(np.max(np.abs(theta - truth)))
    ok = trace[-1] <= 1e-6 and err <= 1e-3
    return _check("learn_realizable", max(trace[-1] / 1e-6, err / 1e-3), 1.0, ok)


def check_learn_monotone(seed, quick):
    rng = _rng_for(seed, 41)
    fam = PushforwardFamily(rng.uniform(0.5, 1.5, size=(12, 1)))
    Q = DiscreteDistribution(rng.uniform(0.5, 2.0, size=(12, 1)))
    worst = -math.inf
    finals = []
    for name in ("squared_l2", "neg_entropy"):
        _, trace = fit(make_builtin(name, 1), Q, fam, fam.pack(1.0, 1.0), 15, 0.5)
        worst = max(worst, float(np.max(np.diff(trace))))
        finals.append(trace[-1])
    ok = worst <= 0.0 and abs(finals[0] - finals[1]) > 0
    return _check("learn_monotone_traces", worst, 0.0, ok)


def check_learn_lipschitz(seed, quick):
    """Stability of the probe away from the optimum, continuity at it.

    At a generic ``theta`` the ratio at ``r / 2`` stays within a factor 2 of
    the ratio at ``r``. At the realizable optimum the objective grows
    quadratically, the ratio itself scales with ``r``, and the contract is
    continuity: ``ratio * radius`` shrinks with the radius.
    """
    fam, truth, _, Q = _realizable_problem(seed)
    g = make_builtin("squared_l2", 2)
    radius = 1e-2
    ratio, half, stable = lipschitz_stability(g, Q, fam, truth + np.array([0.2, 0.1, -0.1, 0.05]),
                                              radius, 64, seed)
    at_opt, at_opt_half, _ = lipschitz_stability(g, Q, fam, truth, radius, 64, seed)
    continuous = math.isfinite(at_opt) and at_opt_half * radius / 2 < at_opt * radius
    value = abs(math.log2(half / ratio)) if ratio > 0 and half > 0 else math.inf
    return _check("learn_lipschitz_stability", value, 1.0, stable and continuous and value <= 1.0)


def _kl_instances(seed, count):
    rng = _rng_for(seed, 50)
    for _ in range(count):
        d = int(rng.integers(2, 7))
        yield d, rng.dirichlet(np.full(d, 3.0)), rng.normal(size=d), float(rng.uniform(1e-3, 0.2))


def check_worst_case_kl(seed, quick):
    worst = 0.0
    for d, center, c, r in _kl_instances(seed, 200):
        g = make_builtin("neg_entropy", d)
        s = AmbiguitySet(center, g, r, {}, 100, d, g.delta)
        worst = max(worst, abs(solve_worst_case(s, c).value - kl_tilt_value(center, c, r, g.delta)))
    return _check("worst_case_kl_tilt", worst, 1e-6, worst <= 1e-6)


def check_worst_case_grid(seed, quick):
    rng = _rng_for(seed, 51)
    g = make_builtin("neg_entropy", 3)
    cases = [(np.full(3, 1.0 / 3.0), np.array([1.0, 0.0, 0.0]), 0.01)]
    for _ in range(2 if quick else 5):
        cases.append((rng.dirichlet(np.full(3, 3.0)), rng.normal(size=3), float(rng.uniform(1e-3, 0.1))))
    worst = 0.0
    for center, c, r in cases:
        s = AmbiguitySet(center, g, r, {}, 100, 3, g.delta)
        grid = polar_grid_worst_case(s, c, n_dirs=10**5 if quick else 10**6)
        worst = max(worst, abs(solve_worst_case(s, c).value - grid))
    return _check("worst_case_grid", worst, 1e-4, worst <= 1e-4)


CHECKS: list[tuple[str, Callable]] = [
    ("ks_kl_d4", check_ks_kl_d4),
    ("ks_kl_chi2_d4", check_ks_kl_chi2),
    ("spectrum", check_spectrum),
    ("ks_direction_swap", check_ks_direction_swap),
    ("tail_squared_l2_true_first", check_tail_squared_l2_y),
    ("tail_squared_l2_empirical_first", check_tail_squared_l2_z),
    ("tail_neg_entropy_true_first", check_tail_neg_entropy_y),
    ("tail_neg_entropy_empirical_first", check_tail_neg_entropy_z),
    ("coverage_asymptotic", check_coverage),
    ("ot_bruteforce", check_ot_bruteforce),
    ("ot_monotone_1d", check_ot_monotone),
    ("wb_equals_w2_squared", check_wb_squared_l2),
    *[(f"decomposition_{n}", _decomposition(n)) for n in BUILTINS],
    *[(f"duality_{n}", _duality(n)) for n in BUILTINS],
    ("bias_variance", check_bias_variance),
    ("fisher_identity", check_fisher),
    ("learn_realizable", check_learn_realizable),
    ("learn_monotone_traces", check_learn_monotone),
    ("learn_lipschitz_stability", check_learn_lipschitz),
    ("worst_case_kl_tilt", check_worst_case_kl),
    ("worst_case_grid", check_worst_case_grid),
]

def run_suite(seed: int = 42, quick: bool = False, names: Optional[list] = None,
              progress: Optional[Callable] = None) -> list[CheckResult]:
    """Run the acceptance checks in a fixed order.

    The quick suite runs every check; it only lowers the tail-check
    replications and the density of the polar grid oracle.
    """
    results = []
    for name, func in CHECKS:
        if names is not None and name not in names:
            continue
        start = time.perf_counter()
        try:
            res = func(seed, quick)
        except Exception as exc:  # a crashing check is a failed check
            res = CheckResult(name, False, math.nan, repr(exc))
        res.runtime = time.perf_counter() - start
        results.append(res)
        if progress is not None:
            progress(res)
    return results


def report(results, *, seed: int, quick: bool, timings: bool = False) -> dict:
    """JSON-ready report: ``suite``, ``seed``, counts and one record per check."""
    checks = [r.to_dict(timings) for r in results]
    out = {
        "suite": "quick" if quick else "full",
        "seed": int(seed),
        "n_checks": len(checks),
        "n_failed": sum(1 for c in checks if c["status"] != "pass"),
        "checks": checks,
    }
    if timings:
        out["runtime"] = round(sum(r.runtime for r in results), 3)
    return out
