"""Bregman-ball ambiguity sets around an empirical distribution.

The set ``{p : D_phi(p, p_hat_n) <= r}`` is convex in ``p`` because the
divergence is convex in its first argument. Two recipes choose ``r``: the
Monte Carlo quantile of the weighted chi-square limit, and the concentration
radius. On top of the set the module solves the inner maximization of a
linear expected loss, which is what a finite-scenario DRSO problem needs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .asymptotics import limit_spectrum, mc_quantile
from .concentration import radius_for_confidence
from .divergence import bregman, bregman_rows
from .generators import (ConvergenceError, ConvexGenerator, Domain, DomainError, check_simplex,
                         clamp_to_interior, generator_config, generator_from_config)

log = logging.getLogger(__name__)

MIN_SAMPLES = 30


@dataclass(frozen=True, eq=False)
class AmbiguitySet:
    center: np.ndarray
    generator: ConvexGenerator
    radius: float
    provenance: dict
    n: int
    d: int
    delta: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "center": [float(v) for v in self.center],
            "generator": generator_config(self.generator),
            "radius": float(self.radius),
            "provenance": dict(self.provenance),
            "n": int(self.n),
            "d": int(self.d),
            "delta": float(self.delta),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AmbiguitySet":
        """Rebuild a set written by :meth:`to_dict`."""
        try:
            g = generator_from_config(data["generator"], int(data["d"]))
            center = np.asarray(data["center"], dtype=float)
            radius = float(data["radius"])
            n = int(data["n"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed ambiguity set: {exc}") from None
        if center.shape != (g.dimension,):
            raise ValueError("center length does not match the generator dimension")
        check_simplex(center, _set_delta(g), atol=1e-9)
        if not radius > 0:
            raise ValueError("radius must be positive")
        return cls(center=center, generator=g, radius=radius, provenance=dict(data.get("provenance", {})),
                   n=n, d=g.dimension, delta=_set_delta(g))


def _set_delta(g: ConvexGenerator) -> float:
    return g.delta if g.domain is Domain.SIMPLEX else 0.0


def _center(g: ConvexGenerator, counts):
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or counts.size != g.dimension:
        raise ValueError(f"need {g.dimension} category counts")
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise ValueError("counts must be nonnegative integers")
    n = int(counts.sum())
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} observations, got {n}")
    if np.count_nonzero(counts) == 1 and g.dimension > 1:
        raise DomainError("all observations fall in one category; the clamped center is degenerate")
    p_hat = counts / n
    # interior clamp: the spectrum and the boundary-singular generators need p_hat > 0
    margin = g.delta if g.domain is Domain.SIMPLEX else 1e-6
    if np.any(p_hat < margin):
        log.warning("empirical distribution touches the boundary; clamping to %.3g", margin)
        p_hat = clamp_to_interior(p_hat, margin)
    return p_hat, n


def build_asymptotic(g: ConvexGenerator, data_counts, alpha: float = 0.95, K: int = 10000,
                     seed: int = 42) -> AmbiguitySet:
    """Ball whose radius is the plug-in limit quantile over ``2n``.

    The spectrum is evaluated at ``p_hat_n`` because the true ``p`` is not
    available.
    """
    center, n = _center(g, data_counts)
    spec = limit_spectrum(g, center)
    radius = mc_quantile(spec, alpha, K, seed) / (2.0 * n)
    return AmbiguitySet(
        center=center,
        generator=g,
        radius=radius,
        provenance={"kind": "asymptotic", "alpha": float(alpha), "K": int(K), "seed": int(seed),
                    "beta": [float(b) for b in spec.eigenvalues]},
        n=n,
        d=g.dimension,
        delta=_set_delta(g),
    )


def build_concentration(g: ConvexGenerator, data_counts, delta_conf: float,
                        form: str = "mcdiarmid_rederived") -> AmbiguitySet:
    """Ball with the concentration radius for ``D_phi(p, p_hat_n)``.

    The radius is a one-sided tail guarantee: ``Y - E Y`` exceeds the
    deviation part with probability at most ``delta_conf``, with ``E Y``
    replaced by its upper bound.
    """
    center, n = _center(g, data_counts)
    radius = radius_for_confidence("true_first", g, n, g.dimension, delta_conf, form)
    return AmbiguitySet(
        center=center,
        generator=g,
        radius=radius,
        provenance={"kind": "concentration", "delta_conf": float(delta_conf), "form": form},
        n=n,
        d=g.dimension,
        delta=_set_delta(g),
    )


def contains(s: AmbiguitySet, p, *, direction: str = "true_first") -> bool:
    """Membership test ``D_phi(p, center) <= radius + 1e-12``.

    ``direction="empirical_first"`` tests ``D_phi(center, p)`` instead; that
    set is not convex in general and is not accepted by the optimizers.
    """
    p = np.asarray(p, dtype=float)
    if s.delta > 0 and np.any(p < s.delta):
        raise DomainError("p must lie in the delta-interior simplex")
    if direction == "true_first":
        value = bregman(s.generator, p, s.center)
    elif direction == "empirical_first":
        value = bregman(s.generator, s.center, p)
    else:
        raise ValueError("direction must be 'true_first' or 'empirical_first'")
    return value <= s.radius + 1e-12


def project_simplex(y, delta: float = 0.0) -> np.ndarray:
    """Euclidean projection onto ``{p : sum p = 1, p_i >= delta}``.

    Sort-and-threshold: shift by ``delta``, project onto the simplex of mass
    ``1 - d delta``, shift back.
    """
    y = np.asarray(y, dtype=float)
    d = y.size
    mass = 1.0 - d * delta
    if mass < 0:
        raise ValueError("delta too large for the dimension")
    z = y - delta
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - mass
    k = np.arange(1, d + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(z - tau, 0.0) + delta


@dataclass(frozen=True, eq=False)
class WorstCase:
    p: np.ndarray
    value: float
    multiplier: float
    divergence: float
    iterations: int


def _penalized_argmax(g, center, c, lam, delta, start, *, tol=1e-12, max_iter=500):
    """Maximize ``<p, c> - lam D(p, center)`` over the delta-interior simplex.

    Active-set Newton method. On the face where the active coordinates sit at
    ``delta`` each step solves the equality-constrained Newton system

        lam H_FF d_F + nu 1 = grad_F,    sum(d_F) = 0,

    then moves along ``d`` with an exact line search on the sign of the
    directional derivative (the objective is concave), stopping at the first
    coordinate that hits ``delta``. Once the face is solved, active
    coordinates whose gradient exceeds the face multiplier ``nu`` are
    released.
    """
    grad_center = g.rows(g.gradient, center)

    def gradient(p):
        return c - lam * (g.rows(g.gradient, p) - grad_center)

    p = project_simplex(start, delta)
    d = p.size
    active = p <= delta
    p[active] = delta
    for it in range(max_iter):
        grad = gradient(p)
        free = np.flatnonzero(~active)
        k = free.size
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = lam * np.asarray(g.rows(g.hessian, p), dtype=float)[np.ix_(free, free)]
        kkt[:k, k] = kkt[k, :k] = 1.0
        sol = np.linalg.solve(kkt, np.append(grad[free], 0.0))
        step, nu = np.zeros(d), sol[k]
        step[free] = sol[:k]
        step[free] -= step[free].mean()
        if np.max(np.abs(step)) <= tol:
            violation = grad - nu
            violation[~active] = -np.inf
            worst = int(np.argmax(violation))
            if violation[worst] <= tol * max(1.0, abs(nu)):
                return p, it
            active[worst] = False
            continue
        # largest feasible step, then the exact maximizer along the segment
        shrinking = step < 0
        limits = (p[shrinking] - delta) / -step[shrinking]
        t_max = min(1.0, float(limits.min())) if limits.size else 1.0
        t = t_max
        if float(gradient(p + t_max * step) @ step) < 0:
            lo, hi = 0.0, t_max
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if not lo < mid < hi:
                    break
                if float(gradient(p + mid * step) @ step) >= 0:
                    lo = mid
                else:
                    hi = mid
            t = lo
        p = p + t * step
        if t == t_max and t_max < 1.0:
            hit = shrinking & (p - delta <= 1e-15 + 1e-12 * np.abs(step))
            active |= hit
        p[active] = delta
        p[~active] += (1.0 - p.sum()) / np.count_nonzero(~active)
    raise ConvergenceError("active-set Newton did not converge")


def _separable_argmax(g, center, c, lam, delta, *, max_bisect=400):
    """Closed-form KKT solution of the penalized problem for separable generators.

    Stationarity reads ``p_i = max(delta, (phi_i')^{-1}(phi_i'(center_i) +
    c_i / lam - u))`` with a scalar shift ``u`` chosen so that the weights sum
    to one; the total mass is nonincreasing in ``u``, so ``u`` is found by
    bisection.
    """
    base = g.rows(g.gradient, center) + c / lam
    inverse = g.coordinate_inverse

    def weights(u):
        with np.errstate(over="ignore"):
            return np.maximum(delta, inverse(base - u))

    def excess(u):
        return float(np.sum(weights(u))) - 1.0

    lo, hi, step = 0.0, 0.0, 1.0
    while excess(lo) < 0:
        lo -= step
        step *= 2.0
    step = 1.0
    while excess(hi) > 0:
        hi += step
        step *= 2.0
    its = 0
    for its in range(max_bisect):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    p = weights(hi)
    # remove the residual rounding in the mass from the free coordinates
    free = p > delta
    p[free] *= (1.0 - delta * np.count_nonzero(~free)) / p[free].sum()
    return p, its


def _face_maximizer(g, center, c, delta):
    """Best vertex of the delta-interior simplex for ``<p, c>``.

    Ties spread mass over the maximizing coordinates in proportion to the
    center.
    """
    d = c.size
    top = np.flatnonzero(c >= c.max() - 1e-15 * max(1.0, abs(c.max())))
    p = np.full(d, delta)
    share = center[top] / center[top].sum()
    p[top] = delta + (1.0 - d * delta) * share
    return p


def solve_worst_case(s: AmbiguitySet, c, *, tol: float = 1e-8, max_bisect: int = 200) -> WorstCase:
    """Maximize ``<p, c>`` over the ambiguity set by dual bisection.

    For a multiplier ``lam > 0`` the penalized problem
    ``max_p <p, c> - lam D(p, center)`` is strictly concave; its solution's
    divergence decreases in ``lam``. Bisection on ``log lam`` finds the
    multiplier at which the divergence constraint is active within ``tol``.
    When the unconstrained simplex maximizer already lies in the ball it is
    returned with ``multiplier=0``.
    """
    g = s.generator
    c = np.asarray(c, dtype=float)
    if c.shape != (s.d,):
        raise ValueError(f"loss vector must have length {s.d}")
    if not s.radius > 0:
        raise ValueError("ambiguity set has zero radius")
    center = s.center
    delta = s.delta
    vertex = _face_maximizer(g, center, c, delta)
    div_vertex = bregman(g, vertex, center)
    if div_vertex <= s.radius:
        return WorstCase(vertex, float(vertex @ c), 0.0, div_vertex, 0)

    spread = float(c.max() - c.min())
    if spread == 0.0:
        return WorstCase(center.copy(), float(center @ c), 0.0, 0.0, 0)

    iterations = 0

    def solve(lam, start):
        nonlocal iterations
        if g.coordinate_inverse is not None:
            p, its = _separable_argmax(g, center, c, lam, delta)
        else:
            p, its = _penalized_argmax(g, center, c, lam, delta, start)
        iterations += its
        return p, bregman(g, p, center)

    # bracket: divergence above the radius at lo, below at hi
    lam_hi = spread / math.sqrt(s.radius)
    p_hi, div_hi = solve(lam_hi, center)
    while div_hi > s.radius:
        lam_hi *= 4.0
        p_hi, div_hi = solve(lam_hi, p_hi)
    lam_lo = lam_hi
    p_lo, div_lo = p_hi, div_hi
    while div_lo <= s.radius:
        lam_lo /= 4.0
        if lam_lo < 1e-12 * lam_hi:
            raise ConvergenceError("failed to bracket the multiplier")
        p_lo, div_lo = solve(lam_lo, p_lo)

    best = (p_hi, div_hi, lam_hi)
    for _ in range(max_bisect):
        if s.radius - best[1] <= tol:
            break
        lam = math.sqrt(lam_lo * lam_hi)
        p, div = solve(lam, best[0])
        if div > s.radius:
            lam_lo = lam
        else:
            lam_hi = lam
            best = (p, div, lam)
        if lam_hi / lam_lo - 1.0 < 1e-15:
            break
    p, div, lam = best
    return WorstCase(p, float(p @ c), lam, div, iterations)


def worst_case_linear(s: AmbiguitySet, c):
    """Worst-case expectation of a linear loss over the set.

    Returns
    -------
    p_star : ndarray
    value : float
    """
    sol = solve_worst_case(s, c)
    return sol.p, sol.value


def drso_demo(scenario_losses, s: AmbiguitySet):
    """Pick the action with the smallest worst-case expected loss.

    Parameters
    ----------
    scenario_losses : array_like, shape (n_actions, d)
        Loss of each action under each scenario.
    s : AmbiguitySet

    Returns
    -------
    best_action : int
        Lowest index among the minimizers.
    worst_case_values : ndarray
    """
    losses = np.asarray(scenario_losses, dtype=float)
    if losses.ndim != 2 or losses.shape[1] != s.d:
        raise ValueError(f"loss matrix must have {s.d} columns")
    # each inner maximization is deterministic, so threading leaves the output unchanged
    values = np.array(_rng.map_ordered(lambda row: worst_case_linear(s, row)[1], losses))
    return int(np.argmin(values)), values
