"""Finite-sample tail bounds for Bregman divergences of empirical distributions.

Two directions are covered:

``empirical_first``
    ``Z = D_phi(p_hat_n, p)``
``true_first``
    ``Y = D_phi(p, p_hat_n)``

and two forms of each bound. ``paper_stated`` uses the exponents
``-n^2 eps^2 / (4 d M)`` and ``-n^2 eps^2 / (4 d (M + L)^2)``.
``mcdiarmid_rederived`` (the default) plugs the per-sample differences
``2 sqrt(2) M / n`` and ``2 sqrt(2) (M + L) / n`` into the bounded difference
inequality, which gives ``exp(-n eps^2 / (4 M^2))`` and
``exp(-n eps^2 / (4 (M + L)^2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .asymptotics import empirical_distributions, law_samples
from .generators import ConvexGenerator, check_simplex

FORMS = ("paper_stated", "mcdiarmid_rederived")
DIRECTIONS = ("empirical_first", "true_first")


def _validate(form, direction):
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")


def _constants(g: ConvexGenerator):
    m, l = g.grad_bound, g.grad_lipschitz
    if m is None or l is None or not (math.isfinite(m) and math.isfinite(l)):
        raise ValueError(f"{g.name}: simplex constants must be finite")
    return float(m), float(l)


def _exponent_scale(form, direction, g, n, d):
    """``c`` such that the bound is ``exp(-eps^2 / c)``."""
    m, l = _constants(g)
    spread = m if direction == "empirical_first" else m + l
    if form == "mcdiarmid_rederived":
        return 4.0 * spread**2 / n
    if direction == "empirical_first":
        return 4.0 * d * m / n**2
    return 4.0 * d * spread**2 / n**2


@dataclass(frozen=True)
class ConcentrationBound:
    form: str
    direction: str
    n: int
    d: int
    M_phi: float
    L_phi: float
    epsilon: float
    tail_probability: float


def tail_bound(form: str, direction: str, g: ConvexGenerator, n: int, d: int,
               epsilon: float) -> float:
    """Upper bound on ``P(X - E X >= epsilon)``, capped at one."""
    _validate(form, direction)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    return min(1.0, math.exp(-epsilon**2 / _exponent_scale(form, direction, g, n, d)))


def bound_record(form, direction, g, n, d, epsilon) -> ConcentrationBound:
    return ConcentrationBound(form, direction, n, d, g.grad_bound, g.grad_lipschitz,
                              epsilon, tail_bound(form, direction, g, n, d, epsilon))


def mean_upper_bound(direction: str, g: ConvexGenerator, n: int, d: int) -> float:
    """Upper bound on the expected divergence.

    ``true_first``: ``M sqrt(d / 4n) + L d / 4n``;
    ``empirical_first``: ``M sqrt(d / 4n)``.
    """
    _validate(FORMS[1], direction)
    m, l = _constants(g)
    ratio = d / (4.0 * n)
    bound = m * math.sqrt(ratio)
    if direction == "true_first":
        bound += l * ratio
    return bound


def deviation_for_confidence(form, direction, g, n, d, delta_conf) -> float:
    """``eps`` with ``tail_bound(eps) = delta_conf``."""
    _validate(form, direction)
    if not 0.0 < delta_conf < 1.0:
        raise ValueError("delta_conf must lie in (0, 1)")
    return math.sqrt(_exponent_scale(form, direction, g, n, d) * math.log(1.0 / delta_conf))


def radius_for_confidence(direction: str, g: ConvexGenerator, n: int, d: int,
                          delta_conf: float, form: str = "mcdiarmid_rederived") -> float:
    """Mean bound plus the deviation whose tail bound equals ``delta_conf``."""
    return mean_upper_bound(direction, g, n, d) + deviation_for_confidence(
        form, direction, g, n, d, delta_conf)


@dataclass(frozen=True, eq=False)
class TailTable:
    eps: np.ndarray
    freq: np.ndarray
    paper_bound: np.ndarray
    mcdiarmid_bound: np.ndarray
    mean: float
    replications: int

    def slack(self) -> np.ndarray:
        """Three binomial standard errors of each frequency."""
        return 3.0 * np.sqrt(self.freq * (1.0 - self.freq) / self.replications)

    def holds(self) -> np.ndarray:
        return self.freq <= self.mcdiarmid_bound + self.slack()

    def rows(self):
        return list(zip(self.eps, self.freq, self.paper_bound, self.mcdiarmid_bound))


def empirical_tail_check(direction: str, g: ConvexGenerator, p, n: int, M: int,
                         eps_grid, seed: int) -> TailTable:
    """Simulated tail frequencies of ``X - mean(X)`` against both bounds.

    The expectation is replaced by the replicate mean. Boundary-singular
    generators see ``p_hat_n`` clamped into the delta-interior simplex, and
    their constants are the delta-interior ones.
    """
    _validate(FORMS[1], direction)
    p = check_simplex(p, atol=1e-9)
    d = p.size
    p_hat = empirical_distributions(p, n, M, seed)
    stats = law_samples(g, p, n, M, seed, direction=direction, p_hat=p_hat) / n
    mean = float(stats.mean())
    eps = np.asarray(eps_grid, dtype=float)
    freq = np.array([np.mean(stats - mean >= e) for e in eps])
    paper = np.array([tail_bound("paper_stated", direction, g, n, d, e) for e in eps])
    mcd = np.array([tail_bound("mcdiarmid_rederived", direction, g, n, d, e) for e in eps])
    return TailTable(eps, freq, paper, mcd, mean, int(M))
