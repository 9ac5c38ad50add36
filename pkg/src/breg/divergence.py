"""Bregman divergences and the structural identities they satisfy."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import xlogy

from .generators import ConvexGenerator, DomainError, conjugate_value, legendre_gradient_inverse

FISHER_FAMILIES = ("bernoulli", "poisson_truncated", "gaussian_unit_var")


def bregman_rows(g: ConvexGenerator, x, y) -> np.ndarray:
    """Broadcasted ``D_phi(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>``.

    ``x`` and ``y`` are stacks of points broadcasting against each other on
    their leading axes. A coordinate equal to zero in both arguments
    contributes nothing for generators that allow it (``0 log 0 = 0``); a
    zero in ``y`` against a positive ``x`` gives an infinite divergence and
    raises.
    """
    x = g.check(x, closed=True)
    y = g.check(y, closed=True)
    diff = x - y
    with np.errstate(divide="ignore", invalid="ignore"):
        grad_y = g.rows(g.gradient, y)
        prod = grad_y * diff
    if g.zero_boundary:
        prod = np.where(diff == 0, 0.0, prod)
    if not np.all(np.isfinite(prod)):
        raise DomainError(f"{g.name}: divergence is infinite (zero weight in second argument)")
    out = g.rows(g.value, x) - g.rows(g.value, y) - np.sum(prod, axis=-1)
    return out


def bregman(g: ConvexGenerator, x, y) -> float:
    """Bregman divergence ``D_phi(x, y)`` between two points.

    Examples
    --------
    >>> from breg.generators import make_builtin
    >>> g = make_builtin("neg_entropy", 2)
    >>> round(bregman(g, [0.5, 0.5], [0.25, 0.75]), 6)
    0.143841
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (g.dimension,) or y.shape != (g.dimension,):
        raise ValueError(f"expected two points of dimension {g.dimension}")
    return float(bregman_rows(g, x, y))


def duality_gap(g: ConvexGenerator, p, q) -> float:
    """``|D_phi(p, q) - D_phi*(q*, p*)|`` with ``p* = grad phi(p)``.

    The conjugate side only uses ``phi*`` values and ``grad phi* =
    (grad phi)^{-1}``, evaluated through :func:`legendre_gradient_inverse`.
    """
    p = g.check(np.asarray(p, dtype=float))
    q = g.check(np.asarray(q, dtype=float))
    p_star = g.rows(g.gradient, p)
    q_star = g.rows(g.gradient, q)
    grad_conj_at_p_star = legendre_gradient_inverse(g, p_star)
    conj = (conjugate_value(g, q_star) - conjugate_value(g, p_star)
            - float(grad_conj_at_p_star @ (q_star - p_star)))
    return abs(bregman(g, p, q) - conj)


def bias_variance_check(g: ConvexGenerator, estimator_samples, theta):
    """Both sides of ``E D(T, t) = D(E T, t) + E D(T, E T)``.

    Expectations are plain averages over the supplied samples, so the two
    sides agree up to rounding.

    Returns
    -------
    lhs, rhs : float
    """
    samples = np.asarray(estimator_samples, dtype=float)
    if samples.size == 0:
        raise ValueError("need at least one estimator sample")
    samples = samples.reshape(len(samples), g.dimension)
    theta = np.asarray(theta, dtype=float).reshape(g.dimension)
    mean = samples.mean(axis=0)
    lhs = float(np.mean(bregman_rows(g, samples, theta)))
    rhs = float(bregman_rows(g, mean, theta)) + float(np.mean(bregman_rows(g, samples, mean)))
    return lhs, rhs


# scalar generators of the three one-parameter families, with (phi, phi', phi'')
def _bernoulli_phi(mu):
    return xlogy(mu, mu) + xlogy(1.0 - mu, 1.0 - mu)


def _poisson_phi(mu):
    return xlogy(mu, mu) - mu


_FAMILY = {
    "bernoulli": (
        _bernoulli_phi,
        lambda mu: math.log(mu / (1.0 - mu)),
        lambda mu: 1.0 / (mu * (1.0 - mu)),
    ),
    "poisson_truncated": (_poisson_phi, math.log, lambda mu: 1.0 / mu),
    "gaussian_unit_var": (lambda mu: 0.5 * np.square(mu), lambda mu: mu, lambda mu: 1.0),
}


def _family_support(family: str, mu: float, support_bound: int, quad_order: int):
    if family == "bernoulli":
        if not 0.0 < mu < 1.0:
            raise DomainError("bernoulli mean must lie in (0, 1)")
        return np.array([0.0, 1.0]), np.array([1.0 - mu, mu])
    if family == "poisson_truncated":
        if not mu > 0.0:
            raise DomainError("poisson mean must be positive")
        k = np.arange(support_bound + 1, dtype=float)
        log_pmf = k * math.log(mu) - mu - np.array([math.lgamma(v + 1.0) for v in k])
        return k, np.exp(log_pmf)
    if not math.isfinite(mu):
        raise DomainError("gaussian mean must be finite")
    nodes, weights = np.polynomial.hermite_e.hermegauss(quad_order)
    return mu + nodes, weights / math.sqrt(2.0 * math.pi)


def fisher_identity_check(family: str, mu: float, *, support_bound: int = 200,
                          quad_order: int = 40):
    """Compare ``E[d^2/dmu^2 D_phi(X, mu)]`` with ``phi''(mu)``.

    The left side takes central second differences in ``mu`` with step
    ``1e-4 * max(1, |mu|)`` and averages them exactly (Bernoulli), over a
    truncated support (Poisson) or by Gauss-Hermite quadrature (Gaussian).
    """
    if family not in _FAMILY:
        raise ValueError(f"unknown family {family!r}; expected one of {FISHER_FAMILIES}")
    phi, dphi, d2phi = _FAMILY[family]
    support, weights = _family_support(family, float(mu), support_bound, quad_order)
    h = 1e-4 * max(1.0, abs(mu))
    if family == "bernoulli" and not h < mu < 1.0 - h:
        raise DomainError("mean too close to the boundary for the difference step")
    if family == "poisson_truncated" and not mu > h:
        raise DomainError("mean too close to the boundary for the difference step")

    def div(m):
        return phi(support) - phi(m) - dphi(m) * (support - m)

    second = (div(mu + h) - 2.0 * div(mu) + div(mu - h)) / (h * h)
    return float(weights @ second), float(d2phi(mu))
