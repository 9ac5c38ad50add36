"""Weighted chi-square limit of ``n D_phi(p, p_hat_n)`` for categorical data.

For the empirical distribution of ``n`` categorical draws,
``n D_phi(p, p_hat_n)`` converges in law to ``0.5 * sum_i beta_i Z_i^2`` where
``beta`` is the nonzero spectrum of ``H Sigma``, ``H`` the Hessian of ``phi``
at ``p`` and ``Sigma = diag(p) - p p^T`` the multinomial covariance. Quantiles
of the limit are estimated by Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _rng
from .divergence import bregman_rows
from .generators import ConvexGenerator, Domain, DomainError, check_simplex, clamp_to_interior

EIG_RTOL = 1e-10


def jacobi_eigh(a, *, tol: float = 1e-15, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    v : ndarray
        Orthonormal eigenvectors as columns, ``a @ v = v * w``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.linalg.norm(a) or 1.0
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    # the rotation angle underflows; t ~ 1 / (2 theta)
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                vp = c * v[:, p] - s * v[:, q]
                vq = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = vp, vq
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def categorical_sigma(p) -> np.ndarray:
    """Asymptotic covariance ``diag(p) - p p^T`` of ``sqrt(n) (p_hat_n - p)``."""
    p = check_simplex(p, atol=1e-9)
    if np.any(p <= 0):
        raise DomainError("categorical covariance needs an interior p")
    return np.diag(p) - np.outer(p, p)


def psd_sqrt(sigma) -> np.ndarray:
    """Symmetric PSD square root, zeroing eigenvalues below ``1e-10 * max``."""
    w, v = jacobi_eigh(sigma)
    w = np.where(w > EIG_RTOL * max(w.max(), 0.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.T


@dataclass(frozen=True, eq=False)
class SpectralLimit:
    eigenvalues: np.ndarray
    rank: int
    hessian: np.ndarray
    sigma: np.ndarray


def limit_spectrum(g: ConvexGenerator, p) -> SpectralLimit:
    """Nonzero spectrum of ``H Sigma`` computed as that of ``S^T H S``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (g.dimension,):
        raise ValueError(f"p must have length {g.dimension}")
    sigma = categorical_sigma(p)
    h = np.asarray(g.rows(g.hessian, g.check(p)), dtype=float)
    if not np.all(np.isfinite(h)):
        raise DomainError(f"{g.name}: Hessian is not finite at p")
    if np.linalg.eigvalsh(0.5 * (h + h.T))[0] <= 0:
        raise DomainError(f"{g.name}: Hessian is singular at p")
    s = psd_sqrt(sigma)
    w, _ = jacobi_eigh(s.T @ h @ s)
    keep = np.abs(w) > EIG_RTOL * np.abs(w).max()
    beta = np.sort(w[keep])[::-1]
    if np.any(beta <= 0):
        raise DomainError("retained eigenvalues must be positive")
    return SpectralLimit(eigenvalues=beta, rank=int(beta.size), hessian=h, sigma=sigma)


def subspace_spectrum(m, *, iters: int = 20000, tol: float = 1e-14) -> np.ndarray:
    """Eigenvalues of a (possibly non-symmetric) matrix by orthogonal iteration.

    Intended for small matrices with real spectra; used to cross-check the
    symmetric route.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    q = np.linalg.qr(np.eye(n) + 0.1 * np.arange(1, n * n + 1).reshape(n, n) / (n * n))[0]
    prev = None
    for _ in range(iters):
        q, r = np.linalg.qr(m @ q)
        diag = np.diag(q.T @ m @ q)
        if prev is not None and np.max(np.abs(diag - prev)) <= tol * max(1.0, np.abs(diag).max()):
            break
        prev = diag
    return np.sort(np.diag(q.T @ m @ q))[::-1]


def weighted_chi2_draws(beta, size: int, seed: int, stream: int = 0) -> np.ndarray:
    """``size`` replicates of ``sum_i beta_i Z_i^2`` from the seeded stream."""
    beta = np.asarray(beta, dtype=float)
    z = _rng.standard_normal(seed, (size, beta.size), stream=stream)
    return np.square(z) @ beta


def mc_quantile(spec, alpha: float, K: int = 10000, seed: int = 0) -> float:
    """Monte Carlo ``alpha``-quantile of ``sum_i beta_i Z_i^2``.

    ``spec`` is a :class:`SpectralLimit` or a plain sequence of weights. The
    empirical quantile interpolates linearly between order statistics.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if K < 1000:
        raise ValueError("K must be at least 1000")
    beta = spec.eigenvalues if isinstance(spec, SpectralLimit) else np.asarray(spec, dtype=float)
    return float(np.quantile(weighted_chi2_draws(beta, int(K), seed), alpha))


def _needs_clamp(g: ConvexGenerator) -> bool:
    return g.domain is Domain.SIMPLEX


def empirical_distributions(p, n: int, M: int, seed: int, stream_offset: int = 0) -> np.ndarray:
    """``M`` empirical distributions of ``n`` categorical draws, shape ``(M, d)``."""
    p = check_simplex(p, atol=1e-9)

    def chunk(index, size):
        rng = _rng.generator(seed, stream_offset + index)
        return rng.multinomial(n, p, size=size).astype(float) / n

    parts = _rng.map_chunks(lambda i, s: chunk(i, s).ravel(), M, chunk=4096)
    return parts.reshape(M, p.size)


def law_samples(g: ConvexGenerator, p, n: int, M: int, seed: int, *,
                direction: str = "true_first", p_hat=None) -> np.ndarray:
    """Simulated ``n D_phi(p, p_hat_n)`` (or ``n D_phi(p_hat_n, p)``).

    Boundary-singular generators see ``p_hat_n`` clamped into the
    delta-interior simplex.
    """
    p = check_simplex(p, atol=1e-9)
    if p_hat is None:
        p_hat = empirical_distributions(p, n, M, seed)
    if _needs_clamp(g):
        p_hat = np.array(p_hat, dtype=float)
        for k in np.flatnonzero(np.any(p_hat < g.delta, axis=1)):
            p_hat[k] = clamp_to_interior(p_hat[k], g.delta)
    if direction == "true_first":
        return n * bregman_rows(g, p, p_hat)
    if direction == "empirical_first":
        return n * bregman_rows(g, p_hat, p)
    raise ValueError("direction must be 'true_first' or 'empirical_first'")


@dataclass(frozen=True, eq=False)
class LawCheck:
    ks: float
    statistics: np.ndarray
    limit: SpectralLimit


def empirical_law_check(g: ConvexGenerator, p, n: int, M: int, seed: int, *,
                        K: int = 10**6, full: bool = False):
    """KS distance between simulated ``n D_phi(p, p_hat_n)`` and the limit law.

    The limit CDF is the empirical CDF of ``K`` draws of
    ``0.5 * sum beta_i Z_i^2`` from an independent stream. Returns the KS
    statistic, or a :class:`LawCheck` with the raw statistics when ``full``.
    """
    if n < 100 or M < 1000:
        raise ValueError("need n >= 100 and M >= 1000")
    limit = limit_spectrum(g, p)
    sims = law_samples(g, p, n, M, seed)
    reference = 0.5 * weighted_chi2_draws(limit.eigenvalues, int(K), seed, stream=2**32)
    ks = float(stats.ks_2samp(sims, reference).statistic)
    return LawCheck(ks, sims, limit) if full else ks
