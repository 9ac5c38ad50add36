"""Strictly convex generators and the constants derived from them.

A :class:`ConvexGenerator` bundles a function ``phi`` with its gradient and
Hessian, the set it lives on, and the two simplex constants used by the
concentration bounds:

``grad_bound``
    ``max_{t in simplex} ||grad phi(t)||_2``
``grad_lipschitz``
    Lipschitz constant of ``grad phi`` on the simplex.

All built-in callables are vectorized over leading axes, i.e. ``value``
accepts an array of shape ``(..., d)`` and returns shape ``(...)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import xlogy

DEFAULT_DELTA = 1e-6

BUILTINS = ("squared_l2", "neg_entropy", "itakura_saito", "mahalanobis", "exponential")


class DomainError(ValueError):
    """A point lies outside the set where a generator is finite."""


class ConvergenceError(RuntimeError):
    """An iterative solve stopped without meeting its tolerance."""


class Domain(str, enum.Enum):
    FULL = "full"
    POSITIVE = "positive_orthant"
    UNIT_CUBE = "unit_cube"
    SIMPLEX = "simplex"  # delta-interior simplex


@dataclass(frozen=True, eq=False)
class ConvexGenerator:
    """A strictly convex ``phi: R^d -> R`` with derivatives and metadata.

    For ``Domain.SIMPLEX`` generators the simplex constants are computed on
    the delta-interior simplex ``{p : sum p = 1, p_i >= delta}``; the generator
    itself can still be evaluated anywhere on the positive orthant.
    """

    name: str
    dimension: int
    value: Callable
    gradient: Callable
    hessian: Callable
    domain: Domain
    grad_bound: float
    grad_lipschitz: float
    delta: float = 0.0
    inverse_gradient: Optional[Callable] = None
    # separable with phi_i(0) finite: zero coordinates are allowed in the
    # first argument, and in both arguments simultaneously
    zero_boundary: bool = False
    vectorized: bool = True
    params: dict = field(default_factory=dict)
    # separable generators only: elementwise inverse of the gradient, extended
    # to the whole real line by the limits at the ends of the gradient image
    coordinate_inverse: Optional[Callable] = None

    def __repr__(self):
        return f"ConvexGenerator({self.name!r}, d={self.dimension}, domain={self.domain.value})"

    def in_domain(self, x, *, closed: bool = False) -> np.ndarray:
        """Row-wise membership in the evaluation domain."""
        x = np.asarray(x, dtype=float)
        ok = np.all(np.isfinite(x), axis=-1)
        if self.domain is Domain.FULL:
            return ok
        if self.domain is Domain.UNIT_CUBE:
            return ok & np.all((x > 0) & (x < 1), axis=-1)
        lower_ok = (x >= 0) if (closed and self.zero_boundary) else (x > 0)
        return ok & np.all(lower_ok, axis=-1)

    def check(self, x, *, closed: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dimension,):
            raise ValueError(
                f"{self.name}: expected points of dimension {self.dimension}, got shape {x.shape}"
            )
        if not np.all(self.in_domain(x, closed=closed)):
            raise DomainError(f"{self.name}: point outside {self.domain.value} domain")
        return x

    def interior_point(self) -> np.ndarray:
        if self.domain is Domain.FULL:
            return np.zeros(self.dimension)
        if self.domain is Domain.UNIT_CUBE:
            return np.full(self.dimension, 0.5)
        return np.full(self.dimension, 1.0 / self.dimension)

    def rows(self, func: Callable, x: np.ndarray) -> np.ndarray:
        """Apply ``value``/``gradient``/``hessian`` to a stack of points."""
        x = np.asarray(x, dtype=float)
        if self.vectorized or x.ndim == 1:
            return np.asarray(func(x), dtype=float)
        flat = x.reshape(-1, self.dimension)
        out = np.array([np.asarray(func(row), dtype=float) for row in flat])
        return out.reshape(x.shape[:-1] + out.shape[1:])


def _simplex_vertex(d: int, delta: float) -> np.ndarray:
    """Most extreme point of the delta-interior simplex."""
    v = np.full(d, delta)
    v[-1] = 1.0 - (d - 1) * delta
    return v


def _squared_l2(d: int, scale: float = 1.0) -> ConvexGenerator:
    if scale <= 0:
        raise ValueError("squared_l2 scale must be positive")
    return ConvexGenerator(
        name="squared_l2",
        dimension=d,
        value=lambda x: scale * np.sum(np.square(x), axis=-1),
        gradient=lambda x: 2.0 * scale * np.asarray(x, dtype=float),
        hessian=lambda x: 2.0 * scale * np.eye(d),
        domain=Domain.FULL,
        # ||2 s x|| is convex, so its simplex maximum sits at a vertex
        grad_bound=2.0 * scale,
        grad_lipschitz=2.0 * scale,
        inverse_gradient=lambda y: np.asarray(y, dtype=float) / (2.0 * scale),
        params={"scale": scale},
        coordinate_inverse=lambda y: np.asarray(y, dtype=float) / (2.0 * scale),
    )


def _mahalanobis(d: int, matrix) -> ConvexGenerator:
    if matrix is None:
        raise ValueError("mahalanobis requires a symmetric positive-definite matrix")
    a = np.array(matrix, dtype=float)
    if a.shape != (d, d):
        raise ValueError(f"mahalanobis matrix must be {d}x{d}, got {a.shape}")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("mahalanobis matrix is not symmetric")
    a = 0.5 * (a + a.T)
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise ValueError("mahalanobis matrix is not positive definite") from None
    two_a = 2.0 * a
    a.setflags(write=False)
    return ConvexGenerator(
        name="mahalanobis",
        dimension=d,
        value=lambda x: np.einsum("...i,ij,...j->...", x, a, x),
        gradient=lambda x: np.asarray(x, dtype=float) @ two_a,
        hessian=lambda x: two_a.copy(),
        domain=Domain.FULL,
        grad_bound=float(np.max(np.linalg.norm(two_a, axis=0))),
        grad_lipschitz=float(np.linalg.eigvalsh(two_a)[-1]),
        inverse_gradient=lambda y: np.linalg.solve(two_a, np.asarray(y, dtype=float).T).T,
        params={"matrix": a},
    )


def _neg_entropy(d: int, delta: float) -> ConvexGenerator:
    vertex = _simplex_vertex(d, delta)
    return ConvexGenerator(
        name="neg_entropy",
        dimension=d,
        value=lambda x: np.sum(xlogy(x, x), axis=-1),
        gradient=lambda x: np.log(x) + 1.0,
        hessian=lambda x: np.diag(1.0 / np.asarray(x, dtype=float)),
        domain=Domain.SIMPLEX,
        # (log t + 1)^2 is convex on (0, 1], so the maximum is at a vertex
        grad_bound=float(np.linalg.norm(np.log(vertex) + 1.0)),
        grad_lipschitz=1.0 / delta,
        delta=delta,
        inverse_gradient=lambda y: np.exp(np.asarray(y, dtype=float) - 1.0),
        zero_boundary=True,
        params={"delta": delta},
        coordinate_inverse=lambda y: np.exp(np.asarray(y, dtype=float) - 1.0),
    )


def _itakura_saito_inverse(y):
    y = np.asarray(y, dtype=float)
    if np.any(y >= 0):
        raise DomainError("itakura_saito: gradient image is the negative orthant")
    return -1.0 / y


def _itakura_saito_extended(y):
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(y < 0, -1.0 / np.minimum(y, -1e-300), np.inf)


def _itakura_saito(d: int, delta: float) -> ConvexGenerator:
    vertex = _simplex_vertex(d, delta)
    return ConvexGenerator(
        name="itakura_saito",
        dimension=d,
        value=lambda x: -np.sum(np.log(x), axis=-1),
        gradient=lambda x: -1.0 / np.asarray(x, dtype=float),
        hessian=lambda x: np.diag(1.0 / np.square(np.asarray(x, dtype=float))),
        domain=Domain.SIMPLEX,
        grad_bound=float(np.linalg.norm(1.0 / vertex)),
        grad_lipschitz=1.0 / delta**2,
        delta=delta,
        inverse_gradient=_itakura_saito_inverse,
        params={"delta": delta},
        coordinate_inverse=_itakura_saito_extended,
    )


def _exponential_inverse(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("exponential: gradient image is the positive orthant")
    return np.log(y)


def _exponential_extended(y):
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(y > 0, np.log(np.maximum(y, 1e-300)), -np.inf)


def _exponential(d: int) -> ConvexGenerator:
    return ConvexGenerator(
        name="exponential",
        dimension=d,
        value=lambda x: np.sum(np.exp(x), axis=-1),
        gradient=lambda x: np.exp(np.asarray(x, dtype=float)),
        hessian=lambda x: np.diag(np.exp(np.asarray(x, dtype=float))),
        domain=Domain.FULL,
        grad_bound=math.sqrt(d - 1 + math.e**2),
        grad_lipschitz=math.e,
        inverse_gradient=_exponential_inverse,
        coordinate_inverse=_exponential_extended,
    )


def make_builtin(name: str, dimension: int, *, delta: float = DEFAULT_DELTA,
                 matrix=None, scale: float = 1.0) -> ConvexGenerator:
    """Build one of the named generators.

    Parameters
    ----------
    name : str
        One of ``squared_l2``, ``neg_entropy``, ``itakura_saito``,
        ``mahalanobis``, ``exponential``.
    dimension : int
        Ambient dimension ``d >= 1``.
    delta : float
        Interior margin for the boundary-singular generators (``neg_entropy``,
        ``itakura_saito``); ignored otherwise.
    matrix : array_like, optional
        SPD matrix ``A`` for ``mahalanobis`` (``phi(x) = x^T A x``).
    scale : float
        ``squared_l2`` only: ``phi(x) = scale * ||x||^2``.
    """
    d = int(dimension)
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if name in ("neg_entropy", "itakura_saito"):
        if not 0 < delta <= 1.0 / d:
            raise ValueError(f"delta must lie in (0, 1/d], got {delta}")
    if name == "squared_l2":
        return _squared_l2(d, scale)
    if name == "mahalanobis":
        return _mahalanobis(d, matrix)
    if name == "neg_entropy":
        return _neg_entropy(d, delta)
    if name == "itakura_saito":
        return _itakura_saito(d, delta)
    if name == "exponential":
        return _exponential(d)
    raise ValueError(f"unknown generator {name!r}; expected one of {', '.join(BUILTINS)}")


GENERATOR_KEYS = frozenset({"generator", "delta", "mahalanobis_matrix", "dimension", "scale"})


def generator_from_config(cfg: dict, dimension: Optional[int] = None) -> ConvexGenerator:
    """Build a built-in generator from a configuration mapping.

    Recognized keys are ``generator``, ``delta``, ``mahalanobis_matrix``
    (row-major nested list), ``dimension`` and ``scale``. The dimension may
    come from the mapping, the matrix or the ``dimension`` argument; all
    sources that are present must agree.
    """
    unknown = set(cfg) - GENERATOR_KEYS
    if unknown:
        raise ValueError(f"unknown configuration keys {sorted(unknown)}")
    if "generator" not in cfg:
        raise ValueError("configuration needs a 'generator' entry")
    matrix = cfg.get("mahalanobis_matrix")
    dims = set()
    if cfg.get("dimension") is not None:
        dims.add(int(cfg["dimension"]))
    if matrix is not None:
        dims.add(len(matrix))
    if dimension is not None:
        dims.add(int(dimension))
    if len(dims) != 1:
        raise ValueError(f"cannot determine a unique dimension from {sorted(dims) or 'nothing'}")
    kwargs = {}
    if "delta" in cfg:
        kwargs["delta"] = float(cfg["delta"])
    if "scale" in cfg:
        kwargs["scale"] = float(cfg["scale"])
    if matrix is not None:
        kwargs["matrix"] = np.asarray(matrix, dtype=float)
    return make_builtin(str(cfg["generator"]), dims.pop(), **kwargs)


def generator_config(g: ConvexGenerator) -> dict:
    """Inverse of :func:`generator_from_config` for built-in generators."""
    if g.name not in BUILTINS:
        raise ValueError(f"generator {g.name!r} is not a built-in and cannot be serialized")
    cfg = {"generator": g.name, "dimension": g.dimension}
    if "delta" in g.params:
        cfg["delta"] = float(g.params["delta"])
    if "scale" in g.params:
        cfg["scale"] = float(g.params["scale"])
    if "matrix" in g.params:
        cfg["mahalanobis_matrix"] = np.asarray(g.params["matrix"]).tolist()
    return cfg


def custom_generator(name, dimension, value, gradient, hessian, *, grad_bound,
                     grad_lipschitz, domain=Domain.FULL, delta=0.0,
                     vectorized=False) -> ConvexGenerator:
    """Wrap user-supplied callables.

    ``grad_bound`` and ``grad_lipschitz`` are mandatory: they feed every
    concentration bound and are never estimated on the user's behalf.
    """
    for label, const in (("grad_bound", grad_bound), ("grad_lipschitz", grad_lipschitz)):
        if const is None or not np.isfinite(const) or const < 0:
            raise ValueError(f"{label} must be a finite nonnegative number")
    if int(dimension) < 1:
        raise ValueError("dimension must be >= 1")
    return ConvexGenerator(
        name=name,
        dimension=int(dimension),
        value=value,
        gradient=gradient,
        hessian=hessian,
        domain=Domain(domain),
        grad_bound=float(grad_bound),
        grad_lipschitz=float(grad_lipschitz),
        delta=float(delta),
        vectorized=vectorized,
    )


def newton_gradient_inverse(g: ConvexGenerator, y, x0=None, *, tol=1e-12,
                            max_steps=100, max_halvings=60) -> np.ndarray:
    """Solve ``grad phi(x) = y`` by damped Newton iteration.

    Each step is halved until the residual norm decreases and the iterate stays
    in the domain.
    """
    y = np.asarray(y, dtype=float)
    x = g.interior_point() if x0 is None else np.array(x0, dtype=float)
    # max-norm: the Euclidean norm overflows for residuals near 1e300
    residual = g.rows(g.gradient, x) - y
    norm = np.max(np.abs(residual))
    scale = max(1.0, float(np.max(np.abs(y))))
    for _ in range(max_steps):
        if norm <= tol * scale:
            return x
        step = np.linalg.solve(g.rows(g.hessian, x), residual)
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = x - t * step
            if g.in_domain(trial):
                with np.errstate(all="ignore"):
                    r_trial = g.rows(g.gradient, trial) - y
                n_trial = np.max(np.abs(r_trial))
                if np.isfinite(n_trial) and n_trial < norm:
                    break
            t *= 0.5
        else:
            if norm <= 1e-10:
                return x
            raise ConvergenceError(f"{g.name}: Newton step failed to reduce the residual")
        x, residual, norm = trial, r_trial, n_trial
    if norm <= 1e-10:
        return x
    raise ConvergenceError(f"{g.name}: no convergence within {max_steps} Newton steps")


def legendre_gradient_inverse(g: ConvexGenerator, y, *, method: str = "auto") -> np.ndarray:
    """Return ``x`` with ``grad phi(x) = y``.

    ``method="auto"`` uses the closed form when the generator has one and falls
    back to damped Newton; ``method="newton"`` forces the iteration.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (g.dimension,):
        raise ValueError(f"expected a point of dimension {g.dimension}")
    if not np.all(np.isfinite(y)):
        raise DomainError("gradient value must be finite")
    if method == "auto" and g.inverse_gradient is not None:
        x = np.asarray(g.inverse_gradient(y), dtype=float)
        if not np.all(g.in_domain(x)):
            raise DomainError(f"{g.name}: {y} is outside the gradient image")
        return x
    if method not in ("auto", "newton"):
        raise ValueError(f"unknown method {method!r}")
    return newton_gradient_inverse(g, y)


def conjugate_value(g: ConvexGenerator, y) -> float:
    """Convex conjugate ``phi*(y) = <y, x> - phi(x)`` with ``grad phi(x) = y``."""
    y = np.asarray(y, dtype=float)
    x = legendre_gradient_inverse(g, y)
    return float(y @ x - g.rows(g.value, x))


def check_simplex(p, delta: float = 0.0, atol: float = 1e-12) -> np.ndarray:
    """Validate a weight vector on the (delta-interior) simplex."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("simplex point must be a non-empty vector")
    if not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > atol:
        raise ValueError(f"weights must sum to 1 (got {p.sum()!r})")
    if np.any(p < delta):
        raise DomainError(f"weights must be >= {delta}")
    return p


def clamp_to_interior(p, delta: float) -> np.ndarray:
    """Clamp weights to ``>= delta`` and renormalize the unclamped mass.

    Coordinates pinned at ``delta`` stay there exactly; the rest are rescaled
    to fill ``1 - k * delta``. Repeats until no rescaled coordinate drops
    below ``delta``.
    """
    p = np.asarray(p, dtype=float)
    d = p.size
    if delta * d > 1:
        raise ValueError("delta too large for the dimension")
    if delta <= 0 or np.all(p >= delta):
        return p / p.sum()
    pinned = p < delta
    while True:
        free = ~pinned
        out = np.full(d, delta)
        mass = p[free].sum()
        if mass <= 0:
            raise DomainError("all mass falls below delta")
        out[free] = p[free] * (1.0 - delta * pinned.sum()) / mass
        newly = free & (out < delta)
        if not newly.any():
            return out
        pinned |= newly
