"""Distribution learning with the Wasserstein-Bregman divergence as the loss.

The model is a location-scale pushforward of a fixed base sample,
``P_theta = uniform{loc + scale * z_j}``, fitted to a discrete target ``Q`` by
minimizing ``W_D(Q, P_theta)``. The objective is locally Lipschitz and
differentiable almost everywhere in ``theta``; gradients are central finite
differences and descent uses a backtracking line search.

Parameters are packed as ``theta = [loc_1..loc_d, log_scale_1..log_scale_d]``
so the scale stays positive.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from . import _rng
from .generators import ConvexGenerator, DomainError
from .transport import DiscreteDistribution, wasserstein_bregman

log = logging.getLogger(__name__)

MAX_ATOMS = 64
FD_STEP = 1e-5
MAX_HALVINGS = 30


class ObjectiveError(RuntimeError):
    """Objective evaluation failed; ``theta`` holds the offending parameters."""

    def __init__(self, message, theta):
        super().__init__(f"{message} at theta={list(map(float, theta))}")
        self.theta = np.array(theta, dtype=float)


class PushforwardFamily:
    """Affine pushforward ``z -> loc + scale * z`` of a fixed base sample."""

    def __init__(self, base_sample):
        z = np.asarray(base_sample, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.ndim != 2 or z.shape[0] == 0:
            raise ValueError("base sample must be a non-empty (m, d) array")
        if z.shape[0] > MAX_ATOMS:
            raise ValueError(f"base sample larger than {MAX_ATOMS} points")
        if not np.all(np.isfinite(z)):
            raise ValueError("base sample must be finite")
        z.setflags(write=False)
        self.base_sample = z

    @property
    def dimension(self) -> int:
        return self.base_sample.shape[1]

    @property
    def n_params(self) -> int:
        return 2 * self.dimension

    def pack(self, loc, scale) -> np.ndarray:
        loc = np.broadcast_to(np.asarray(loc, dtype=float), (self.dimension,))
        scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.dimension,))
        if np.any(scale <= 0):
            raise ValueError("scale must be positive")
        return np.concatenate([loc, np.log(scale)])

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta must have length {self.n_params}")
        d = self.dimension
        return theta[:d], np.exp(theta[d:])

    def atoms(self, theta) -> np.ndarray:
        loc, scale = self.unpack(theta)
        return loc + scale * self.base_sample

    def distribution(self, theta) -> DiscreteDistribution:
        return DiscreteDistribution(self.atoms(theta))


def objective(g: ConvexGenerator, Q: DiscreteDistribution, fam: PushforwardFamily, theta) -> float:
    """``W_D(Q, P_theta)`` with the exact transport solver.

    Raises :class:`~breg.generators.DomainError` when a pushforward atom
    leaves the generator's domain.
    """
    if Q.size > MAX_ATOMS:
        raise ValueError(f"target has more than {MAX_ATOMS} atoms")
    if Q.dimension != fam.dimension or g.dimension != fam.dimension:
        raise ValueError("target, family and generator dimensions differ")
    atoms = fam.atoms(theta)
    if not np.all(np.isfinite(atoms)):
        raise DomainError("pushforward atoms are not finite")
    with np.errstate(over="raise", invalid="raise"):
        try:
            value = wasserstein_bregman(g, Q, DiscreteDistribution(atoms))
        except FloatingPointError as exc:
            raise DomainError(f"{g.name}: overflow evaluating the ground cost") from exc
    if not math.isfinite(value):
        raise DomainError("objective is not finite")
    return max(value, 0.0)


def fd_gradient(func, theta, step: float = FD_STEP) -> np.ndarray:
    """Central differences ``(f(t + h e_i) - f(t - h e_i)) / 2h``.

    The ``2 dim(theta)`` evaluations are spread over worker threads.
    """
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    shifts = []
    for i in range(k):
        for sign in (1.0, -1.0):
            t = theta.copy()
            t[i] += sign * step
            shifts.append(t)
    values = np.array(_rng.map_ordered(func, shifts)).reshape(k, 2)
    return (values[:, 0] - values[:, 1]) / (2.0 * step)


def fit(g: ConvexGenerator, Q: DiscreteDistribution, fam: PushforwardFamily, theta0,
        steps: int, lr: float, *, fd_step: float = FD_STEP, callback=None):
    """Gradient descent on ``W_D(Q, P_theta)``.

    Each step tries ``theta - lr * grad`` and halves the step (at most 30
    times) until the objective strictly decreases; a trial point outside the
    domain counts as no decrease. If no halving succeeds the iterate stays
    put, so the trace is nonincreasing.

    ``callback(step, theta, value)``, if given, sees the starting point as
    step 0 and every accepted iterate after it.

    Returns
    -------
    theta : ndarray
    trace : list of float
        Objective before the first step and after every step
        (``steps + 1`` values).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not lr > 0:
        raise ValueError("lr must be positive")

    def f(theta):
        try:
            return objective(g, Q, fam, theta)
        except DomainError as exc:
            raise ObjectiveError(str(exc), theta) from exc

    theta = np.array(theta0, dtype=float)
    value = f(theta)
    trace = [value]
    if callback is not None:
        callback(0, theta.copy(), value)
    for step in range(steps):
        grad = fd_gradient(f, theta, fd_step)
        t = lr
        for _ in range(MAX_HALVINGS + 1):
            trial = theta - t * grad
            try:
                trial_value = objective(g, Q, fam, trial)
            except DomainError:
                trial_value = math.inf
            if trial_value < value:
                theta, value = trial, trial_value
                break
            t *= 0.5
        else:
            log.debug("step %d: line search found no decrease", step)
        trace.append(value)
        if callback is not None:
            callback(step + 1, theta.copy(), value)
    return theta, trace


def _ball_points(rng, center, radius, trials, coordinates):
    k = coordinates.size
    directions = rng.standard_normal((trials, k))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=trials) ** (1.0 / k)
    points = np.repeat(center[None, :], trials, axis=0)
    points[:, coordinates] += directions * radii[:, None]
    return points


def lipschitz_probe(g: ConvexGenerator, Q: DiscreteDistribution, fam: PushforwardFamily, theta,
                    radius: float, trials: int, seed: int, *, coordinates=None) -> float:
    """Largest ``|f(theta') - f(theta)| / ||theta' - theta||`` over random ``theta'``.

    ``theta'`` is uniform in the ``radius`` ball around ``theta``, restricted
    to ``coordinates`` when given.
    """
    if not radius > 0 or trials < 1:
        raise ValueError("need radius > 0 and trials >= 1")
    theta = np.asarray(theta, dtype=float)
    coords = np.arange(theta.size) if coordinates is None else np.asarray(coordinates, dtype=int)
    rng = _rng.generator(seed)
    points = _ball_points(rng, theta, radius, int(trials), coords)
    base = objective(g, Q, fam, theta)
    values = np.array(_rng.map_ordered(lambda t: objective(g, Q, fam, t), points))
    dist = np.linalg.norm(points - theta, axis=1)
    return float(np.max(np.abs(values - base) / dist))


def lipschitz_stability(g, Q, fam, theta, radius, trials, seed, *, coordinates=None):
    """Probe ratios at ``radius`` and ``radius / 2``; stable when within a factor 2.

    Returns
    -------
    ratio, half_ratio : float
    stable : bool
    """
    ratio = lipschitz_probe(g, Q, fam, theta, radius, trials, seed, coordinates=coordinates)
    half = lipschitz_probe(g, Q, fam, theta, radius / 2.0, trials, seed, coordinates=coordinates)
    if ratio == 0.0 and half == 0.0:
        stable = True
    else:
        stable = 0.5 <= half / ratio <= 2.0 if ratio > 0 else False
    log.info("lipschitz ratio %.6g at radius %.3g, %.6g at radius %.3g", ratio, radius, half, radius / 2)
    return ratio, half, stable
