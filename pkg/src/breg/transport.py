"""Discrete optimal transport with metric or Bregman ground costs.

The exact solver is a transportation simplex (north-west-corner start,
Dantzig pricing with a switch to Bland's rule after the first degenerate
pivot) certified by dual feasibility; the approximate solver is log-domain
Sinkhorn. On top of them sit ``W_p``, the Wasserstein-Bregman divergence
``W_D(P, Q) = min_gamma E_gamma[D_phi(X, Y)]`` and its split into a pushed
forward squared ``W_2`` term plus a coupling-free correction.

Argument order matters: in ``W_D(P, Q)`` the atoms of ``P`` fill the first
slot of ``D_phi``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp

from .divergence import bregman_rows
from .generators import ConvergenceError, ConvexGenerator

MAX_CELLS = 10**6
ATOM_TOL = 1e-12


class DiscreteDistribution:
    """Finite-support probability measure on ``R^d``.

    Atoms closer than ``1e-12`` (max-norm) are merged by adding their
    weights. Weights must be nonnegative and sum to one within ``1e-9``; they
    are renormalized exactly.
    """

    def __init__(self, atoms, weights=None, *, weight_tol: float = 1e-9):
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise ValueError("atoms must be a non-empty (n, d) array")
        n = atoms.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if weights.shape != (n,):
            raise ValueError("need one weight per atom")
        if not np.all(np.isfinite(atoms)) or not np.all(np.isfinite(weights)):
            raise ValueError("atoms and weights must be finite")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        total = weights.sum()
        if abs(total - 1.0) > weight_tol:
            raise ValueError(f"weights sum to {total!r}, not 1")
        atoms, weights = _merge_atoms(atoms, weights / total)
        atoms.setflags(write=False)
        weights.setflags(write=False)
        self.atoms = atoms
        self.weights = weights

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dimension(self) -> int:
        return self.atoms.shape[1]

    def mean(self, values) -> float:
        """Expectation of per-atom ``values``."""
        return float(self.weights @ np.asarray(values, dtype=float))

    def map_atoms(self, func) -> "DiscreteDistribution":
        return DiscreteDistribution(func(self.atoms), self.weights)

    def __repr__(self):
        return f"DiscreteDistribution(n={self.size}, d={self.dimension})"


def _merge_atoms(atoms, weights):
    n = atoms.shape[0]
    if n == 1:
        return atoms.copy(), weights.copy()
    owner = np.arange(n)
    for i in range(1, n):
        close = np.max(np.abs(atoms[:i] - atoms[i]), axis=1) <= ATOM_TOL
        hits = np.flatnonzero(close & (owner[:i] == np.arange(i)))
        if hits.size:
            owner[i] = hits[0]
    keep = owner == np.arange(n)
    if keep.all():
        return atoms.copy(), weights.copy()
    merged = np.zeros(n)
    np.add.at(merged, owner, weights)
    return atoms[keep].copy(), merged[keep]


@dataclass(frozen=True, eq=False)
class TransportPlan:
    coupling: np.ndarray
    cost: float
    source: np.ndarray
    target: np.ndarray
    method: str
    epsilon: Optional[float] = None
    n_iter: int = 0
    converged: bool = True
    marginal_error: float = 0.0
    min_reduced_cost: Optional[float] = None


def _weights(dist) -> np.ndarray:
    if isinstance(dist, DiscreteDistribution):
        return np.asarray(dist.weights, dtype=float)
    w = np.asarray(dist, dtype=float).reshape(-1)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be nonnegative and sum to 1")
    return w


def cost_matrix(cost: Union[ConvexGenerator, float], P: DiscreteDistribution,
                Q: DiscreteDistribution) -> np.ndarray:
    """Ground-cost matrix between the atoms of ``P`` (rows) and ``Q`` (columns).

    ``cost`` is either a generator, giving ``C[i, j] = D_phi(x_i, y_j)``, or a
    number ``p >= 1``, giving ``C[i, j] = ||x_i - y_j||_p^p``.
    """
    if P.dimension != Q.dimension:
        raise ValueError("distributions live in different dimensions")
    x = P.atoms[:, None, :]
    y = Q.atoms[None, :, :]
    if isinstance(cost, ConvexGenerator):
        return bregman_rows(cost, x, y)
    p = float(cost)
    if not p >= 1:
        raise ValueError("metric order must be >= 1")
    return np.sum(np.abs(x - y) ** p, axis=-1)


def _tree_path(adj_row, adj_col, start_row, end_col):
    """Node path from row ``start_row`` to column ``end_col`` in the basis tree."""
    # nodes: ('r', i) encoded as i, ('c', j) encoded as -(j + 1)
    start, goal = start_row, -(end_col + 1)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        nbrs = [-(j + 1) for j in adj_row[node]] if node >= 0 else adj_col[-node - 1]
        for nb in nbrs:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def _duals(C, adj_row, adj_col):
    m, n = C.shape
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        if node >= 0:
            for j in adj_row[node]:
                if np.isnan(v[j]):
                    v[j] = C[node, j] - u[node]
                    queue.append(-(j + 1))
        else:
            j = -node - 1
            for i in adj_col[j]:
                if np.isnan(u[i]):
                    u[i] = C[i, j] - v[j]
                    queue.append(i)
    return u, v


def _basic_flows(basis, a, b):
    """Unique flows on a spanning-tree basis, by peeling leaves."""
    m, n = a.size, b.size
    supply = a.astype(float).copy()
    demand = b.astype(float).copy()
    adj_row = [set() for _ in range(m)]
    adj_col = [set() for _ in range(n)]
    for i, j in basis:
        adj_row[i].add(j)
        adj_col[j].add(i)
    flows = {}
    leaves = deque([i for i in range(m) if len(adj_row[i]) == 1]
                   + [-(j + 1) for j in range(n) if len(adj_col[j]) == 1])
    remaining = len(basis)
    while remaining:
        node = leaves.popleft()
        if node >= 0:
            if len(adj_row[node]) != 1:
                continue
            j = next(iter(adj_row[node]))
            i = node
            x = supply[i]
        else:
            j = -node - 1
            if len(adj_col[j]) != 1:
                continue
            i = next(iter(adj_col[j]))
            x = demand[j]
        flows[(i, j)] = x
        supply[i] -= x
        demand[j] -= x
        adj_row[i].discard(j)
        adj_col[j].discard(i)
        remaining -= 1
        if len(adj_row[i]) == 1:
            leaves.append(i)
        if len(adj_col[j]) == 1:
            leaves.append(-(j + 1))
    return flows


def _transport_simplex(C, a, b, max_iter=None):
    m, n = C.shape
    scale = max(1.0, float(np.max(np.abs(C))))
    tol = 1e-11 * scale
    # source-side perturbation removes degenerate pivots
    eps = 1e-12 * np.arange(1, m + 1)
    ra = a + eps
    rb = b.copy()
    rb[-1] += eps.sum()

    flow = {}
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1

    adj_row = [set() for _ in range(m)]
    adj_col = [set() for _ in range(n)]
    for (i, j) in flow:
        adj_row[i].add(j)
        adj_col[j].add(i)

    if max_iter is None:
        max_iter = 50 * (m + n) * max(m, n) + 100
    # Dantzig pricing until the first degenerate pivot, Bland's rule afterwards
    bland = False
    for it in range(max_iter):
        u, v = _duals(C, adj_row, adj_col)
        reduced = C - u[:, None] - v[None, :]
        negative = np.flatnonzero(reduced.ravel() < -tol)
        if negative.size == 0:
            return flow, adj_row, adj_col, float(reduced.min()), it
        if bland:
            entering = int(negative[0])
        else:
            entering = int(np.argmin(reduced))
        ei, ej = divmod(entering, n)
        path = _tree_path(adj_row, adj_col, ei, ej)
        edges = []
        for k in range(1, len(path)):
            a_node, b_node = path[k - 1], path[k]
            r, c = (a_node, -b_node - 1) if a_node >= 0 else (b_node, -a_node - 1)
            edges.append((r, c))
        minus = edges[0::2]
        plus = edges[1::2]
        theta = min(flow[e] for e in minus)
        leaving = min((e for e in minus if flow[e] == theta), key=lambda e: e[0] * n + e[1])
        if theta <= 1e-15:
            bland = True
        for e in minus:
            flow[e] -= theta
        for e in plus:
            flow[e] += theta
        del flow[leaving]
        flow[(ei, ej)] = theta
        adj_row[leaving[0]].discard(leaving[1])
        adj_col[leaving[1]].discard(leaving[0])
        adj_row[ei].add(ej)
        adj_col[ej].add(ei)
    raise ConvergenceError(f"transportation simplex exceeded {max_iter} pivots")


def solve_exact(C, P, Q) -> TransportPlan:
    """Optimal coupling of the transportation LP.

    Returns a basic optimal plan whose reduced costs are all ``>= -1e-9``
    (``min_reduced_cost`` carries the certificate).
    """
    C = np.asarray(C, dtype=float)
    a, b = _weights(P), _weights(Q)
    m, n = a.size, b.size
    if C.shape != (m, n):
        raise ValueError(f"cost matrix shape {C.shape} does not match marginals ({m}, {n})")
    if m * n > MAX_CELLS:
        raise ValueError(f"problem too large: {m}x{n} exceeds {MAX_CELLS} cells")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    flow, adj_row, adj_col, min_rc, n_iter = _transport_simplex(C, a, b)
    if min_rc < -1e-9:
        raise ConvergenceError("dual feasibility certificate failed")
    exact = _basic_flows(list(flow), a, b)
    coupling = np.zeros((m, n))
    for (i, j), x in exact.items():
        coupling[i, j] = x
    worst = coupling.min()
    if worst < -1e-9:
        raise ConvergenceError(f"perturbation left an infeasible basis (flow {worst:.3g})")
    np.maximum(coupling, 0.0, out=coupling)
    return TransportPlan(
        coupling=coupling,
        cost=float(np.sum(coupling * C)),
        source=a,
        target=b,
        method="exact",
        n_iter=n_iter,
        marginal_error=float(np.abs(coupling.sum(1) - a).sum() + np.abs(coupling.sum(0) - b).sum()),
        min_reduced_cost=min_rc,
    )


def solve_sinkhorn(C, P, Q, epsilon: float, max_iter: int = 10000,
                   tol: float = 1e-6) -> TransportPlan:
    """Entropically regularized plan by log-domain Sinkhorn scaling.

    Stops once the L1 violation of the row marginals (columns are matched
    exactly after each sweep) drops below ``tol``, or after ``max_iter``
    sweeps with ``converged=False``. Potentials are warm-started along a
    geometric schedule of temperatures ending at ``epsilon``. For nonnegative costs the plan's
    transport cost exceeds the exact optimum by at most ``epsilon *
    log(min(m, n))``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    C = np.asarray(C, dtype=float)
    a, b = _weights(P), _weights(Q)
    if C.shape != (a.size, b.size):
        raise ValueError("cost matrix shape does not match marginals")
    with np.errstate(divide="ignore"):
        log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    # warm-start through a decreasing temperature schedule; small epsilon
    # converges very slowly from cold potentials
    spread = float(C.max() - C.min()) if C.size else 0.0
    schedule = []
    eps_k = spread
    while eps_k > 10.0 * epsilon:
        schedule.append(eps_k)
        eps_k /= 10.0
    schedule.append(float(epsilon))
    it = 0
    for stage, eps_k in enumerate(schedule):
        final = stage == len(schedule) - 1
        scaled = -C / eps_k
        budget = max_iter if final else min(max_iter, 1000)
        for it in range(1, budget + 1):
            f = eps_k * (log_a - logsumexp(scaled + g[None, :] / eps_k, axis=1))
            g = eps_k * (log_b - logsumexp(scaled + f[:, None] / eps_k, axis=0))
            if it % 10 == 0 or it == budget:
                row = np.exp(scaled + (f[:, None] + g[None, :]) / eps_k).sum(axis=1)
                if np.abs(row - a).sum() <= tol:
                    break
    coupling = np.exp(scaled + (f[:, None] + g[None, :]) / epsilon)
    err = float(np.abs(coupling.sum(axis=1) - a).sum() + np.abs(coupling.sum(axis=0) - b).sum())
    return TransportPlan(
        coupling=coupling,
        cost=float(np.sum(coupling * C)),
        source=a,
        target=b,
        method="sinkhorn",
        epsilon=float(epsilon),
        n_iter=it,
        converged=err <= tol,
        marginal_error=err,
    )


def wasserstein_p(P: DiscreteDistribution, Q: DiscreteDistribution, p: float = 2.0) -> float:
    """``W_p`` with ground metric ``||x - y||_p``."""
    if not np.isfinite(p):
        raise ValueError("only finite orders are supported")
    plan = solve_exact(cost_matrix(p, P, Q), P, Q)
    return max(plan.cost, 0.0) ** (1.0 / p)


def wasserstein_bregman(g: ConvexGenerator, P: DiscreteDistribution, Q: DiscreteDistribution,
                        *, return_plan: bool = False):
    """Optimal transport value with ground cost ``D_phi(x, y)``, ``x ~ P``."""
    plan = solve_exact(cost_matrix(g, P, Q), P, Q)
    return (plan.cost, plan) if return_plan else plan.cost


@dataclass(frozen=True)
class Decomposition:
    distortion: float
    penalty: float
    total: float

    def __iter__(self):
        return iter((self.distortion, self.penalty, self.total))


def decompose(g: ConvexGenerator, Q: DiscreteDistribution, P_theta: DiscreteDistribution) -> Decomposition:
    """Split ``W_D(Q, P_theta)`` into a transport term and a penalty.

    ``distortion = W_2(Q, grad phi # P_theta)^2 / 2`` solves a separate exact
    problem on the pushed-forward atoms. ``penalty`` collects the
    coupling-free expectations::

        E_Q phi(X) - E_P phi(Y) + E_P <grad phi(Y), Y>
            - (E_Q ||X||^2 + E_P ||grad phi(Y)||^2) / 2

    ``total`` is the directly solved ``W_D(Q, P_theta)``; the two terms sum
    to it up to solver accuracy.
    """
    y = g.check(P_theta.atoms)
    x = g.check(Q.atoms)
    grad_y = g.rows(g.gradient, y)
    pushed = DiscreteDistribution(grad_y, P_theta.weights)
    distortion = 0.5 * solve_exact(cost_matrix(2.0, Q, pushed), Q, pushed).cost
    penalty = (Q.mean(g.rows(g.value, x)) - P_theta.mean(g.rows(g.value, y))
               + P_theta.mean(np.sum(grad_y * y, axis=1))
               - 0.5 * (Q.mean(np.sum(x * x, axis=1)) + P_theta.mean(np.sum(grad_y * grad_y, axis=1))))
    return Decomposition(distortion, penalty, wasserstein_bregman(g, Q, P_theta))
