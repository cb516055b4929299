"""Generators of the controlled lattice chain and their distributions.

A velocity ``v`` at node ``x`` moves the chain to ``x + sgn(v_i) h e_i`` at
rate ``|v_i| / h`` for every axis with ``v_i != 0``.  A stationary policy
assigns one velocity per node and induces the generator ``Q[pi]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.stats import poisson

from .exceptions import ConvergenceError
from .lattice import Lattice

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorRow:
    """Off-diagonal entries of one generator row; the diagonal is derived."""

    node: int
    targets: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        if np.any(self.rates < 0):
            raise ValueError("generator rates must be nonnegative")

    @property
    def diagonal(self) -> float:
        return -float(np.sum(self.rates))

    def as_dict(self) -> dict[int, float]:
        """Row as ``{column: value}`` with coinciding targets merged."""
        out: dict[int, float] = {}
        for t, r in zip(self.targets.tolist(), self.rates.tolist()):
            out[t] = out.get(t, 0.0) + r
        out[self.node] = out.get(self.node, 0.0) + self.diagonal
        return out


def generator_row(lat: Lattice, idx, v) -> GeneratorRow:
    """Row of ``Q(v)`` at the node with multi-index ``idx``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (lat.d,):
        raise ValueError(f"velocity must have shape ({lat.d},)")
    k = lat.flat(idx)
    axes = np.flatnonzero(v != 0.0)
    targets = np.where(v[axes] > 0, lat.plus[axes, k], lat.minus[axes, k])
    return GeneratorRow(k, targets.astype(np.int64), np.abs(v[axes]) * lat.N)


class PolicyGenerator:
    """Generator ``Q[pi]`` of a stationary policy, stored as per-axis neighbor lists.

    ``targets[i, k]`` is the axis-``i`` jump target of node ``k`` and
    ``rates[i, k]`` its rate (zero when ``pi_i(k) == 0``).
    """

    def __init__(self, lat: Lattice, policy):
        policy = np.asarray(policy, dtype=float)
        if policy.shape != (lat.n_nodes, lat.d):
            raise ValueError(f"policy must have shape ({lat.n_nodes}, {lat.d}), got {policy.shape}")
        if not np.all(np.isfinite(policy)):
            raise ValueError("policy has non-finite entries")
        self.lattice = lat
        self.policy = policy
        pt = policy.T
        self.targets = np.where(pt > 0, lat.plus, lat.minus)
        self.rates = np.abs(pt) * lat.N

    @property
    def n_nodes(self) -> int:
        return self.lattice.n_nodes

    @cached_property
    def exit_rates(self) -> np.ndarray:
        return self.rates.sum(axis=0)

    @property
    def uniformization_rate(self) -> float:
        """Largest exit rate over nodes."""
        return float(self.exit_rates.max(initial=0.0))

    def row(self, k: int) -> GeneratorRow:
        live = self.rates[:, k] > 0
        return GeneratorRow(int(k), self.targets[live, k].astype(np.int64), self.rates[live, k])

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Sparse ``n x n`` matrix; duplicate targets (``N = 2``) are summed."""
        n = self.n_nodes
        rows = np.concatenate([np.tile(np.arange(n), self.lattice.d), np.arange(n)])
        cols = np.concatenate([self.targets.ravel(), np.arange(n)])
        vals = np.concatenate([self.rates.ravel(), -self.exit_rates])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def apply(self, phi) -> np.ndarray:
        """``(Q phi)(x) = sum_y Q_xy phi(y)``."""
        phi = self.lattice.check_grid_function(phi)
        return np.sum(self.rates * (phi[self.targets] - phi), axis=0)

    def left_apply(self, m) -> np.ndarray:
        """``(m Q)(y) = sum_x m_x Q_xy``."""
        m = np.asarray(m, dtype=float)
        out = -m * self.exit_rates
        for i in range(self.lattice.d):
            out += np.bincount(self.targets[i], weights=m * self.rates[i], minlength=self.n_nodes)
        return out


def policy_generator(lat: Lattice, policy) -> PolicyGenerator:
    return PolicyGenerator(lat, policy)


def apply_generator(Q: PolicyGenerator, phi) -> np.ndarray:
    """``Q[pi] phi``; equals the pairing of ``phi``'s differences with the policy."""
    return Q.apply(phi)


def _check_distribution(m, n: int) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (n,) or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
        raise ValueError("initial distribution must be a nonnegative vector summing to one")
    return m


def forward_evolve(Q: PolicyGenerator, m0, t: float, steps: int = 1, tail: float = 1e-12) -> np.ndarray:
    """Solve ``dm/dt = m Q`` on ``[0, t]`` by uniformization.

    Each of ``steps`` sub-intervals applies the truncated Poisson series
    ``sum_k Pois(k; Lambda dt) m P^k`` with ``P = I + Q / Lambda``, cut once
    the accumulated Poisson mass reaches ``1 - tail``.
    """
    if t < 0:
        raise ValueError("evolution time must be nonnegative")
    m = _check_distribution(m0, Q.n_nodes).copy()
    rate = Q.uniformization_rate
    if t == 0 or rate == 0:
        return m
    dt = t / steps
    mu = rate * dt
    kmax = int(poisson.ppf(1.0 - tail, mu)) + 1
    weights = poisson.pmf(np.arange(kmax + 1), mu)
    for _ in range(steps):
        term = m
        acc = weights[0] * term
        for k in range(1, kmax + 1):
            term = term + Q.left_apply(term) / rate
            acc = acc + weights[k] * term
        acc = np.maximum(acc, 0.0)
        m = acc / acc.sum()
    return m


def _class_structure(Q: PolicyGenerator):
    """Communicating classes and which of them are closed."""
    A = Q.matrix.copy()
    A.setdiag(0)
    A.eliminate_zeros()
    n_cls, labels = connected_components(A, directed=True, connection="strong")
    # a class is closed when no edge leaves it
    coo = A.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    open_cls = np.zeros(n_cls, dtype=bool)
    open_cls[np.unique(labels[coo.row[leaving]])] = True
    return n_cls, labels, ~open_cls


def _solve_closed_class(Q: PolicyGenerator, members: np.ndarray) -> np.ndarray:
    if members.size == 1:
        return np.ones(1)
    sub = Q.matrix[members][:, members].T.tolil()
    sub[-1, :] = 1.0
    rhs = np.zeros(members.size)
    rhs[-1] = 1.0
    pi = np.atleast_1d(spsolve(sub.tocsc(), rhs))
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def _direct_limit(Q: PolicyGenerator, start: np.ndarray) -> np.ndarray:
    """Long-run distribution of the chain started from ``start``.

    Each closed class gets its own stationary law, weighted by the mass
    absorbed into it from ``start``.  For an irreducible chain this is the
    augmented solve of ``[Q^T; 1^T] m = [0; 1]``.
    """
    n = Q.n_nodes
    _, labels, closed = _class_structure(Q)
    recurrent = np.isin(labels, np.flatnonzero(closed))
    transient = np.flatnonzero(~recurrent)
    absorbed = np.where(recurrent, start, 0.0)
    if transient.size:
        M = Q.matrix
        Q_TT = M[transient][:, transient]
        occupation = np.atleast_1d(spsolve((-Q_TT).T.tocsc(), start[transient]))
        flow = np.asarray(M[transient].T @ occupation).ravel()
        absorbed += np.where(recurrent, np.maximum(flow, 0.0), 0.0)
    out = np.zeros(n)
    for c in np.flatnonzero(closed):
        members = np.flatnonzero(labels == c)
        mass = absorbed[members].sum()
        if mass > 0:
            out[members] = mass * _solve_closed_class(Q, members)
    return out / out.sum()


def _lazy_power(Q: PolicyGenerator, m: np.ndarray, sweeps: int) -> np.ndarray:
    step = 2.0 * Q.uniformization_rate
    for _ in range(sweeps):
        m = m + Q.left_apply(m) / step
    m = np.maximum(m, 0.0)
    return m / m.sum()


def stationary_distribution(
    Q: PolicyGenerator, tol: float = 1e-10, max_iter: int = 20000, power_iter: int = 2000
) -> np.ndarray:
    """Stationary distribution ``m Q = 0`` selected from the uniform start.

    Lazy power iteration ``m <- m (I + Q / (2 Lambda))`` runs from the
    uniform distribution for at most ``power_iter`` sweeps.  Its limit is
    then computed directly (augmented solve for an irreducible chain,
    absorption into closed classes otherwise) and the candidate with the
    smaller residual kept.  Further sweeps up to ``max_iter`` are spent only
    if ``||m Q||_inf`` is still above ``tol * Lambda``, after which
    :class:`ConvergenceError` is raised.
    """
    n = Q.n_nodes
    uniform = np.full(n, 1.0 / n)
    rate = Q.uniformization_rate
    if rate == 0.0:
        return uniform
    scale = tol * rate

    def residual(mm):
        return float(np.max(np.abs(Q.left_apply(mm))))

    m, it = uniform, 0
    res = residual(m)
    while res > scale and it < power_iter:
        m = _lazy_power(Q, m, 50)
        it += 50
        res = residual(m)
    try:
        cand = _direct_limit(Q, uniform)
    except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover
        logger.debug("direct stationary solve failed: %s", exc)
        cand = None
    if cand is not None and np.all(np.isfinite(cand)) and np.all(cand >= 0):
        cand_res = residual(cand)
        if cand_res <= res:
            m, res = cand, cand_res
    while res > scale and it < max_iter:
        m = _lazy_power(Q, m, 50)
        it += 50
        res = residual(m)
    if res > scale:
        raise ConvergenceError("stationary distribution did not converge", residual=res, best=m)
    return m
