"""Discrete Mather measures on lattice-velocity pairs.

A measure here is a finite list of atoms ``(node, velocity, weight)``.  It
is holonomic when ``sum_a w_a (Delta_N phi)(x_a) . v_a = 0`` for every grid
function ``phi``; testing the indicator functions of single nodes is
enough by linearity, and for an indicator ``1_y`` the pairing at ``x`` is
the generator entry ``Q_{x y}(v)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .ctmc import PolicyGenerator, stationary_distribution
from .exceptions import ConfigurationError
from .lattice import Lattice, differences, pair_dot, wrap_distance
from .problem import LatticeProblem
from .simplex import simplex

logger = logging.getLogger(__name__)


@dataclass
class DiscreteMatherMeasure:
    """Finitely supported probability on ``Lambda_N x R^d``.

    Attributes
    ----------
    lattice : Lattice
    nodes : (k,) int array of flat node indices
    velocities : (k, d) array
    weights : (k,) nonnegative array summing to one
    """

    lattice: Lattice
    nodes: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.int64).ravel()
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(len(self.nodes), self.lattice.d)
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if len(self.weights) != len(self.nodes):
            raise ValueError("one weight per atom is required")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to one")
        if np.any((self.nodes < 0) | (self.nodes >= self.lattice.n_nodes)):
            raise ValueError("atom node outside the lattice")

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def coords(self) -> np.ndarray:
        return self.lattice.coords(self.nodes)

    @property
    def mean_speed(self) -> float:
        return float(self.weights @ np.linalg.norm(self.velocities, axis=1))

    def mix(self, other: DiscreteMatherMeasure, t: float = 0.5) -> DiscreteMatherMeasure:
        """Convex combination ``(1 - t) self + t other``."""
        if other.lattice != self.lattice:
            raise ValueError("measures live on different lattices")
        return DiscreteMatherMeasure(
            self.lattice,
            np.concatenate([self.nodes, other.nodes]),
            np.vstack([self.velocities, other.velocities]),
            np.concatenate([(1 - t) * self.weights, t * other.weights]),
        )

    def node_marginal(self) -> np.ndarray:
        return np.bincount(self.nodes, weights=self.weights, minlength=self.lattice.n_nodes)

    def to_rows(self) -> list[dict]:
        coords = self.coords
        rows = []
        for k in range(len(self)):
            row = {f"x{i}": float(coords[k, i]) for i in range(self.lattice.d)}
            row.update({f"v{i}": float(self.velocities[k, i]) for i in range(self.lattice.d)})
            row["weight"] = float(self.weights[k])
            rows.append(row)
        return rows

    def to_csv(self, path) -> None:
        d = self.lattice.d
        fields = [f"x{i}" for i in range(d)] + [f"v{i}" for i in range(d)] + ["weight"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.to_rows())


@dataclass
class HolonomicReport:
    residual: float
    n_tests: int
    basis: tuple = ("indicator", "random")

    def to_dict(self) -> dict:
        return {"residual": self.residual, "n_tests": self.n_tests, "basis": list(self.basis)}


def mather_from_policy(problem: LatticeProblem, policy) -> DiscreteMatherMeasure:
    """Policy measure ``sum_x m_x delta_(x, pi(x))`` for the stationary law ``m`` of ``Q[pi]``.

    Atoms with zero stationary mass are dropped.
    """
    Q = PolicyGenerator(problem.lattice, policy)
    m = stationary_distribution(Q)
    support = np.flatnonzero(m > 0)
    return DiscreteMatherMeasure(problem.lattice, support, Q.policy[support], m[support] / m[support].sum())


def action(problem: LatticeProblem, mu: DiscreteMatherMeasure) -> float:
    """``sum_a w_a L(x_a, v_a)``."""
    return float(mu.weights @ problem.lagrangian(mu.coords, mu.velocities))


def indicator_flux(mu: DiscreteMatherMeasure) -> np.ndarray:
    """``r_y = sum_a w_a Q_{x_a y}(v_a)``, the pairing with every indicator ``1_y``."""
    lat = mu.lattice
    out = np.zeros(lat.n_nodes)
    rates = np.abs(mu.velocities) * lat.N
    np.add.at(out, mu.nodes, -mu.weights * rates.sum(axis=1))
    for i in range(lat.d):
        targets = np.where(mu.velocities[:, i] > 0, lat.plus[i, mu.nodes], lat.minus[i, mu.nodes])
        np.add.at(out, targets, mu.weights * rates[:, i])
    return out


def holonomic_residual(
    problem: LatticeProblem, mu: DiscreteMatherMeasure, n_tests: int = 16, seed: int = 0
) -> HolonomicReport:
    """Largest normalised pairing over indicators plus random grid functions.

    Each test value ``|sum_a w_a (Delta_N phi)(x_a) . v_a|`` is divided by
    ``||phi||_inf * (1 + mean speed of mu)``.
    """
    if n_tests < 1:
        raise ValueError("n_tests must be at least 1")
    scale = 1.0 + mu.mean_speed
    worst = float(np.max(np.abs(indicator_flux(mu)))) / scale
    rng = np.random.default_rng(seed)
    lat = problem.lattice
    for _ in range(n_tests):
        phi = rng.uniform(-1.0, 1.0, lat.n_nodes)
        xi = differences(lat, phi)[mu.nodes]
        value = abs(float(mu.weights @ pair_dot(xi, mu.velocities)))
        worst = max(worst, value / (np.max(np.abs(phi)) * scale))
    return HolonomicReport(worst, lat.n_nodes + n_tests)


def velocity_grid(d: int, step: float, vmax: float) -> np.ndarray:
    """Cartesian product of ``{-vmax, ..., vmax}`` (spacing ``step``) per axis."""
    if not step > 0 or not vmax >= 0:
        raise ConfigurationError("need step > 0 and vmax >= 0", field="velocity_grid")
    k = int(round(vmax / step))
    axis = step * np.arange(-k, k + 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


@dataclass
class LPCertificate:
    value: float
    measure: DiscreteMatherMeasure
    dual_residual: float
    primal_residual: float
    n_variables: int
    pivots: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "dual_residual": self.dual_residual,
            "primal_residual": self.primal_residual,
            "n_variables": self.n_variables,
            "pivots": self.pivots,
        }


def holonomic_lp(problem: LatticeProblem, velocities, policy=None):
    """Cost vector, constraint matrix and right-hand side of the action LP.

    Variables are ``w_(x, v)`` for every node and every velocity in
    ``velocities`` (plus, when given, every distinct policy velocity).
    Rows are the indicator constraints for all nodes but the last (they
    sum to zero) followed by the mass constraint.
    """
    lat = problem.lattice
    vel = np.atleast_2d(np.asarray(velocities, dtype=float))
    if policy is not None:
        vel = np.vstack([vel, np.asarray(policy, dtype=float).reshape(-1, lat.d)])
    vel = np.unique(vel, axis=0)
    n, k = lat.n_nodes, len(vel)
    nodes = np.repeat(np.arange(n), k)
    v_all = np.tile(vel, (n, 1))
    cost = problem.lagrangian(lat.coords(nodes), v_all)

    A = np.zeros((n + 1, n * k))
    cols = np.arange(n * k)
    rates = np.abs(v_all) * lat.N
    np.add.at(A, (nodes, cols), -rates.sum(axis=1))
    for i in range(lat.d):
        targets = np.where(v_all[:, i] > 0, lat.plus[i, nodes], lat.minus[i, nodes])
        np.add.at(A, (targets, cols), rates[:, i])
    A = np.delete(A, n - 1, axis=0)
    A[-1] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return cost, A, b, nodes, v_all


def lp_mather_oracle(
    problem: LatticeProblem, velocities, policy=None, max_variables: int = 50_000
) -> LPCertificate:
    """Minimise the action over holonomic measures supported on a velocity grid.

    Parameters
    ----------
    problem : LatticeProblem
    velocities : (k, d) array of candidate velocities used at every node
    policy : (n_nodes, d) array, optional
        Policy velocities added to the grid so the policy measure is feasible.
    max_variables : size guard for the dense simplex.
    """
    cost, A, b, nodes, v_all = holonomic_lp(problem, velocities, policy)
    if len(cost) > max_variables:
        raise ConfigurationError(
            f"LP has {len(cost)} variables, above the limit {max_variables}", field="velocity_grid"
        )
    res = simplex(cost, A, b)
    support = np.flatnonzero(res.x > 0)
    weights = res.x[support]
    mu = DiscreteMatherMeasure(problem.lattice, nodes[support], v_all[support], weights / weights.sum())
    return LPCertificate(res.value, mu, res.dual_residual, res.primal_residual, len(cost), res.pivots)


def binned_measure(mu: DiscreteMatherMeasure, cells: int, v_edges) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate atoms into torus cells times velocity cells.

    Returns cell centres, shape ``(k, 2d)`` as ``(x, v)``, and cell masses.
    Each torus axis is cut into ``cells`` intervals; velocities are binned
    per axis with the edges ``v_edges`` (values outside are clipped into
    the end bins).
    """
    d = mu.lattice.d
    v_edges = np.asarray(v_edges, dtype=float)
    x_bin = np.minimum((mu.coords * cells).astype(int), cells - 1)
    v_bin = np.clip(np.searchsorted(v_edges, mu.velocities, side="right") - 1, 0, len(v_edges) - 2)
    keys = np.hstack([x_bin, v_bin])
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    mass = np.bincount(inverse.ravel(), weights=mu.weights)
    x_mid = (uniq[:, :d] + 0.5) / cells
    v_mid = 0.5 * (v_edges[uniq[:, d:]] + v_edges[uniq[:, d:] + 1])
    return np.hstack([x_mid, v_mid]), mass


def bounded_lipschitz_distance(mu, nu, cells: int = 16, v_edges=None) -> float:
    """Bounded-Lipschitz distance between binned measures.

    For probability measures this equals the optimal transport cost with
    ground cost ``min(dist, 2)``, where ``dist`` combines the torus
    distance and the Euclidean velocity distance.  The transport problem
    is solved with :func:`scipy.optimize.linprog`.
    """
    if v_edges is None:
        vmax = max(np.abs(mu.velocities).max(initial=0.0), np.abs(nu.velocities).max(initial=0.0)) + 1.0
        v_edges = np.linspace(-vmax, vmax, 2 * cells + 1)
    d = mu.lattice.d
    p, a = binned_measure(mu, cells, v_edges)
    q, b = binned_measure(nu, cells, v_edges)
    dx = wrap_distance(p[:, None, :d], q[None, :, :d])
    dv = np.linalg.norm(p[:, None, d:] - q[None, :, d:], axis=-1)
    cost = np.minimum(np.hypot(dx, dv), 2.0)
    ka, kb = len(a), len(b)
    A_eq = np.zeros((ka + kb, ka * kb))
    for i in range(ka):
        A_eq[i, i * kb : (i + 1) * kb] = 1.0
    for j in range(kb):
        A_eq[ka + j, j::kb] = 1.0
    out = linprog(cost.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if out.status != 0:
        raise RuntimeError(f"transport problem failed: {out.message}")
    return float(out.fun)
