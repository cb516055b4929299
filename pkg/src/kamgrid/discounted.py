"""Discounted Bellman equation on the lattice.

Solves ``lam phi(x) + H_N(x, (-Delta_N) phi(x)) = 0`` for every node, the
dynamic-programming equation of the discounted Markov decision problem
whose optimal outcome from ``z`` is ``phi(z)``.

Internally a value function is carried as ``phi = gain / lam + relative``
with ``relative(anchor) = 0``.  Policy evaluation solves for
``(relative, gain)`` directly, which keeps the system well conditioned as
``lam`` goes to zero and lets the weak KAM continuation reuse it.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, spsolve_triangular

from .ctmc import PolicyGenerator
from .exceptions import ConfigurationError, ConvergenceError
from .lattice import differences, pair_dot
from .problem import LatticeProblem

logger = logging.getLogger(__name__)

METHODS = ("policy_iteration", "value_iteration")


@dataclass
class SolverConfig:
    tolerance: float = 1e-10
    max_policy_iter: int = 200
    max_inner_iter: int = 200_000
    method: str = "policy_iteration"
    inner: str = "direct"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive", field="tolerance")
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}", field="method")
        if self.inner not in ("direct", "gauss_seidel"):
            raise ConfigurationError(f"unknown inner solver {self.inner!r}", field="inner")
        if self.max_policy_iter < 1 or self.max_inner_iter < 1:
            raise ConfigurationError("iteration budgets must be positive")


@dataclass
class DiscountedSolution:
    """Solution of the discounted lattice Bellman equation.

    ``phi`` is reconstructed as ``gain / lam + relative``; ``gain`` equals
    ``lam * phi(anchor)``.
    """

    lam: float
    relative: np.ndarray
    gain: float
    policy: np.ndarray
    residual: float
    iterations: int
    anchor: int = 0
    method: str = "policy_iteration"
    history: list = field(default_factory=list, repr=False)

    @property
    def phi(self) -> np.ndarray:
        return self.gain / self.lam + self.relative

    @property
    def offset(self) -> float:
        return self.gain / self.lam


def bellman_residual(problem: LatticeProblem, phi, lam: float, offset: float = 0.0) -> float:
    """``max_x |lam (offset + phi)(x) + H_N(x, (-Delta_N) phi(x))|``.

    ``offset`` is a constant added to ``phi``; passing a large constant
    separately avoids cancellation in the differences.
    """
    phi = problem.lattice.check_grid_function(phi)
    ham, _ = problem.hamiltonian_of(phi)
    return float(np.max(np.abs(lam * offset + lam * phi + ham)))


def optimal_policy(problem: LatticeProblem, phi) -> np.ndarray:
    """Node-wise maximiser of ``(-Delta_N) phi(x) . v - L(x, v)`` (deterministic ties)."""
    _, policy = problem.hamiltonian_of(phi)
    return policy


def _evaluation_matrix(Q: PolicyGenerator, lam: float, anchor: int) -> sp.csc_matrix:
    """``lam I - Q`` with the anchor column replaced by ones (the gain unknown)."""
    n = Q.n_nodes
    M = (lam * sp.identity(n, format="csr") - Q.matrix).tolil()
    M[:, anchor] = np.ones((n, 1))
    return M.tocsc()


def _gauss_seidel(A: sp.csr_matrix, b: np.ndarray, x0: np.ndarray, tol: float, max_iter: int):
    lower = sp.tril(A, format="csr")
    upper = sp.triu(A, k=1, format="csr")
    x = x0.copy()
    scale = max(1.0, float(np.max(np.abs(b))))
    for it in range(1, max_iter + 1):
        x = spsolve_triangular(lower, b - upper @ x, lower=True)
        if it % 5 == 0 and np.max(np.abs(A @ x - b)) <= tol * scale:
            return x
    raise ConvergenceError(
        "Gauss-Seidel policy evaluation did not converge", residual=float(np.max(np.abs(A @ x - b)))
    )


def evaluate_policy(
    problem: LatticeProblem, policy, lam: float, anchor: int = 0, cfg: SolverConfig | None = None
) -> tuple[np.ndarray, float]:
    """Solve ``(lam I - Q[pi]) phi = L_pi`` as ``(relative, gain)``.

    Returns ``relative`` with ``relative[anchor] = 0`` and the gain
    ``lam * phi(anchor)``; ``lam = 0`` gives the average-cost evaluation
    (gain is then the long-run cost rate) for unichain policies.
    """
    cfg = cfg or SolverConfig()
    Q = PolicyGenerator(problem.lattice, policy)
    cost = problem.running_cost(policy)
    if cfg.inner == "gauss_seidel" and lam > 0:
        A = (lam * sp.identity(Q.n_nodes, format="csr") - Q.matrix).tocsr()
        phi = _gauss_seidel(A, cost, np.zeros(Q.n_nodes), 1e-14, cfg.max_inner_iter)
        gain = lam * phi[anchor]
        return phi - phi[anchor], gain
    M = _evaluation_matrix(Q, lam, anchor)
    u = np.atleast_1d(spsolve(M, cost))
    if not np.all(np.isfinite(u)):
        raise ConvergenceError("singular policy evaluation system", residual=float("inf"))
    gain = float(u[anchor])
    relative = u.copy()
    relative[anchor] = 0.0
    return relative, gain


def _residual_parts(problem, relative, gain, lam):
    ham, greedy = problem.hamiltonian_of(relative)
    return np.abs(gain + lam * relative + ham), ham, greedy


def _improve(problem, relative, policy):
    """Greedy policy, keeping the incumbent wherever it is already optimal."""
    xi = -differences(problem.lattice, relative)
    ham, greedy = problem.lagrangian.lattice_hamiltonian(problem.coords, xi)
    incumbent = pair_dot(xi, policy) - problem.lagrangian(problem.coords, policy)
    keep = ham - incumbent <= 1e-13 * (1.0 + np.abs(ham))
    return np.where(keep[:, None], policy, greedy)


def _policy_iteration(problem, lam, cfg, policy, anchor):
    history = []
    for it in range(1, cfg.max_policy_iter + 1):
        relative, gain = evaluate_policy(problem, policy, lam, anchor, cfg)
        new_policy = _improve(problem, relative, policy)
        res = float(np.max(_residual_parts(problem, relative, gain, lam)[0]))
        history.append(res)
        if np.array_equal(new_policy, policy) or res <= cfg.tolerance:
            if res > cfg.tolerance:
                raise ConvergenceError(
                    "policy iteration stalled above tolerance", residual=res, best=(relative, gain, policy)
                )
            out_policy = optimal_policy(problem, relative)
            return DiscountedSolution(lam, relative, gain, out_policy, res, it, anchor, "policy_iteration", history)
        policy = new_policy
    raise ConvergenceError("policy iteration budget exhausted", residual=history[-1], best=(relative, gain, policy))


def truncation_bound(problem: LatticeProblem) -> float:
    """Per-axis velocity bound ``c5 + 1`` used by the truncated iterations."""
    return problem.constants.c5 + 1.0


def _value_iteration(problem, lam, cfg, phi0, anchor):
    bound = truncation_bound(problem)
    rate = problem.N * problem.d * bound
    phi = np.array(phi0, dtype=float)
    history = []
    for it in range(1, cfg.max_inner_iter + 1):
        ham, _ = problem.hamiltonian_of(phi, bound=bound)
        phi = (rate * phi - ham) / (lam + rate)
        if it % 25 == 0:
            res = bellman_residual(problem, phi, lam)
            history.append(res)
            if res <= cfg.tolerance:
                _, policy = problem.hamiltonian_of(phi)
                if np.any(np.abs(policy) >= bound):
                    logger.warning("value-iteration maximiser touches the truncation box")
                gain = lam * phi[anchor]
                return DiscountedSolution(
                    lam, phi - phi[anchor], gain, policy, res, it, anchor, "value_iteration", history
                )
    raise ConvergenceError(
        "value iteration budget exhausted", residual=bellman_residual(problem, phi, lam), best=phi
    )


def solve_discounted(
    problem: LatticeProblem,
    lam: float,
    cfg: SolverConfig | None = None,
    initial_policy=None,
    anchor: int = 0,
) -> DiscountedSolution:
    """Solve the discounted lattice Bellman equation.

    Parameters
    ----------
    problem : LatticeProblem
    lam : discount rate, > 0.
    cfg : SolverConfig, optional
    initial_policy : (n_nodes, d) array, optional
        Starting policy for policy iteration (zero by default).
    anchor : flat node used for the ``(relative, gain)`` split.

    Raises
    ------
    ValueError
        If ``lam <= 0``.
    ConvergenceError
        If the iteration budget runs out above tolerance.
    """
    if not lam > 0:
        raise ValueError(f"discount must be positive, got {lam}")
    if lam < 1e-6:
        warnings.warn(
            "discount below 1e-6: conditioning degrades like 1/lam, prefer solve_weak_kam",
            RuntimeWarning,
            stacklevel=2,
        )
    return _solve(problem, lam, cfg or SolverConfig(), initial_policy, anchor)


def _solve(problem, lam, cfg, initial_policy, anchor):
    if cfg.method == "value_iteration":
        if initial_policy is None:
            phi0 = problem.running_cost(np.zeros((problem.n_nodes, problem.d))) / lam
        else:
            rel, gain = evaluate_policy(problem, initial_policy, lam, anchor)
            phi0 = gain / lam + rel
        return _value_iteration(problem, lam, cfg, phi0, anchor)
    policy = (
        np.zeros((problem.n_nodes, problem.d))
        if initial_policy is None
        else np.array(initial_policy, dtype=float)
    )
    return _policy_iteration(problem, lam, cfg, policy, anchor)


def bound_report(problem: LatticeProblem, sol: DiscountedSolution) -> dict:
    """A-priori bounds against their achieved values for one solution."""
    c = problem.constants
    diffs = differences(problem.lattice, sol.relative)
    speeds = np.linalg.norm(sol.policy, axis=1)
    return {
        "lam_phi_sup": float(np.max(np.abs(sol.gain + sol.lam * sol.relative))),
        "c0": c.c0,
        "max_difference": float(np.max(np.abs(diffs))),
        "c3": c.c3,
        "max_speed": float(np.max(speeds)),
        "c5": c.c5,
    }
