"""Estimator-style wrappers around the lattice solvers.

``fit`` takes a :class:`~kamgrid.lagrangian.Lagrangian` and solves on the
lattice; ``predict`` evaluates the Lipschitz extension of the lattice
solution at arbitrary torus points, given as an ``(n_samples, d)`` array.
Hyper-parameters follow the scikit-learn conventions, so ``get_params``,
``set_params`` and ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .discounted import SolverConfig, solve_discounted
from .lagrangian import Lagrangian
from .problem import LatticeProblem
from .weak_kam import ContinuationSchedule, extension_constant, mcshane_extend, solve_weak_kam


def _check_lagrangian(X) -> Lagrangian:
    if not isinstance(X, Lagrangian):
        raise TypeError(f"fit expects a Lagrangian, got {type(X).__name__}")
    return X


class _LatticeEstimator(BaseEstimator):
    def _solver_config(self) -> SolverConfig:
        return SolverConfig(tolerance=self.tolerance, method=self.method)

    def _set_extension(self, problem: LatticeProblem, values):
        self.lattice_ = problem.lattice
        self.lipschitz_ = extension_constant(problem, values)
        self.extension_ = mcshane_extend(problem.lattice, values, self.lipschitz_)
        self.n_features_in_ = problem.d

    def predict(self, X) -> np.ndarray:
        """Extension values at the rows of ``X`` (torus points)."""
        check_is_fitted(self, "extension_")
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.extension_(X)


class DiscountedHJBSolver(_LatticeEstimator):
    """Discounted lattice Bellman solution as an estimator.

    Parameters
    ----------
    N : lattice points per axis
    lam : discount rate
    tolerance : Bellman residual tolerance
    method : ``"policy_iteration"`` or ``"value_iteration"``

    Attributes
    ----------
    phi_ : lattice value function
    policy_ : optimal stationary policy, ``(n_nodes, d)``
    residual_ : achieved Bellman residual
    """

    def __init__(self, N=32, lam=0.5, tolerance=1e-10, method="policy_iteration"):
        self.N = N
        self.lam = lam
        self.tolerance = tolerance
        self.method = method

    def fit(self, X, y=None):
        lag = _check_lagrangian(X)
        problem = LatticeProblem.build(lag, self.N)
        sol = solve_discounted(problem, self.lam, self._solver_config())
        self.phi_ = sol.phi
        self.policy_ = sol.policy
        self.residual_ = sol.residual
        self._set_extension(problem, sol.phi)
        return self


class WeakKAMSolver(_LatticeEstimator):
    """Lattice weak KAM pair as an estimator.

    Parameters
    ----------
    N : lattice points per axis
    tolerance : solver and continuation tolerance
    lam0, ratio, min_lam : geometric discount schedule
    anchor : flat node where ``psi`` vanishes
    method : inner discounted solver

    Attributes
    ----------
    hbar_ : effective Hamiltonian of the lattice problem
    psi_ : normalised corrector on the lattice
    policy_ : optimal stationary policy
    residual_ : weak KAM residual
    """

    def __init__(self, N=32, tolerance=1e-10, lam0=1.0, ratio=0.5, min_lam=1e-14, anchor=0, method="policy_iteration"):
        self.N = N
        self.tolerance = tolerance
        self.lam0 = lam0
        self.ratio = ratio
        self.min_lam = min_lam
        self.anchor = anchor
        self.method = method

    def fit(self, X, y=None):
        lag = _check_lagrangian(X)
        problem = LatticeProblem.build(lag, self.N)
        schedule = ContinuationSchedule(self.lam0, self.ratio, self.min_lam)
        sol = solve_weak_kam(problem, schedule, self._solver_config(), self.anchor)
        self.hbar_ = sol.hbar
        self.psi_ = sol.psi
        self.policy_ = sol.policy
        self.residual_ = sol.residual
        self._set_extension(problem, sol.psi)
        return self

    def score(self, X=None, y=None) -> float:
        """Negative weak KAM residual (higher is better)."""
        check_is_fitted(self, "residual_")
        return -self.residual_
