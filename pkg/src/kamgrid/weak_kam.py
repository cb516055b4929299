"""Lattice weak KAM equation ``H_N(x, (-Delta_N) psi(x)) = Hbar_N``.

Two independent routes to the pair ``(psi, Hbar_N)``:

* vanishing discount: discounted solves along a geometric schedule of
  discounts, reading ``psi`` off the relative part of the value function
  and ``Hbar_N`` off ``-lam * phi(anchor)``;
* relative value iteration on the uniformized ergodic operator.

The constant is unique, so both must return the same ``Hbar_N``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .discounted import SolverConfig, _solve, truncation_bound
from .exceptions import ConfigurationError, ConvergenceError
from .lattice import Lattice, canonicalize, wrap_distance
from .problem import LatticeProblem

logger = logging.getLogger(__name__)


@dataclass
class ContinuationSchedule:
    """Geometric discount schedule ``lam_k = lam0 * ratio**k`` down to ``min_lam``.

    ``tolerance`` is the Cauchy tolerance between consecutive steps; when
    ``None`` the solver tolerance is used.
    """

    lam0: float = 1.0
    ratio: float = 0.5
    min_lam: float = 1e-14
    tolerance: float | None = None

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ConfigurationError("ratio must lie in (0, 1)", field="ratio")
        if not 0.0 < self.min_lam <= self.lam0:
            raise ConfigurationError("need 0 < min_lam <= lam0", field="min_lam")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive", field="tolerance")

    def __iter__(self):
        lam = self.lam0
        while lam >= self.min_lam:
            yield lam
            lam *= self.ratio


@dataclass
class WeakKamSolution:
    hbar: float
    psi: np.ndarray
    anchor: int
    residual: float
    schedule_used: list = field(default_factory=list)
    policy: np.ndarray | None = None
    method: str = "vanishing_discount"
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "hbar": self.hbar,
            "psi": self.psi.tolist(),
            "anchor": int(self.anchor),
            "residual": self.residual,
            "schedule_used": [float(x) for x in self.schedule_used],
            "method": self.method,
            "iterations": int(self.iterations),
        }


def weak_kam_residual(problem: LatticeProblem, psi, hbar: float) -> float:
    """``max_x |H_N(x, (-Delta_N) psi(x)) - hbar|``."""
    psi = problem.lattice.check_grid_function(psi)
    ham, _ = problem.hamiltonian_of(psi)
    return float(np.max(np.abs(ham - hbar)))


def solve_weak_kam(
    problem: LatticeProblem,
    schedule: ContinuationSchedule | None = None,
    cfg: SolverConfig | None = None,
    anchor: int = 0,
) -> WeakKamSolution:
    """Weak KAM pair by vanishing-discount continuation.

    Each discounted solve is warm started from the previous optimal policy.
    The iteration stops once consecutive ``psi`` and ``Hbar`` estimates
    differ by at most the schedule tolerance and the weak KAM residual of
    the current pair is within ten times that tolerance.

    Raises
    ------
    ConvergenceError
        When the schedule runs out first; ``best`` holds the last
        :class:`WeakKamSolution`.
    """
    schedule = schedule or ContinuationSchedule()
    cfg = cfg or SolverConfig()
    tol = schedule.tolerance if schedule.tolerance is not None else cfg.tolerance
    if not 0 <= anchor < problem.n_nodes:
        raise ConfigurationError(f"anchor {anchor} outside the lattice", field="anchor")

    used: list[float] = []
    prev = None
    policy = None
    best = None
    for lam in schedule:
        sol = _solve(problem, lam, cfg, policy, anchor)
        policy = sol.policy
        psi, hbar = sol.relative, -sol.gain
        used.append(lam)
        res = weak_kam_residual(problem, psi, hbar)
        best = WeakKamSolution(hbar, psi, anchor, res, list(used), policy, "vanishing_discount", len(used))
        logger.debug("lam=%.3e hbar=%.15f residual=%.3e", lam, hbar, res)
        if prev is not None:
            dpsi = float(np.max(np.abs(psi - prev[0])))
            dh = abs(hbar - prev[1])
            if dpsi <= tol and dh <= tol and res <= 10 * tol:
                _, best.policy = problem.hamiltonian_of(psi)
                return best
        prev = (psi, hbar)
    raise ConvergenceError(
        "discount schedule exhausted before the weak KAM pair settled",
        residual=best.residual if best else float("nan"),
        best=best,
    )


def relative_value_iteration(
    problem: LatticeProblem,
    cfg: SolverConfig | None = None,
    anchor: int = 0,
    max_iter: int | None = None,
) -> WeakKamSolution:
    """Weak KAM pair by relative value iteration.

    With velocities confined to the per-axis box ``[-A, A]`` and the
    uniformization rate ``Lambda = N d A``, one sweep is::

        w <- w - H^A(x, (-Delta_N) w) / Lambda,   w <- w - w(anchor)

    which is the minimum over velocities of ``(L + Q w + (Lambda - exit) w) / Lambda``.
    The subtracted value ``s`` gives ``Hbar = -Lambda * s``.  Iteration
    stops when the weak KAM residual of ``(w, Hbar)`` is below tolerance.
    """
    cfg = cfg or SolverConfig()
    max_iter = max_iter or cfg.max_inner_iter
    bound = truncation_bound(problem)
    rate = problem.N * problem.d * bound
    w = np.zeros(problem.n_nodes)
    res = np.inf
    hbar = 0.0
    for it in range(1, max_iter + 1):
        ham, policy = problem.hamiltonian_of(w, bound=bound)
        step = -ham / rate
        shift = step[anchor]
        hbar = -rate * shift
        res = rate * float(np.max(np.abs(step - shift)))
        if res <= cfg.tolerance:
            if np.any(np.abs(policy) >= bound):
                logger.warning("relative value iteration maximiser touches the truncation box")
            res = weak_kam_residual(problem, w, hbar)
            return WeakKamSolution(hbar, w, anchor, res, [], policy, "relative_value_iteration", it)
        w = w + step - shift
    raise ConvergenceError(
        "relative value iteration budget exhausted",
        residual=res,
        best=WeakKamSolution(hbar, w, anchor, res, [], None, "relative_value_iteration", max_iter),
    )


def _chunk(lat: Lattice) -> int:
    # keeps the (chunk, n_nodes, 3^d, d) distance temporaries near 10^6 entries
    return max(1, 10**6 // (lat.n_nodes * 3**lat.d * lat.d))


def discrete_lipschitz_ratio(lat: Lattice, psi) -> float:
    """``max_{x != y} |psi(x) - psi(y)| / wrap_distance(x, y)`` over node pairs."""
    psi = lat.check_grid_function(psi)
    coords = lat.coords()
    chunk = _chunk(lat)
    best = 0.0
    for start in range(0, lat.n_nodes, chunk):
        block = slice(start, start + chunk)
        dist = wrap_distance(coords[block, None, :], coords[None, :, :])
        diff = np.abs(psi[block, None] - psi[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist > 0, diff / dist, 0.0)
        best = max(best, float(ratio.max()))
    return best


def extension_constant(problem: LatticeProblem, psi) -> float:
    """Lipschitz constant for extension: ``max(c4, achieved ratio)``."""
    return max(problem.constants.c4, discrete_lipschitz_ratio(problem.lattice, psi))


def mcshane_extend(lat: Lattice, psi, c: float):
    """Lipschitz extension ``x -> min_y psi(y) + c |x - y|`` of a lattice function.

    Parameters
    ----------
    lat : Lattice
    psi : grid function
    c : Lipschitz constant, at least the discrete ratio of ``psi``.

    Returns
    -------
    callable
        Maps an ``(m, d)`` (or ``(d,)``) array of torus points to values.
    """
    psi = lat.check_grid_function(psi).copy()
    ratio = discrete_lipschitz_ratio(lat, psi)
    if c < ratio * (1 - 1e-12):
        raise ValueError(f"Lipschitz constant {c} is below the discrete ratio {ratio}")
    nodes = lat.coords()
    chunk = _chunk(lat)

    def extension(x):
        x = canonicalize(x)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[-1] != lat.d:
            raise ValueError(f"points must have trailing dimension {lat.d}")
        out = np.empty(len(pts))
        for start in range(0, len(pts), chunk):
            block = pts[start : start + chunk]
            dist = wrap_distance(block[:, None, :], nodes[None, :, :])
            out[start : start + chunk] = np.min(psi[None, :] + c * dist, axis=1)
        return float(out[0]) if single else out

    extension.lipschitz = c
    return extension
