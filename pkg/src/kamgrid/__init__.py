"""Lattice Markov-chain schemes for discounted and weak KAM Hamilton-Jacobi equations on the torus."""

from __future__ import annotations

__version__ = "0.1.0"

from .coupling import (
    CouplingReport,
    SimConfig,
    estimate_coupling_gap,
    estimate_discounted_cost,
    simulate_chain,
)
from .ctmc import PolicyGenerator, forward_evolve, generator_row, stationary_distribution
from .discounted import (
    DiscountedSolution,
    SolverConfig,
    bellman_residual,
    evaluate_policy,
    optimal_policy,
    solve_discounted,
)
from .estimators import DiscountedHJBSolver, WeakKAMSolver
from .exceptions import ConfigurationError, ConvergenceError, UnsupportedReferenceError
from .lagrangian import (
    Lagrangian,
    TabulatedPotential,
    TrigPotential,
    diagnostic_constants,
    mechanical,
)
from .lattice import Lattice, canonicalize, differences, pair_dot, wrap_distance
from .mather import (
    DiscreteMatherMeasure,
    action,
    holonomic_residual,
    lp_mather_oracle,
    mather_from_policy,
)
from .problem import LatticeProblem
from .weak_kam import (
    ContinuationSchedule,
    WeakKamSolution,
    mcshane_extend,
    relative_value_iteration,
    solve_weak_kam,
    weak_kam_residual,
)

__all__ = [
    "ConfigurationError",
    "ContinuationSchedule",
    "ConvergenceError",
    "CouplingReport",
    "DiscountedHJBSolver",
    "DiscountedSolution",
    "DiscreteMatherMeasure",
    "Lagrangian",
    "Lattice",
    "LatticeProblem",
    "PolicyGenerator",
    "SimConfig",
    "SolverConfig",
    "TabulatedPotential",
    "TrigPotential",
    "UnsupportedReferenceError",
    "WeakKAMSolver",
    "WeakKamSolution",
    "action",
    "bellman_residual",
    "canonicalize",
    "diagnostic_constants",
    "differences",
    "estimate_coupling_gap",
    "estimate_discounted_cost",
    "evaluate_policy",
    "forward_evolve",
    "generator_row",
    "holonomic_residual",
    "lp_mather_oracle",
    "mather_from_policy",
    "mcshane_extend",
    "mechanical",
    "optimal_policy",
    "pair_dot",
    "relative_value_iteration",
    "simulate_chain",
    "solve_discounted",
    "solve_weak_kam",
    "stationary_distribution",
    "wrap_distance",
    "weak_kam_residual",
]
