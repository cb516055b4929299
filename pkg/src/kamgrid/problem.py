"""The discrete problem instance: a lattice and a Lagrangian on it."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import ConfigurationError
from .lagrangian import DiagnosticConstants, Lagrangian, diagnostic_constants
from .lattice import Lattice, differences


@dataclass(frozen=True)
class LatticeProblem:
    lattice: Lattice
    lagrangian: Lagrangian

    def __post_init__(self):
        if self.lattice.d != self.lagrangian.d:
            raise ConfigurationError(
                f"lattice dimension {self.lattice.d} != Lagrangian dimension {self.lagrangian.d}"
            )

    @classmethod
    def build(cls, lagrangian: Lagrangian, N: int) -> LatticeProblem:
        return cls(Lattice(lagrangian.d, N), lagrangian)

    @property
    def d(self) -> int:
        return self.lattice.d

    @property
    def N(self) -> int:
        return self.lattice.N

    @property
    def n_nodes(self) -> int:
        return self.lattice.n_nodes

    @cached_property
    def coords(self) -> np.ndarray:
        return self.lattice.coords()

    @cached_property
    def constants(self) -> DiagnosticConstants:
        return diagnostic_constants(self.lagrangian)

    def running_cost(self, policy) -> np.ndarray:
        """``L(x, pi(x))`` at every node."""
        return self.lagrangian(self.coords, np.asarray(policy, dtype=float))

    def hamiltonian_of(self, phi, bound: float | None = None):
        """``H_N(x, (-Delta_N) phi(x))`` and its maximiser at every node."""
        xi = -differences(self.lattice, phi)
        return self.lagrangian.lattice_hamiltonian(self.coords, xi, bound=bound)
