"""Flat torus, the regular lattice on it and one-sided finite differences.

Lattice nodes are addressed either by an integer multi-index ``idx`` with
entries in ``{0, ..., N-1}`` or by its flat position in row-major order.
Grid functions are 1-D arrays in that flat order.  Node coordinates are
always rebuilt as ``idx * h`` and never accumulated.

A discrete gradient at one node is stored as a ``(d, 2)`` array whose
column 0 holds the forward differences and column 1 the backward ones::

    xi[i, 0] = (phi(x + h e_i) - phi(x)) / h
    xi[i, 1] = (phi(x - h e_i) - phi(x)) / h

Axes are 0-based throughout the package.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np


def canonicalize(x) -> np.ndarray:
    """Map points of R^d to their representative in ``[0, 1)^d``."""
    y = np.mod(np.asarray(x, dtype=float), 1.0)
    # mod can round tiny negatives up to exactly 1.0
    return np.where(y >= 1.0, 0.0, y)


def _shifts(d: int) -> np.ndarray:
    return np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=float)


def wrap_distance(x, y) -> np.ndarray | float:
    """Torus distance ``min_n |x - y + n|`` over integer shifts ``n``.

    Both arguments are canonical points with trailing dimension ``d`` and
    broadcast against each other.  Since canonical coordinates differ by
    less than one per axis, shifts in ``{-1, 0, 1}^d`` suffice.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 0 or y.ndim == 0 or x.shape[-1] != y.shape[-1]:
        raise ValueError(
            f"dimension mismatch: {np.shape(x)} vs {np.shape(y)}"
        )
    diff = (x - y)[..., None, :] + _shifts(x.shape[-1])
    dist = np.sqrt(np.min(np.sum(diff * diff, axis=-1), axis=-1))
    return float(dist) if dist.ndim == 0 else dist


def nearest_lift(anchor, x) -> np.ndarray:
    """Representative of ``x`` in R^d closest to the point ``anchor``."""
    anchor = np.asarray(anchor, dtype=float)
    delta = np.asarray(x, dtype=float) - anchor
    return anchor + delta - np.round(delta)


@dataclass(frozen=True)
class Lattice:
    """Regular lattice ``(h Z^d) / Z^d`` with ``h = 1/N``."""

    d: int
    N: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"resolution N must be an integer >= 2, got {self.N}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def n_nodes(self) -> int:
        return self.N**self.d

    def flat(self, idx) -> int | np.ndarray:
        """Flat row-major position of one multi-index or an ``(m, d)`` array."""
        idx = np.asarray(idx, dtype=np.int64) % self.N
        if idx.shape[-1] != self.d:
            raise ValueError(f"index arity {idx.shape[-1]} != d={self.d}")
        out = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), self.shape)
        return int(out) if np.ndim(out) == 0 else out

    def unflat(self, k) -> np.ndarray:
        """Multi-index (or ``(m, d)`` array of them) of flat positions ``k``."""
        return np.stack(np.unravel_index(np.asarray(k), self.shape), axis=-1)

    @cached_property
    def indices(self) -> np.ndarray:
        """All multi-indices in canonical order, shape ``(n_nodes, d)``."""
        return self.unflat(np.arange(self.n_nodes))

    def coords(self, k=None) -> np.ndarray:
        """Torus coordinates ``idx * h`` of all nodes, or of flat positions ``k``."""
        idx = self.indices if k is None else self.unflat(k)
        return idx.astype(float) / self.N

    def neighbor(self, idx, axis: int, direction: int) -> tuple[int, ...]:
        """Multi-index one step along ``axis`` in ``direction`` (+1 or -1)."""
        if not 0 <= axis < self.d:
            raise ValueError(f"axis {axis} out of range for d={self.d}")
        if direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        out = [int(i) for i in idx]
        out[axis] = (out[axis] + direction) % self.N
        return tuple(out)

    @cached_property
    def plus(self) -> np.ndarray:
        """``plus[i, k]`` is the flat position of node ``k`` shifted by ``+h e_i``."""
        return self._shift_table(1)

    @cached_property
    def minus(self) -> np.ndarray:
        """``minus[i, k]`` is the flat position of node ``k`` shifted by ``-h e_i``."""
        return self._shift_table(-1)

    def _shift_table(self, direction: int) -> np.ndarray:
        grid = np.arange(self.n_nodes).reshape(self.shape)
        rows = [np.roll(grid, -direction, axis=i).ravel() for i in range(self.d)]
        table = np.stack(rows)
        table.setflags(write=False)
        return table

    def nearest_node(self, x) -> np.ndarray:
        """Flat position of the lattice node nearest to torus point(s) ``x``."""
        idx = np.rint(canonicalize(x) * self.N).astype(np.int64) % self.N
        return self.flat(idx)

    def check_grid_function(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.n_nodes,):
            raise ValueError(
                f"grid function must have shape ({self.n_nodes},), got {phi.shape}"
            )
        return phi


def differences(lat: Lattice, phi) -> np.ndarray:
    """Discrete gradients at every node, shape ``(n_nodes, d, 2)``."""
    phi = lat.check_grid_function(phi)
    fwd = (phi[lat.plus] - phi) * lat.N
    bwd = (phi[lat.minus] - phi) * lat.N
    return np.stack([fwd.T, bwd.T], axis=-1)


def discrete_gradient(lat: Lattice, phi, idx) -> np.ndarray:
    """Forward/backward difference pairs of ``phi`` at one node, shape ``(d, 2)``."""
    phi = lat.check_grid_function(phi)
    k = lat.flat(idx)
    fwd = (phi[lat.plus[:, k]] - phi[k]) * lat.N
    bwd = (phi[lat.minus[:, k]] - phi[k]) * lat.N
    return np.stack([fwd, bwd], axis=-1)


def pair_dot(xi, v) -> np.ndarray | float:
    """Pairing ``sum_i xi_i^+ max(v_i, 0) + xi_i^- max(-v_i, 0)``.

    ``xi`` has shape ``(..., d, 2)`` and ``v`` shape ``(..., d)``.
    """
    xi = np.asarray(xi, dtype=float)
    v = np.asarray(v, dtype=float)
    if xi.shape[-2:] != (v.shape[-1], 2):
        raise ValueError(f"arity mismatch: xi {xi.shape} vs v {v.shape}")
    out = np.sum(
        xi[..., 0] * np.maximum(v, 0.0) + xi[..., 1] * np.maximum(-v, 0.0), axis=-1
    )
    return float(out) if out.ndim == 0 else out
