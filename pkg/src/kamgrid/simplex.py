"""Two-phase simplex for standard-form linear programs with few rows.

Solves ``min c.x  s.t.  A x = b, x >= 0`` in revised form: the constraint
matrix stays sparse and only the dense ``m x m`` basis inverse is updated,
so problems with tens of thousands of columns but few rows stay cheap.

Entering columns are priced by most negative reduced cost.  After
``stall`` consecutive degenerate pivots the iteration switches to Bland's
rule (smallest eligible index enters, smallest basic index leaves on
ties), which cannot cycle; it returns to the steepest price once the
objective moves.  The basis inverse is refactorised periodically and once
more at the end, so the reported solution and duals carry no accumulated
update error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class InfeasibleProblem(RuntimeError):
    pass


class UnboundedProblem(RuntimeError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    value: float
    duals: np.ndarray
    basis: np.ndarray
    pivots: int
    primal_residual: float
    dual_residual: float
    kept_rows: np.ndarray


class _Tableau:
    """Basis bookkeeping for ``A x = b`` with ``A`` sparse (columns may include artificials)."""

    def __init__(self, A: sp.csc_matrix, b: np.ndarray, basis: np.ndarray, refactor: int):
        self.A = A
        self.b = b
        self.basis = basis
        self.refactor = refactor
        self.since = 0
        self.factorize()

    def factorize(self):
        B = self.A[:, self.basis].toarray()
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.since = 0

    def column(self, j: int) -> np.ndarray:
        col = self.A[:, j]
        return self.Binv[:, col.indices] @ col.data

    def pivot(self, row: int, col: int, direction: np.ndarray):
        theta = self.xB[row] / direction[row]
        self.xB -= theta * direction
        self.xB[row] = theta
        pivot_row = self.Binv[row] / direction[row]
        self.Binv -= np.outer(direction, pivot_row)
        self.Binv[row] = pivot_row
        self.basis[row] = col
        self.since += 1
        if self.since >= self.refactor:
            self.factorize()


def _iterate(tab: _Tableau, cost: np.ndarray, n_price: int, tol: float, max_pivots: int, stall: int) -> int:
    A_price = tab.A[:, :n_price].T.tocsr()
    pivots = 0
    degenerate = 0
    while True:
        y = tab.Binv.T @ cost[tab.basis]
        reduced = cost[:n_price] - A_price @ y
        reduced[tab.basis[tab.basis < n_price]] = 0.0
        eligible = np.flatnonzero(reduced < -tol)
        if eligible.size == 0:
            return pivots
        if degenerate >= stall:
            col = int(eligible[0])
        else:
            col = int(eligible[np.argmin(reduced[eligible])])
        direction = tab.column(col)
        positive = direction > tol
        if not positive.any():
            raise UnboundedProblem("objective is unbounded below")
        ratios = np.full(len(direction), np.inf)
        ratios[positive] = np.maximum(tab.xB[positive], 0.0) / direction[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol)
        if degenerate >= stall:
            row = int(ties[np.argmin(tab.basis[ties])])
        else:
            row = int(ties[np.argmax(direction[ties])])
        degenerate = degenerate + 1 if best <= tol else 0
        tab.pivot(row, col, direction)
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError(f"simplex exceeded {max_pivots} pivots")


def simplex(
    c, A, b, tol: float = 1e-10, max_pivots: int = 200_000, stall: int = 50, refactor: int = 100
) -> SimplexResult:
    """Minimise ``c.x`` subject to ``A x = b``, ``x >= 0``.

    Parameters
    ----------
    c : (n,) costs
    A : (m, n) dense array or sparse matrix
    b : (m,) right-hand side
    tol : pricing and pivoting tolerance.

    Redundant equality rows are detected after phase one and dropped;
    they are excluded from ``kept_rows`` and their duals reported as 0.

    Raises
    ------
    InfeasibleProblem, UnboundedProblem
    """
    c = np.asarray(c, dtype=float)
    A = sp.csr_matrix(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    sign = np.where(b < 0, -1.0, 1.0)
    A = sp.diags(sign) @ A
    b = sign * b

    # phase one: artificials n .. n+m-1 start in the basis
    big = sp.hstack([A, sp.identity(m)], format="csc")
    tab = _Tableau(big, b, np.arange(n, n + m), refactor)
    phase_one_cost = np.concatenate([np.zeros(n), np.ones(m)])
    pivots = _iterate(tab, phase_one_cost, n, tol, max_pivots, stall)
    tab.factorize()
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    infeasibility = float(np.sum(tab.xB[tab.basis >= n]))
    if infeasibility > 1e-9 * scale:
        raise InfeasibleProblem(f"phase one ended with infeasibility {infeasibility:.3e}")

    # drive remaining artificials out; rows where that fails are redundant
    keep = np.ones(m, dtype=bool)
    A_csc = A.tocsc()
    for r in range(m):
        if tab.basis[r] < n:
            continue
        row = np.asarray(A_csc.T @ tab.Binv[r]).ravel()
        row[tab.basis[tab.basis < n]] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > 1e-9 * max(1.0, float(np.abs(row).max())) and abs(row[j]) > 1e-12:
            tab.pivot(r, j, tab.column(j))
            pivots += 1
        else:
            keep[r] = False
    rows = np.flatnonzero(keep)
    basis = tab.basis[rows]
    A_kept = A_csc[rows]
    tab = _Tableau(A_kept.tocsc(), b[rows], basis.copy(), refactor)

    # phase two
    pivots += _iterate(tab, c, n, tol, max_pivots, stall)
    tab.factorize()

    x = np.zeros(n)
    x[tab.basis] = tab.xB
    y_kept = tab.Binv.T @ c[tab.basis]
    duals = np.zeros(m)
    duals[rows] = y_kept * sign[rows]
    reduced = c - A_kept.T @ y_kept
    primal_residual = float(
        max(np.abs(A_kept @ x - b[rows]).max(initial=0.0), max(0.0, -tab.xB.min(initial=0.0)))
    )
    dual_residual = float(max(0.0, -reduced.min(initial=0.0)))
    return SimplexResult(x, float(c @ x), duals, tab.basis.copy(), pivots, primal_residual, dual_residual, rows)
