"""Dense two-phase simplex for small linear programs.

Problems here have at most a few dozen rows, so a full tableau is cheap and
keeps the pivoting logic easy to audit. Dantzig pricing is used until a run
of degenerate pivots is seen, after which Bland's rule takes over to rule out
cycling.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9


class LPStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LPResult:
    x: np.ndarray | None
    objective: float
    status: LPStatus
    iterations: int


class _Tableau:
    def __init__(self, table: np.ndarray, basis: list[int]):
        self.t = table
        self.basis = basis
        self.iterations = 0

    def pivot(self, row: int, col: int) -> None:
        t = self.t
        t[row] /= t[row, col]
        col_vals = t[:, col].copy()
        col_vals[row] = 0.0
        t -= np.outer(col_vals, t[row])
        t[:, col] = 0.0
        t[row, col] = 1.0
        self.basis[row] = col
        self.iterations += 1

    def run(self, cost_row: int, n_cols: int, max_iter: int) -> LPStatus:
        """Minimise the objective stored in ``cost_row`` over columns ``[0, n_cols)``."""
        t = self.t
        m = len(self.basis)
        degenerate_run = 0
        bland = False
        while True:
            if self.iterations >= max_iter:
                return LPStatus.ITERATION_LIMIT
            reduced = t[cost_row, :n_cols]
            if bland:
                cands = np.flatnonzero(reduced < -PIVOT_TOL)
                if cands.size == 0:
                    return LPStatus.OPTIMAL
                col = int(cands[0])
            else:
                col = int(np.argmin(reduced))
                if reduced[col] >= -PIVOT_TOL:
                    return LPStatus.OPTIMAL
            column = t[:m, col]
            pos = column > PIVOT_TOL
            if not pos.any():
                return LPStatus.UNBOUNDED
            ratios = np.full(m, np.inf)
            ratios[pos] = t[:m, -1][pos] / column[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12 * (1.0 + abs(best)))
            # smallest basic index among ties (Bland's leaving rule)
            row = int(min(ties, key=lambda r: self.basis[r]))
            if best <= 1e-12:
                degenerate_run += 1
                if degenerate_run > 2 * (m + 1):
                    bland = True
            else:
                degenerate_run = 0
            self.pivot(row, col)


def simplex_standard(c, a_eq, b_eq, max_iter: int = 5000) -> LPResult:
    """Solve ``min c^T x  s.t.  a_eq x = b_eq, x >= 0`` by the two-phase method."""
    c = np.asarray(c, dtype=float)
    a = np.array(a_eq, dtype=float, ndmin=2)
    b = np.array(b_eq, dtype=float).reshape(-1)
    m, n = a.shape
    if m == 0:
        if np.any(c < -PIVOT_TOL):
            return LPResult(None, -np.inf, LPStatus.UNBOUNDED, 0)
        return LPResult(np.zeros(n), 0.0, LPStatus.OPTIMAL, 0)

    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    # columns: x (n) | artificials (m) | rhs; rows: constraints | phase-2 cost | phase-1 cost
    table = np.zeros((m + 2, n + m + 1))
    table[:m, :n] = a
    table[:m, n : n + m] = np.eye(m)
    table[:m, -1] = b
    table[m, :n] = c
    table[m + 1, :n] = -a.sum(axis=0)
    table[m + 1, -1] = -b.sum()
    tab = _Tableau(table, list(range(n, n + m)))

    status = tab.run(m + 1, n + m, max_iter)
    if status is LPStatus.ITERATION_LIMIT:
        return LPResult(None, np.nan, status, tab.iterations)
    if -tab.t[m + 1, -1] > FEAS_TOL * (1.0 + np.abs(b).max()):
        return LPResult(None, np.nan, LPStatus.INFEASIBLE, tab.iterations)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if tab.basis[r] >= n:
            cands = np.flatnonzero(np.abs(tab.t[r, :n]) > 1e-9)
            if cands.size:
                tab.pivot(r, int(cands[0]))
                keep.append(r)
        else:
            keep.append(r)
    rows = keep + [m]
    t2 = np.hstack([tab.t[rows, :n], tab.t[rows, -1:]])
    tab2 = _Tableau(t2, [tab.basis[r] for r in keep])
    tab2.iterations = tab.iterations
    # price out basic columns from the cost row
    for r, col in enumerate(tab2.basis):
        if t2[-1, col] != 0.0:
            t2[-1] -= t2[-1, col] * t2[r]

    status = tab2.run(len(keep), n, max_iter)
    if status is not LPStatus.OPTIMAL:
        return LPResult(None, np.nan, status, tab2.iterations)
    x = np.zeros(n)
    for r, col in enumerate(tab2.basis):
        x[col] = t2[r, -1]
    return LPResult(x, float(c @ x), LPStatus.OPTIMAL, tab2.iterations)


def linprog(
    c,
    a_ub=None,
    b_ub=None,
    a_eq=None,
    b_eq=None,
    free=None,
    max_iter: int = 5000,
) -> LPResult:
    """Minimise ``c^T x`` subject to ``a_ub x <= b_ub`` and ``a_eq x = b_eq``.

    Variables are nonnegative unless flagged in the boolean mask ``free``.
    Free variables are split into positive and negative parts internally.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    free = np.zeros(n, bool) if free is None else np.asarray(free, bool)
    a_ub = np.zeros((0, n)) if a_ub is None else np.array(a_ub, float, ndmin=2)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float).reshape(-1)
    a_eq = np.zeros((0, n)) if a_eq is None else np.array(a_eq, float, ndmin=2)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float).reshape(-1)
    for name, arr in (("c", c), ("a_ub", a_ub), ("b_ub", b_ub), ("a_eq", a_eq), ("b_eq", b_eq)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"LP data {name} contains non-finite values")

    n_free = int(free.sum())
    m_ub = a_ub.shape[0]
    # standard-form columns: x | -x[free] | slacks
    split = np.flatnonzero(free)
    big_c = np.concatenate([c, -c[split], np.zeros(m_ub)])
    rows_ub = np.hstack([a_ub, -a_ub[:, split], np.eye(m_ub)])
    rows_eq = np.hstack([a_eq, -a_eq[:, split], np.zeros((a_eq.shape[0], m_ub))])
    res = simplex_standard(
        big_c, np.vstack([rows_ub, rows_eq]), np.concatenate([b_ub, b_eq]), max_iter
    )
    if res.x is None:
        return res
    x = res.x[:n].copy()
    x[split] -= res.x[n : n + n_free]
    return LPResult(x, float(c @ x), res.status, res.iterations)
