"""Lemke's complementary pivoting for ``w = M z + q, w, z >= 0, w^T z = 0``.

The pivoting kernel is compiled with numba in ``nogil`` mode so a thread pool
can run many small LCPs concurrently. Each call only touches its own
tableau. Covering vector is all ones; ties in the ratio test are broken
lexicographically, which guarantees termination for copositive-plus ``M``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numba
import numpy as np

from .dual_subproblem import LcpProblem

PIVOT_EPS = 1e-11
RATIO_TOL = 1e-12

_SOLVED, _RAY, _LIMIT, _SINGULAR = 0, 1, 2, 3


class LcpStatus(enum.Enum):
    SOLVED = "solved"
    RAY_TERMINATION = "ray_termination"
    ITERATION_LIMIT = "iteration_limit"
    SINGULAR_PIVOT = "singular_pivot"


_STATUS = {
    _SOLVED: LcpStatus.SOLVED,
    _RAY: LcpStatus.RAY_TERMINATION,
    _LIMIT: LcpStatus.ITERATION_LIMIT,
    _SINGULAR: LcpStatus.SINGULAR_PIVOT,
}


def status_from_code(code: int) -> LcpStatus:
    """Map a kernel status code to its enum member."""
    return _STATUS[code]


@dataclass
class LcpSolution:
    z: np.ndarray
    w: np.ndarray
    status: LcpStatus
    pivots_used: int

    @property
    def solved(self) -> bool:
        return self.status is LcpStatus.SOLVED


@numba.njit(nogil=True, cache=True)
def _pivot(t, basis, row, col):
    rows, cols = t.shape
    piv = t[row, col]
    for j in range(cols):
        t[row, j] /= piv
    for i in range(rows):
        if i != row:
            f = t[i, col]
            if f != 0.0:
                for j in range(cols):
                    t[i, j] -= f * t[row, j]
    t[row, col] = 1.0
    left = basis[row]
    basis[row] = col
    return left


@numba.njit(nogil=True, cache=True)
def _lex_ratio_row(t, basis, col, n, z0_col):
    """Lexicographic minimum-ratio row for entering ``col``; -1 means a ray."""
    rhs = 2 * n + 1
    cand = np.empty(n, np.int64)
    n_cand = 0
    best = np.inf
    for i in range(n):
        if t[i, col] > PIVOT_EPS:
            r = t[i, rhs] / t[i, col]
            if n_cand == 0 or r < best - RATIO_TOL * (1.0 + abs(best)):
                best = r
                n_cand = 0
                cand[n_cand] = i
                n_cand = 1
            elif r <= best + RATIO_TOL * (1.0 + abs(best)):
                cand[n_cand] = i
                n_cand += 1
    if n_cand == 0:
        return -1
    if n_cand == 1:
        return cand[0]
    for k in range(n_cand):
        if basis[cand[k]] == z0_col:
            return cand[k]
    # break ties on the rows of the basis inverse (the w columns)
    for j in range(n):
        best = np.inf
        m = 0
        for k in range(n_cand):
            i = cand[k]
            r = t[i, j] / t[i, col]
            if m == 0 or r < best - RATIO_TOL:
                best = r
                cand[0] = i
                m = 1
            elif r <= best + RATIO_TOL:
                cand[m] = i
                m += 1
        n_cand = m
        if n_cand == 1:
            return cand[0]
    return cand[0]


@numba.njit(nogil=True, cache=True)
def _lemke_kernel(m_mat, q, max_pivots):
    n = q.shape[0]
    z = np.zeros(n)
    w = q.copy()
    if n == 0:
        return _SOLVED, z, w, 0
    qmin = np.inf
    for i in range(n):
        if q[i] < qmin:
            qmin = q[i]
    if qmin >= 0.0:
        return _SOLVED, z, w, 0

    z0_col = 2 * n
    t = np.zeros((n, 2 * n + 2))
    for i in range(n):
        t[i, i] = 1.0
        for j in range(n):
            t[i, n + j] = -m_mat[i, j]
        t[i, z0_col] = -1.0
        t[i, 2 * n + 1] = q[i]
    basis = np.arange(n)

    # initial pivot: most negative q, ties to the largest index (lexicographic)
    row = 0
    for i in range(n):
        if q[i] <= qmin:
            row = i
    left = _pivot(t, basis, row, z0_col)
    pivots = 1
    status = _LIMIT
    while pivots < max_pivots:
        col = left + n if left < n else left - n
        row = _lex_ratio_row(t, basis, col, n, z0_col)
        if row < 0:
            status = _RAY
            break
        if abs(t[row, col]) < PIVOT_EPS:
            status = _SINGULAR
            break
        left = _pivot(t, basis, row, col)
        pivots += 1
        if left == z0_col:
            status = _SOLVED
            break

    for i in range(n):
        b = basis[i]
        if b < n:
            w[b] = t[i, 2 * n + 1]
        elif b < 2 * n:
            z[b - n] = t[i, 2 * n + 1]
    if status != _SOLVED:
        return status, z, w, pivots

    # refine the basic z values from the original data: rows with w_i nonbasic
    in_basis = np.zeros(2 * n, np.bool_)
    for i in range(n):
        in_basis[basis[i]] = True
    zb = np.empty(n, np.int64)
    nz = 0
    wr = np.empty(n, np.int64)
    nw = 0
    for i in range(n):
        if in_basis[n + i]:
            zb[nz] = i
            nz += 1
        else:
            z[i] = 0.0
        if not in_basis[i]:
            wr[nw] = i
            nw += 1
    if nz > 0 and nz == nw:
        sub = np.empty((nz, nz))
        rhs = np.empty(nz)
        for a in range(nz):
            for b in range(nz):
                sub[a, b] = m_mat[wr[a], zb[b]]
            rhs[a] = -q[wr[a]]
        if abs(np.linalg.det(sub)) > 1e-300:
            zs = np.linalg.solve(sub, rhs)
            ok = True
            for a in range(nz):
                if not np.isfinite(zs[a]):
                    ok = False
            if ok:
                for a in range(nz):
                    z[zb[a]] = zs[a]
    for i in range(n):
        s = q[i]
        for j in range(n):
            s += m_mat[i, j] * z[j]
        w[i] = s
    for i in range(n):
        if not in_basis[i]:
            w[i] = 0.0 if abs(w[i]) < 1e-12 * (1.0 + abs(q[i])) else w[i]
    return status, z, w, pivots


def lemke_solve(problem: LcpProblem, max_pivots: int | None = None) -> LcpSolution:
    m = np.ascontiguousarray(problem.m_matrix, dtype=np.float64)
    q = np.ascontiguousarray(problem.q_vector, dtype=np.float64)
    n = q.shape[0]
    if m.shape != (n, n):
        raise ValueError(f"M has shape {m.shape}, q has length {n}")
    if max_pivots is None:
        max_pivots = 50 * max(n, 1)
    code, z, w, pivots = _lemke_kernel(m, q, int(max_pivots))
    return LcpSolution(z, w, _STATUS[code], int(pivots))


def complementarity_residual(problem: LcpProblem, sol: LcpSolution) -> float:
    """Largest violation of ``w = Mz + q``, ``z, w >= 0`` and ``z^T w = 0``."""
    m, q = problem.m_matrix, problem.q_vector
    return max(
        float(np.max(np.abs(sol.w - (m @ sol.z + q)), initial=0.0)),
        float(abs(sol.z @ sol.w)),
        float(max(0.0, -sol.z.min(initial=0.0))),
        float(max(0.0, -sol.w.min(initial=0.0))),
    )


class EnumerationError(RuntimeError):
    pass


def lcp_enumerate(problem: LcpProblem, max_n: int = 12) -> LcpSolution:
    """Exact LCP solution by trying every complementary index set (test oracle)."""
    m = np.asarray(problem.m_matrix, dtype=float)
    q = np.asarray(problem.q_vector, dtype=float)
    n = q.size
    if n > max_n:
        raise EnumerationError(f"n={n} exceeds enumeration limit {max_n}")
    best = None
    best_viol = np.inf
    for mask in itertools.product((False, True), repeat=n):
        idx = np.flatnonzero(mask)
        z = np.zeros(n)
        if idx.size:
            sub = m[np.ix_(idx, idx)]
            if np.linalg.matrix_rank(sub) < idx.size:
                continue
            z[idx] = np.linalg.solve(sub, -q[idx])
        w = m @ z + q
        w[idx] = 0.0
        viol = max(0.0, -z.min(initial=0.0), -w.min(initial=0.0))
        if viol < best_viol:
            best, best_viol = (z, w), viol
            if viol == 0.0:
                break
    if best is None:
        raise EnumerationError("no complementary basis is solvable")
    return LcpSolution(best[0], best[1], LcpStatus.SOLVED, 0)
