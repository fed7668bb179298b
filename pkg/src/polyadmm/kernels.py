"""Compiled per-cell certificate pipeline.

Mirrors ``build_subproblem -> eliminate_equality -> to_lcp -> lemke_solve ->
recover_certificate`` for a contiguous block of cells inside one ``nogil``
call, so worker threads run without contending for the interpreter lock.
Inputs are padded arrays; each cell writes only its own output row.
"""

from __future__ import annotations

import numba
import numpy as np

from .lemke import _SOLVED, _lemke_kernel

FAILED_RECOVERY = 10


@numba.njit(nogil=True, cache=True)
def _cell_certificate(a, b, nr, c, dvec, no, rot, trans, zeta, xi, y_out):
    dim = a.shape[1]
    ny = nr + no + 1
    kmat = np.zeros((ny, dim + 1))
    for r in range(nr):
        for k in range(dim):
            kmat[r, 1 + k] = a[r, k]
    for r in range(no):
        s = dvec[r]
        for k in range(dim):
            s -= c[r, k] * trans[k]
        kmat[nr + r, 0] = s
        for k in range(dim):
            v = 0.0
            for m in range(dim):
                v += c[r, m] * rot[m, k]
            kmat[nr + r, 1 + k] = v
    kmat[ny - 1, 0] = 1.0
    bvec = np.empty(dim + 1)
    bvec[0] = 1.0 + zeta
    for k in range(dim):
        bvec[1 + k] = xi[k]

    # pivot on the largest kappa entry; kappa = (b, 0, ..., 0)
    p = 0
    for r in range(1, nr):
        if abs(b[r]) > abs(b[p]):
            p = r
    kp = b[p]
    nu = ny - 1
    kt = np.empty((nu, dim + 1))
    kap_t = np.zeros(nu)
    row = 0
    for r in range(ny):
        if r == p:
            continue
        kr = b[r] if r < nr else 0.0
        f = kr / kp
        for k in range(dim + 1):
            kt[row, k] = kmat[r, k] - f * kmat[p, k]
        kap_t[row] = f
        row += 1
    bt = np.empty(dim + 1)
    for k in range(dim + 1):
        bt[k] = bvec[k] + kmat[p, k] / kp
    eta_t = 1.0 / kp

    n = nu + 1
    m = np.zeros((n, n))
    q = np.empty(n)
    for r in range(nu):
        for s in range(nu):
            v = 0.0
            for k in range(dim + 1):
                v += kt[r, k] * kt[s, k]
            m[r, s] = v
        m[r, nu] = kap_t[r]
        m[nu, r] = -kap_t[r]
        v = 0.0
        for k in range(dim + 1):
            v += kt[r, k] * bt[k]
        q[r] = v
    q[nu] = eta_t

    status, z, w, piv = _lemke_kernel(m, q, 50 * n)
    if status != _SOLVED:
        return status
    acc = 1.0
    row = 0
    for r in range(ny):
        if r == p:
            continue
        yu = z[row] if z[row] > 0.0 else 0.0
        y_out[r] = yu
        if r < nr:
            acc -= b[r] * yu
        row += 1
    y_e = acc / kp
    y_out[p] = y_e
    if y_e < -1e-6:
        return FAILED_RECOVERY
    return _SOLVED


@numba.njit(nogil=True, cache=True)
def certificate_block(
    start, stop, cells, part_a, part_b, part_nr, obs_c, obs_d, obs_no, rots, trans, zeta, xi, y_out, status_out
):
    for k in range(start, stop):
        i = cells[k, 0]
        j = cells[k, 1]
        t = cells[k, 2]
        nr = part_nr[i]
        no = obs_no[j]
        status_out[k] = _cell_certificate(
            part_a[i, :nr],
            part_b[i, :nr],
            nr,
            obs_c[j, :no],
            obs_d[j, :no],
            no,
            rots[t],
            trans[t],
            zeta[i, j, t],
            xi[i, j, t],
            y_out[k],
        )


def pack_geometry(parts, dim: int):
    """Padded ``(A, b, n_rows)`` arrays for a list of polytopes."""
    n_max = max((p.n_rows for p in parts), default=0)
    a = np.zeros((len(parts), max(n_max, 1), dim))
    b = np.zeros((len(parts), max(n_max, 1)))
    n = np.zeros(len(parts), np.int64)
    for k, p in enumerate(parts):
        a[k, : p.n_rows] = p.a_matrix
        b[k, : p.n_rows] = p.b_vector
        n[k] = p.n_rows
    return a, b, n
