"""Per-cell certificate QP, equality elimination and conversion to an LCP.

For one (part, obstacle, timestep) cell the certificate update is

    min_y  0.5 * ||K^T y + b||^2   s.t.  kappa^T y = eta,  y >= 0

with ``y = (lam, mu, gamma)``. One component of ``y`` is solved out of the
equality, leaving an inequality-constrained QP whose KKT system is an LCP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .collision_lp import DualCertificate
from .geometry import BodyPolytope, HalfspacePolytope, Pose


class SubproblemError(RuntimeError):
    pass


@dataclass
class SubproblemData:
    k_matrix: np.ndarray
    b_vec: np.ndarray
    kappa: np.ndarray
    eta: float
    n_r: int
    n_o: int
    part_index: int = 0
    obstacle_index: int = 0
    time_index: int = 0

    def objective(self, y: np.ndarray) -> float:
        r = self.k_matrix.T @ y + self.b_vec
        return 0.5 * float(r @ r)


@dataclass
class ReducedQp:
    k_tilde: np.ndarray
    b_tilde: np.ndarray
    kappa_tilde: np.ndarray
    eta_tilde: float
    pivot_index: int

    def objective(self, y_u: np.ndarray) -> float:
        r = self.k_tilde.T @ y_u + self.b_tilde
        return 0.5 * float(r @ r)


@dataclass
class LcpProblem:
    m_matrix: np.ndarray
    q_vector: np.ndarray

    @property
    def n(self) -> int:
        return self.q_vector.shape[0]


def build_subproblem(
    robot_part: BodyPolytope,
    obstacle: HalfspacePolytope,
    pose: Pose,
    zeta: float,
    xi,
    part_index: int = 0,
    obstacle_index: int = 0,
    time_index: int = 0,
) -> SubproblemData:
    a, b = robot_part.poly.a_matrix, robot_part.poly.b_vector
    c, d = obstacle.a_matrix, obstacle.b_vector
    dim = a.shape[1]
    if c.shape[1] != dim or pose.dim != dim:
        raise SubproblemError(f"dimension mismatch: part {dim}, obstacle {c.shape[1]}, pose {pose.dim}")
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != dim:
        raise SubproblemError(f"xi has length {xi.size}, expected {dim}")
    n_r, n_o = a.shape[0], c.shape[0]
    k = np.zeros((n_r + n_o + 1, dim + 1))
    k[:n_r, 1:] = a
    k[n_r : n_r + n_o, 0] = d - c @ pose.translation
    k[n_r : n_r + n_o, 1:] = c @ pose.rotation
    k[-1, 0] = 1.0
    kappa = np.concatenate([b, np.zeros(n_o + 1)])
    return SubproblemData(
        k_matrix=k,
        b_vec=np.concatenate([[1.0 + float(zeta)], xi]),
        kappa=kappa,
        eta=1.0,
        n_r=n_r,
        n_o=n_o,
        part_index=part_index,
        obstacle_index=obstacle_index,
        time_index=time_index,
    )


def eliminate_equality(sub: SubproblemData, pivot_index: int | None = None) -> ReducedQp:
    """Solve ``y_e`` out of ``kappa^T y = eta`` (pivot defaults to the largest ``|kappa|``)."""
    kappa = sub.kappa
    if pivot_index is None:
        pivot_index = int(np.argmax(np.abs(kappa)))
    kappa_e = kappa[pivot_index]
    if abs(kappa_e) <= 1e-12:
        raise SubproblemError("cannot pivot on a zero kappa entry")
    keep = np.arange(kappa.size) != pivot_index
    k_e = sub.k_matrix[pivot_index]
    k_u = sub.k_matrix[keep]
    kappa_u = kappa[keep]
    eta_tilde = sub.eta / kappa_e
    if eta_tilde < 0:
        raise SubproblemError(f"negative reduced bound eta_tilde={eta_tilde:g}: y=0 is infeasible")
    return ReducedQp(
        k_tilde=k_u - np.outer(kappa_u / kappa_e, k_e),
        b_tilde=sub.b_vec + k_e * (sub.eta / kappa_e),
        kappa_tilde=kappa_u / kappa_e,
        eta_tilde=eta_tilde,
        pivot_index=pivot_index,
    )


def reconstruct(sub: SubproblemData, red: ReducedQp, y_u: np.ndarray) -> np.ndarray:
    p = red.pivot_index
    kappa_u = np.delete(sub.kappa, p)
    y_e = (sub.eta - kappa_u @ y_u) / sub.kappa[p]
    return np.insert(np.asarray(y_u, dtype=float), p, y_e)


def to_lcp(red: ReducedQp) -> LcpProblem:
    """KKT system of the reduced QP; ``z = (y_u, phi)`` and ``w = (psi, slack)``."""
    kt = red.k_tilde
    n = kt.shape[0]
    m = np.zeros((n + 1, n + 1))
    m[:n, :n] = kt @ kt.T
    m[:n, n] = red.kappa_tilde
    m[n, :n] = -red.kappa_tilde
    q = np.concatenate([kt @ red.b_tilde, [red.eta_tilde]])
    return LcpProblem(m, q)


def recover_certificate(sub: SubproblemData, red: ReducedQp, y_u: np.ndarray) -> DualCertificate:
    y_u = np.asarray(y_u, dtype=float)
    if y_u.size and y_u.min() < -1e-9:
        raise SubproblemError(f"negative reduced variable {y_u.min():g}")
    y = reconstruct(sub, red, y_u)
    if y[red.pivot_index] < -1e-6:
        raise SubproblemError(f"eliminated component is {y[red.pivot_index]:g} < 0: upstream solve failed")
    return DualCertificate.from_stacked(y, sub.n_r, sub.n_o)
