"""Scale-based collision LP and its dual certificates.

``min_scale`` grows or shrinks the robot polytope about its frame origin
until it first touches the obstacle. A minimal scale below one means the two
sets overlap. ``solve_dual`` solves the dual LP independently, so comparing
the two optima is a genuine strong-duality check rather than a tautology.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .geometry import BodyPolytope, HalfspacePolytope, Pose
from .simplex import LPStatus, linprog


class ScaleStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


class CollisionLPError(RuntimeError):
    pass


@dataclass
class ScaleResult:
    alpha_star: float
    witness_point: np.ndarray | None
    status: ScaleStatus


@dataclass
class DualCertificate:
    lam: np.ndarray
    mu: np.ndarray
    gamma: float

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.lam, self.mu, [self.gamma]])

    @classmethod
    def from_stacked(cls, y: np.ndarray, n_r: int, n_o: int) -> "DualCertificate":
        y = np.asarray(y, dtype=float)
        return cls(y[:n_r].copy(), y[n_r : n_r + n_o].copy(), float(y[n_r + n_o]))


def obstacle_in_body_frame(obstacle: HalfspacePolytope, pose: Pose) -> HalfspacePolytope:
    """``{x : C R x <= d - C rho}``, the obstacle seen from the robot frame."""
    c = obstacle.a_matrix
    return HalfspacePolytope(c @ pose.rotation, obstacle.b_vector - c @ pose.translation)


def min_scale(robot: HalfspacePolytope, obstacle: HalfspacePolytope) -> ScaleResult:
    """Solve ``min alpha  s.t.  A x <= alpha b,  C x <= d,  alpha >= 0``.

    Scaling is about the origin of the frame in which ``robot`` is expressed.
    """
    d = robot.dim
    if obstacle.dim != d:
        raise CollisionLPError(f"dimension mismatch: robot {d}, obstacle {obstacle.dim}")
    # variables: (alpha, x)
    a, b = robot.a_matrix, robot.b_vector
    c_mat, d_vec = obstacle.a_matrix, obstacle.b_vector
    a_ub = np.vstack(
        [
            np.hstack([-b[:, None], a]),
            np.hstack([np.zeros((c_mat.shape[0], 1)), c_mat]),
        ]
    )
    b_ub = np.concatenate([np.zeros(a.shape[0]), d_vec])
    cost = np.zeros(d + 1)
    cost[0] = 1.0
    free = np.ones(d + 1, bool)
    free[0] = False
    res = linprog(cost, a_ub, b_ub, free=free)
    if res.status is LPStatus.INFEASIBLE:
        return ScaleResult(np.inf, None, ScaleStatus.INFEASIBLE)
    if res.status is not LPStatus.OPTIMAL:
        raise CollisionLPError(f"scale LP failed: {res.status.value}")
    return ScaleResult(float(res.x[0]), res.x[1:], ScaleStatus.OPTIMAL)


def min_scale_at_pose(body: BodyPolytope, obstacle: HalfspacePolytope, pose: Pose) -> ScaleResult:
    """Scale LP for a posed robot part, scaled about its body origin."""
    res = min_scale(body.poly, obstacle_in_body_frame(obstacle, pose))
    if res.witness_point is not None:
        res.witness_point = pose.apply(res.witness_point)
    return res


def solve_dual(robot: HalfspacePolytope, obstacle: HalfspacePolytope) -> DualCertificate:
    """Solve ``max -d^T mu  s.t.  b^T lam = 1,  A^T lam + C^T mu = 0,  lam, mu >= 0``.

    The slack is set to ``gamma = max(0, -d^T mu - 1)``, which zeroes the
    translation residual whenever the pair is separated.
    """
    a, b = robot.a_matrix, robot.b_vector
    c_mat, d_vec = obstacle.a_matrix, obstacle.b_vector
    n_r, n_o = a.shape[0], c_mat.shape[0]
    a_eq = np.vstack(
        [
            np.concatenate([b, np.zeros(n_o)])[None, :],
            np.hstack([a.T, c_mat.T]),
        ]
    )
    b_eq = np.concatenate([[1.0], np.zeros(robot.dim)])
    res = linprog(np.concatenate([np.zeros(n_r), d_vec]), a_eq=a_eq, b_eq=b_eq)
    if res.status is LPStatus.UNBOUNDED:
        raise CollisionLPError("dual LP unbounded: obstacle is empty")
    if res.status is not LPStatus.OPTIMAL:
        raise CollisionLPError(f"dual LP failed: {res.status.value}")
    lam, mu = res.x[:n_r], res.x[n_r:]
    value = -float(d_vec @ mu)
    return DualCertificate(lam, mu, max(0.0, value - 1.0))


def dual_value(cert: DualCertificate, obstacle: HalfspacePolytope) -> float:
    return -float(obstacle.b_vector @ cert.mu)


def translation_residual(mu, gamma, obstacle: HalfspacePolytope, pose: Pose) -> float:
    c, d = obstacle.a_matrix, obstacle.b_vector
    return 1.0 + float((d - c @ pose.translation) @ mu) + float(gamma)


def rotation_residual(lam, mu, body: BodyPolytope, obstacle: HalfspacePolytope, pose: Pose) -> np.ndarray:
    return body.poly.a_matrix.T @ lam + (obstacle.a_matrix @ pose.rotation).T @ mu


def check_certificate(
    cert: DualCertificate,
    robot_body: BodyPolytope,
    obstacle: HalfspacePolytope,
    pose: Pose,
    tol: float = 1e-6,
) -> bool:
    """True iff ``cert`` proves the posed part and obstacle are separated (scale >= 1)."""
    lam, mu, gamma = np.asarray(cert.lam), np.asarray(cert.mu), float(cert.gamma)
    if lam.size != robot_body.poly.n_rows or mu.size != obstacle.n_rows:
        return False
    if lam.min(initial=0.0) < -tol or mu.min(initial=0.0) < -tol or gamma < -tol:
        return False
    if abs(robot_body.poly.b_vector @ lam - 1.0) > tol:
        return False
    if abs(translation_residual(mu, gamma, obstacle, pose)) > tol:
        return False
    return bool(np.linalg.norm(rotation_residual(lam, mu, robot_body, obstacle, pose)) <= tol)
