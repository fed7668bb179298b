"""Collision-avoiding MPC solved by a three-block ADMM.

Each iteration

1. updates every per-cell certificate ``(lam, mu, gamma)`` by an independent
   small QP (batched through :mod:`polyadmm.batch_solver`),
2. takes one SQP step on states and controls: dynamics and poses are
   linearised about the current trajectory, states are condensed onto the
   controls, and the box-constrained QP is solved as an LCP,
3. adds the translation/rotation residuals to the scaled multipliers
   ``zeta`` and ``xi``.

Cells are ``(part i, obstacle j, step t)`` with ``t = 1..T``; the current
state at ``t = 0`` cannot be changed, so no constraint is imposed there.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .batch_solver import Backend, BatchRequest, parallel_for, solve_batch
from .collision_lp import DualCertificate
from .dual_subproblem import (
    LcpProblem,
    build_subproblem,
    eliminate_equality,
    recover_certificate,
    to_lcp,
)
from .dynamics import DynamicsModel
from .geometry import ObstacleSet, RobotGeometry
from .kernels import FAILED_RECOVERY, certificate_block, pack_geometry
from .lemke import lemke_solve, status_from_code

log = logging.getLogger(__name__)


class MpcError(ValueError):
    pass


@dataclass
class MpcProblem:
    horizon: int
    dt: float
    q_s: np.ndarray
    q_u: np.ndarray
    s_min: np.ndarray
    s_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    reference: np.ndarray  # (T+1, n_s)
    robot: RobotGeometry
    obstacles: ObstacleSet
    model: DynamicsModel
    initial_state: np.ndarray
    obstacle_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        m = self.model
        self.q_s = np.atleast_2d(np.asarray(self.q_s, dtype=float))
        self.q_u = np.atleast_2d(np.asarray(self.q_u, dtype=float))
        for name in ("s_min", "s_max", "u_min", "u_max", "initial_state"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        self.reference = np.asarray(self.reference, dtype=float)
        if self.obstacle_ids is None:
            self.obstacle_ids = tuple(range(len(self.obstacles)))
        T = self.horizon
        if T < 1 or self.dt <= 0:
            raise MpcError("horizon must be >= 1 and dt > 0")
        if self.q_s.shape != (m.n_s, m.n_s) or self.q_u.shape != (m.n_u, m.n_u):
            raise MpcError("weight matrix shapes do not match the model")
        for name, q in (("q_s", self.q_s), ("q_u", self.q_u)):
            if not np.allclose(q, q.T) or np.linalg.eigvalsh(q).min() <= 0:
                raise MpcError(f"{name} must be symmetric positive definite")
        if self.s_min.size != m.n_s or self.s_max.size != m.n_s or np.any(self.s_min >= self.s_max):
            raise MpcError("state bounds must satisfy s_min < s_max")
        if self.u_min.size != m.n_u or self.u_max.size != m.n_u or np.any(self.u_min >= self.u_max):
            raise MpcError("control bounds must satisfy u_min < u_max")
        if not (np.all(np.isfinite(self.u_min)) and np.all(np.isfinite(self.u_max))):
            raise MpcError("control bounds must be finite")
        if self.reference.shape != (T + 1, m.n_s):
            raise MpcError(f"reference must have shape {(T + 1, m.n_s)}, got {self.reference.shape}")
        if self.initial_state.size != m.n_s:
            raise MpcError("initial state has the wrong length")
        if self.robot.dim != m.d or (len(self.obstacles) and self.obstacles[0].dim != m.d):
            raise MpcError("geometry dimension does not match the model")

    @property
    def n_parts(self) -> int:
        return len(self.robot)

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def cells(self) -> list[tuple[int, int, int]]:
        return [
            (i, j, t)
            for t in range(1, self.horizon + 1)
            for i in range(self.n_parts)
            for j in range(self.n_obstacles)
        ]


@dataclass
class AdmmParams:
    sigma: float = 300.0
    eps_pri: float | None = None
    eps_dual: float | None = None
    max_iters: int = 100
    gauss_seidel: bool = True
    backend: Backend = field(default_factory=Backend.serial)

    def __post_init__(self):
        if self.sigma <= 0:
            raise MpcError("sigma must be positive")
        if (self.eps_pri is not None and self.eps_pri <= 0) or (self.eps_dual is not None and self.eps_dual <= 0):
            raise MpcError("stopping tolerances must be positive")

    def tolerances(self, prob: MpcProblem) -> tuple[float, float]:
        scale = 1e-3 * max(1, prob.n_parts * prob.n_obstacles * (prob.horizon + 1))
        return (
            self.eps_pri if self.eps_pri is not None else scale,
            self.eps_dual if self.eps_dual is not None else scale,
        )


@dataclass
class TrajectoryIterate:
    states: np.ndarray  # (T+1, n_s)
    controls: np.ndarray  # (T, n_u)
    certs: dict[tuple[int, int, int], DualCertificate]
    zeta: np.ndarray  # (N, M, T+1)
    xi: np.ndarray  # (N, M, T+1, d)
    iteration: int = 0
    obstacle_ids: tuple[int, ...] = ()

    def copy(self) -> "TrajectoryIterate":
        return TrajectoryIterate(
            self.states.copy(),
            self.controls.copy(),
            {k: DualCertificate(c.lam.copy(), c.mu.copy(), c.gamma) for k, c in self.certs.items()},
            self.zeta.copy(),
            self.xi.copy(),
            self.iteration,
            self.obstacle_ids,
        )


@dataclass
class AdmmReport:
    iterations_run: int = 0
    primal_residual_history: list[float] = field(default_factory=list)
    dual_residual_history: list[float] = field(default_factory=list)
    converged: bool = False
    per_stage_wall_times: dict[str, list[float]] = field(
        default_factory=lambda: {"dual_update": [], "state_update": [], "multiplier_update": []}
    )
    failed_cells: int = 0
    qp_failures: int = 0


def initial_certificate(prob: MpcProblem, i: int, j: int) -> DualCertificate:
    b = prob.robot.parts[i].poly.b_vector
    lam = np.full(b.size, 1.0 / b.sum())
    return DualCertificate(lam, np.zeros(prob.obstacles[j].n_rows), 0.0)


def cold_start(prob: MpcProblem) -> TrajectoryIterate:
    states = np.clip(prob.reference, prob.s_min, prob.s_max)
    states[0] = prob.initial_state
    n, m, T, d = prob.n_parts, prob.n_obstacles, prob.horizon, prob.model.d
    certs = {(i, j, t): initial_certificate(prob, i, j) for (i, j, t) in prob.cells()}
    return TrajectoryIterate(
        states,
        np.zeros((T, prob.model.n_u)),
        certs,
        np.zeros((n, m, T + 1)),
        np.zeros((n, m, T + 1, d)),
        0,
        tuple(prob.obstacle_ids),
    )


def shift_iterate(prev: TrajectoryIterate, prob: MpcProblem) -> TrajectoryIterate:
    """Warm start for the next receding-horizon step.

    Shifts everything one step forward in time, re-anchors at the new measured
    state, and carries certificates and multipliers over by obstacle id.
    Obstacles that were not present before start from the cold values.
    """
    cold = cold_start(prob)
    T = prob.horizon
    model = prob.model
    controls = np.vstack([prev.controls[1:], prev.controls[-1:]])
    states = np.empty_like(cold.states)
    states[0] = prob.initial_state
    for t in range(T):
        states[t + 1] = model.step(states[t], controls[t], prob.dt)
    cold.states = states
    cold.controls = np.clip(controls, prob.u_min, prob.u_max)
    old_index = {oid: j for j, oid in enumerate(prev.obstacle_ids)}
    for j_new, oid in enumerate(prob.obstacle_ids):
        j_old = old_index.get(oid)
        if j_old is None:
            continue
        for i in range(prob.n_parts):
            for t in range(1, T + 1):
                t_old = min(t + 1, T)
                cert = prev.certs.get((i, j_old, t_old))
                if cert is not None:
                    cold.certs[(i, j_new, t)] = DualCertificate(cert.lam.copy(), cert.mu.copy(), cert.gamma)
                cold.zeta[i, j_new, t] = prev.zeta[i, j_old, t_old]
                cold.xi[i, j_new, t] = prev.xi[i, j_old, t_old]
    return cold


def evaluate_cost(traj: TrajectoryIterate, prob: MpcProblem) -> float:
    """Tracking cost ``sum_t |s_t - ref_t|^2_Qs + |u_t|^2_Qu``."""
    e = prob.model.state_error(traj.states, prob.reference)
    u = traj.controls
    return float(np.einsum("ti,ij,tj->", e, prob.q_s, e) + np.einsum("ti,ij,tj->", u, prob.q_u, u))


def residuals(prob: MpcProblem, states, cert: DualCertificate, i: int, j: int, t: int) -> tuple[float, np.ndarray]:
    """Nonlinear translation and rotation residuals of one cell."""
    pose = prob.model.pose_of(states[t])
    part = prob.robot.parts[i].poly
    obs = prob.obstacles[j]
    c, d = obs.a_matrix, obs.b_vector
    t_res = 1.0 + float((d - c @ pose.translation) @ cert.mu) + cert.gamma
    r_res = part.a_matrix.T @ cert.lam + (c @ pose.rotation).T @ cert.mu
    return t_res, r_res


def dual_update(
    traj: TrajectoryIterate, prob: MpcProblem, params: AdmmParams, backend: Backend | None = None
) -> tuple[dict[tuple[int, int, int], DualCertificate], list[tuple[int, int, int]]]:
    """Re-solve every cell's certificate QP; failed cells keep their old certificate.

    Cells are split into static contiguous blocks and each block runs through the
    compiled pipeline without holding the interpreter lock.
    """
    backend = params.backend if backend is None else backend
    cells = prob.cells()
    if not cells:
        return {}, []
    d = prob.model.d
    part_a, part_b, part_nr = pack_geometry([p.poly for p in prob.robot.parts], d)
    obs_c, obs_d, obs_no = pack_geometry(list(prob.obstacles), d)
    poses = [prob.model.pose_of(s) for s in traj.states]
    rots = np.ascontiguousarray([p.rotation for p in poses], dtype=float)
    trans = np.ascontiguousarray([p.translation for p in poses], dtype=float)
    cell_arr = np.asarray(cells, dtype=np.int64)
    width = int(part_nr.max() + obs_no.max() + 1)
    y_out = np.zeros((len(cells), width))
    status = np.full(len(cells), -1, dtype=np.int64)
    zeta = np.ascontiguousarray(traj.zeta, dtype=float)
    xi = np.ascontiguousarray(traj.xi, dtype=float)

    def block(start: int, stop: int) -> None:
        certificate_block(
            start, stop, cell_arr, part_a, part_b, part_nr, obs_c, obs_d, obs_no, rots, trans, zeta, xi, y_out, status
        )

    parallel_for(block, len(cells), backend)
    certs: dict[tuple[int, int, int], DualCertificate] = {}
    failed = []
    nr = part_nr.tolist()
    no = obs_no.tolist()
    ok = (status == 0).tolist()
    # y_out is fresh per call, so row views are safe to hand out
    for k, cell in enumerate(cells):
        if ok[k]:
            i, j, _ = cell
            a, b = nr[i], nr[i] + no[j]
            row = y_out[k]
            certs[cell] = DualCertificate(row[:a], row[a:b], float(row[b]))
        else:
            failed.append(cell)
            certs[cell] = traj.certs[cell]
            _log_failed_cell(cell, int(status[k]), prob, traj, poses)
    return certs, failed


def _log_failed_cell(cell, code, prob, traj, poses) -> None:
    i, j, t = cell
    reason = "negative recovered pivot" if code == FAILED_RECOVERY else status_from_code(code).value
    log.warning(
        "cell %s: %s; keeping previous certificate. part A=%s b=%s obstacle C=%s d=%s R=%s p=%s zeta=%r xi=%s",
        cell,
        reason,
        prob.robot.parts[i].poly.a_matrix.tolist(),
        prob.robot.parts[i].poly.b_vector.tolist(),
        prob.obstacles[j].a_matrix.tolist(),
        prob.obstacles[j].b_vector.tolist(),
        poses[t].rotation.tolist(),
        poses[t].translation.tolist(),
        float(traj.zeta[i, j, t]),
        traj.xi[i, j, t].tolist(),
    )


def dual_update_reference(
    traj: TrajectoryIterate, prob: MpcProblem, params: AdmmParams, backend: Backend | None = None
) -> tuple[dict[tuple[int, int, int], DualCertificate], list[tuple[int, int, int]]]:
    """Cell-by-cell Python pipeline; used to cross-check the compiled path."""
    backend = params.backend if backend is None else backend
    cells = prob.cells()
    if not cells:
        return {}, []
    poses = [prob.model.pose_of(s) for s in traj.states]
    subs, reds, lcps = [], [], []
    for i, j, t in cells:
        sub = build_subproblem(
            prob.robot.parts[i], prob.obstacles[j], poses[t], traj.zeta[i, j, t], traj.xi[i, j, t], i, j, t
        )
        red = eliminate_equality(sub)
        subs.append(sub)
        reds.append(red)
        lcps.append(to_lcp(red))
    result = solve_batch(BatchRequest(lcps, cells, backend))
    certs: dict[tuple[int, int, int], DualCertificate] = {}
    failed = []
    for cell, sub, red, sol in zip(cells, subs, reds, result.solutions):
        cert = None
        if not isinstance(sol, Exception) and sol.solved:
            try:
                cert = recover_certificate(sub, red, np.maximum(sol.z[:-1], 0.0))
            except Exception:
                cert = None
        if cert is None:
            failed.append(cell)
            cert = traj.certs[cell]
        certs[cell] = cert
    return certs, failed


@dataclass
class CondensedQp:
    hessian: np.ndarray
    gradient: np.ndarray
    phi: np.ndarray  # (T+1, n_s) free response
    gamma: np.ndarray  # (T+1, n_s, T*n_u) control sensitivity
    ineq_a: np.ndarray
    ineq_b: np.ndarray


def condense(
    traj: TrajectoryIterate,
    prob: MpcProblem,
    certs: dict[tuple[int, int, int], DualCertificate],
    sigma: float,
) -> CondensedQp:
    """Build ``min 0.5 U'HU + g'U  s.t.  G U <= h`` over stacked controls ``U``."""
    model = prob.model
    T, n_s, n_u = prob.horizon, model.n_s, model.n_u
    nU = T * n_u
    phi = np.zeros((T + 1, n_s))
    gam = np.zeros((T + 1, n_s, nU))
    phi[0] = prob.initial_state
    for t in range(T):
        lin = model.linearize(traj.states[t], traj.controls[t], prob.dt)
        phi[t + 1] = lin.a_jac @ phi[t] + lin.c_const
        gam[t + 1] = lin.a_jac @ gam[t]
        gam[t + 1][:, t * n_u : (t + 1) * n_u] += lin.b_jac

    h = np.zeros((nU, nU))
    g = np.zeros(nU)
    for t in range(1, T + 1):
        # error = s_t - ref'_t, with ref' shifted so wrapped angles stay linear in s_t
        ref = traj.states[t] - model.state_error(traj.states[t], prob.reference[t])
        e0 = phi[t] - ref
        gq = gam[t].T @ prob.q_s
        h += 2.0 * gq @ gam[t]
        g += 2.0 * gq @ e0
    h += 2.0 * np.kron(np.eye(T), prob.q_u)

    if sigma > 0 and certs:
        rows_by_t: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
        lin_pose = [None] + [model.linearize_pose(traj.states[t]) for t in range(1, T + 1)]
        for (i, j, t), cert in certs.items():
            lp = lin_pose[t]
            s0 = traj.states[t]
            part = prob.robot.parts[i].poly
            obs = prob.obstacles[j]
            v = obs.a_matrix.T @ cert.mu
            # translation residual: tau0 + tau1 . s
            tau1 = -lp.trans_jac.T @ v
            tau0 = 1.0 + obs.b_vector @ cert.mu + cert.gamma - v @ lp.trans0 - tau1 @ s0
            # rotation residual: r0 + Rj s
            rj = np.einsum("abk,a->bk", lp.rot_jac, v)
            r0 = part.a_matrix.T @ cert.lam + lp.rot0.T @ v - rj @ s0
            rows = np.vstack([tau1[None, :], rj])
            offs = np.concatenate([[tau0 + traj.zeta[i, j, t]], r0 + traj.xi[i, j, t]])
            rows_by_t.setdefault(t, []).append((rows, offs))
        for t, blocks in rows_by_t.items():
            rows = np.vstack([b[0] for b in blocks])
            offs = np.concatenate([b[1] for b in blocks])
            rg = rows @ gam[t]
            h += sigma * rg.T @ rg
            g += sigma * rg.T @ (rows @ phi[t] + offs)

    a_rows, b_rows = [], []
    for t in range(1, T + 1):
        for k in range(n_s):
            if np.isfinite(prob.s_max[k]):
                a_rows.append(gam[t][k])
                b_rows.append(prob.s_max[k] - phi[t][k])
            if np.isfinite(prob.s_min[k]):
                a_rows.append(-gam[t][k])
                b_rows.append(phi[t][k] - prob.s_min[k])
    ineq_a = np.array(a_rows).reshape(-1, nU)
    ineq_b = np.array(b_rows, dtype=float)
    return CondensedQp(0.5 * (h + h.T), g, phi, gam, ineq_a, ineq_b)


def solve_box_qp(qp: CondensedQp, u_lo: np.ndarray, u_hi: np.ndarray):
    """Solve the condensed QP with ``u_lo <= U <= u_hi`` as an LCP.

    With ``v = U - u_lo >= 0`` the KKT system of
    ``min 0.5 v'Hv + g'v  s.t.  Gv <= h`` is ``LCP([[H, G'], [-G, 0]], [g; h])``.
    Returns ``(U, lcp solution)``; ``U`` is None on failure.
    """
    nU = qp.gradient.size
    g_mat = np.vstack([np.eye(nU), qp.ineq_a])
    h_vec = np.concatenate([u_hi - u_lo, qp.ineq_b - qp.ineq_a @ u_lo])
    n_c = h_vec.size
    m = np.zeros((nU + n_c, nU + n_c))
    m[:nU, :nU] = qp.hessian
    m[:nU, nU:] = g_mat.T
    m[nU:, :nU] = -g_mat
    q = np.concatenate([qp.gradient + qp.hessian @ u_lo, h_vec])
    sol = lemke_solve(LcpProblem(m, q), max_pivots=50 * q.size)
    if not sol.solved:
        return None, sol
    return u_lo + sol.z[:nU], sol


def rollout(model: DynamicsModel, s0, controls, dt: float) -> np.ndarray:
    states = np.empty((controls.shape[0] + 1, np.asarray(s0).size))
    states[0] = s0
    for t in range(controls.shape[0]):
        states[t + 1] = model.step(states[t], controls[t], dt)
    return states


def state_update(
    traj: TrajectoryIterate,
    prob: MpcProblem,
    params: AdmmParams,
    certs: dict[tuple[int, int, int], DualCertificate] | None = None,
    sigma: float | None = None,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """One SQP step on ``(states, controls)``; returns ``(states, controls, ok)``."""
    certs = traj.certs if certs is None else certs
    sigma = params.sigma if sigma is None else sigma
    qp = condense(traj, prob, certs, sigma)
    T, n_u = prob.horizon, prob.model.n_u
    u_lo = np.tile(prob.u_min, T)
    u_hi = np.tile(prob.u_max, T)
    u, _ = solve_box_qp(qp, u_lo, u_hi)
    if u is None:
        return traj.states.copy(), traj.controls.copy(), False
    controls = np.clip(u, u_lo, u_hi).reshape(T, n_u)
    return rollout(prob.model, prob.initial_state, controls, prob.dt), controls, True


def multiplier_update(traj: TrajectoryIterate, prob: MpcProblem) -> tuple[np.ndarray, np.ndarray]:
    """``zeta += T(s, mu, gamma)`` and ``xi += R(s, lam, mu)`` at the iterate's values."""
    zeta = traj.zeta.copy()
    xi = traj.xi.copy()
    for (i, j, t), cert in traj.certs.items():
        t_res, r_res = residuals(prob, traj.states, cert, i, j, t)
        zeta[i, j, t] += t_res
        xi[i, j, t] += r_res
    return zeta, xi


def residual_sums(prev: TrajectoryIterate, new: TrajectoryIterate) -> tuple[float, float]:
    """Primal (multiplier change) and dual (certificate change) sums of squares."""
    primal = float(np.sum((new.zeta - prev.zeta) ** 2) + np.sum((new.xi - prev.xi) ** 2))
    dual = 0.0
    for key, c in new.certs.items():
        p = prev.certs[key]
        dual += float(np.sum((c.lam - p.lam) ** 2) + np.sum((c.mu - p.mu) ** 2))
    return primal, dual


def check_stopping(primal: float, dual: float, eps_pri: float, eps_dual: float) -> bool:
    return primal <= eps_pri and dual <= eps_dual


def solve_mpc(
    prob: MpcProblem,
    params: AdmmParams | None = None,
    warm_start: TrajectoryIterate | None = None,
) -> tuple[TrajectoryIterate, AdmmReport]:
    params = AdmmParams() if params is None else params
    eps_pri, eps_dual = params.tolerances(prob)
    traj = cold_start(prob) if warm_start is None else warm_start.copy()
    traj.iteration = 0
    report = AdmmReport()
    times = report.per_stage_wall_times
    best, best_primal = traj, np.inf

    for k in range(params.max_iters):
        t0 = time.perf_counter()
        certs, failed = dual_update(traj, prob, params)
        t1 = time.perf_counter()
        used = certs if params.gauss_seidel else traj.certs
        states, controls, ok = state_update(traj, prob, params, used)
        t2 = time.perf_counter()
        new = replace(traj, states=states, controls=controls, certs=certs, iteration=k + 1)
        new.zeta, new.xi = multiplier_update(new, prob)
        t3 = time.perf_counter()

        times["dual_update"].append(t1 - t0)
        times["state_update"].append(t2 - t1)
        times["multiplier_update"].append(t3 - t2)
        report.failed_cells += len(failed)
        report.qp_failures += not ok

        primal, dual = residual_sums(traj, new)
        report.primal_residual_history.append(primal)
        report.dual_residual_history.append(dual)
        report.iterations_run = k + 1
        traj = new
        if primal < best_primal:
            best, best_primal = new, primal
        if ok and check_stopping(primal, dual, eps_pri, eps_dual):
            report.converged = True
            return traj, report
    return best, report
