"""Receding-horizon simulation, post-hoc trace verification and benchmarks."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .admm_mpc import AdmmParams, MpcProblem, TrajectoryIterate, cold_start, dual_update, shift_iterate, solve_mpc
from .batch_solver import Backend
from .collision_lp import ScaleStatus, min_scale_at_pose
from .geometry import BodyPolytope, HalfspacePolytope, ObstacleSet, RobotGeometry, make_box
from .scenario import Scenario, TraceRecord, read_trace, write_trace

log = logging.getLogger(__name__)

COLLISION_TOL = 1e-6


@dataclass
class RunMetrics:
    success: bool
    navigation_time: float
    navigation_cost: float
    min_scale_overall: float
    per_step_solve_times: list[float] = field(default_factory=list)
    steps: int = 0
    collision_step: int | None = None
    goal_reached: bool = False
    nonconverged_steps: int = 0


def pair_scales(robot: RobotGeometry, obstacles, pose) -> list[tuple[int, int, float]]:
    """Primal scale LP for every (part, obstacle) pair at one pose."""
    out = []
    for i, part in enumerate(robot.parts):
        for j, obs in enumerate(obstacles):
            res = min_scale_at_pose(part, obs, pose)
            alpha = res.alpha_star if res.status is ScaleStatus.OPTIMAL else math.inf
            out.append((i, j, alpha))
    return out


def min_scale_of(robot: RobotGeometry, obstacles, pose) -> float:
    return min((a for _, _, a in pair_scales(robot, obstacles, pose)), default=math.inf)


def inflate(robot: RobotGeometry, factor: float) -> RobotGeometry:
    """Scale every part about its body origin (planning-only safety margin)."""
    if factor == 1.0:
        return robot
    return RobotGeometry(
        tuple(BodyPolytope(HalfspacePolytope(p.poly.a_matrix, p.poly.b_vector * factor)) for p in robot.parts)
    )


def _obstacle_extent(obs: HalfspacePolytope) -> tuple[np.ndarray, float]:
    v = obs.vertices()
    c = v.mean(axis=0)
    return c, float(np.linalg.norm(v - c, axis=1).max())


def sensed_obstacles(scn: Scenario, position: np.ndarray, extents) -> tuple[ObstacleSet, tuple[int, ...]]:
    ids = tuple(
        j for j, (c, r) in enumerate(extents) if np.linalg.norm(c - position) - r <= scn.sensing_radius
    )
    return ObstacleSet(tuple(scn.obstacles[j] for j in ids)), ids


def build_problem(scn: Scenario, state, step: int, obstacles: ObstacleSet, ids, robot=None) -> MpcProblem:
    times = (step + np.arange(scn.horizon + 1)) * scn.dt
    return MpcProblem(
        horizon=scn.horizon,
        dt=scn.dt,
        q_s=scn.q_state,
        q_u=scn.q_control,
        s_min=scn.state_min,
        s_max=scn.state_max,
        u_min=scn.control_min,
        u_max=scn.control_max,
        reference=scn.reference_at(times),
        robot=inflate(scn.robot, scn.safety_margin) if robot is None else robot,
        obstacles=obstacles,
        model=scn.model,
        initial_state=np.asarray(state, dtype=float),
        obstacle_ids=tuple(ids),
    )


def admm_params(scn: Scenario, backend: Backend | None = None, sigma: float | None = None) -> AdmmParams:
    return AdmmParams(
        sigma=scn.sigma if sigma is None else sigma,
        eps_pri=scn.eps_pri,
        eps_dual=scn.eps_dual,
        max_iters=scn.max_iters,
        backend=Backend.serial() if backend is None else backend,
    )


def stage_cost(scn: Scenario, state, control, ref) -> float:
    e = scn.model.state_error(state, ref)
    c = float(e @ scn.q_state @ e)
    if control is not None:
        c += float(control @ scn.q_control @ control)
    return c


def run_simulation(
    scn: Scenario,
    backend: Backend | None = None,
    sigma: float | None = None,
    trace_path: str | Path | None = None,
) -> tuple[RunMetrics, list[TraceRecord]]:
    model = scn.model
    params = admm_params(scn, backend, sigma)
    robot_plan = inflate(scn.robot, scn.safety_margin)
    extents = [_obstacle_extent(o) for o in scn.obstacles]
    n_steps = int(math.ceil(scn.max_time / scn.dt - 1e-9))
    state = np.asarray(scn.initial_state, dtype=float).copy()
    records: list[TraceRecord] = []
    metrics = RunMetrics(False, 0.0, 0.0, math.inf)
    prev: TrajectoryIterate | None = None

    for k in range(n_steps + 1):
        t_now = k * scn.dt
        scale_now = min_scale_of(scn.robot, scn.obstacles, model.pose_of(state))
        metrics.min_scale_overall = min(metrics.min_scale_overall, scale_now)
        ref_now = scn.reference_at([t_now])[0]
        done = None
        if scale_now < 1.0 - COLLISION_TOL:
            metrics.collision_step = k
            done = "collision"
        elif np.linalg.norm(model.position(state) - scn.goal) <= scn.goal_tolerance:
            metrics.goal_reached = True
            done = "goal"
        elif k == n_steps:
            done = "timeout"
        if done:
            cost = stage_cost(scn, state, None, ref_now)
            metrics.navigation_cost += cost
            records.append(
                TraceRecord(k, t_now, state.copy(), np.full(model.n_u, np.nan), cost, scale_now, 0, 0, True)
            )
            log.info("step %d: %s", k, done)
            break

        obstacles, ids = sensed_obstacles(scn, model.position(state), extents)
        prob = build_problem(scn, state, k, obstacles, ids, robot_plan)
        warm = shift_iterate(prev, prob) if prev is not None else None
        t0 = time.perf_counter()
        traj, report = solve_mpc(prob, params, warm)
        solve_time = time.perf_counter() - t0
        metrics.per_step_solve_times.append(solve_time)
        metrics.nonconverged_steps += not report.converged
        u = traj.controls[0].copy()
        cost = stage_cost(scn, state, u, ref_now)
        metrics.navigation_cost += cost
        records.append(
            TraceRecord(
                k, t_now, state.copy(), u, cost, scale_now, report.iterations_run, round(solve_time * 1e6), report.converged
            )
        )
        prev = traj
        state = model.step(state, u, scn.dt)

    metrics.steps = len(records) - 1
    metrics.navigation_time = records[-1].time
    metrics.success = metrics.goal_reached and metrics.collision_step is None
    if trace_path is not None:
        write_trace(trace_path, records, model.n_s, model.n_u)
    return metrics, records


@dataclass
class VerificationReport:
    min_scale: float
    violations: list[tuple[int, int, int, float]]
    pairs_checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


class VerificationError(ValueError):
    pass


def verify_records(records: list[TraceRecord], scn: Scenario, tol: float = COLLISION_TOL) -> VerificationReport:
    """Recompute the primal scale LP for every (step, part, obstacle)."""
    min_scale = math.inf
    violations = []
    checked = 0
    for rec in records:
        if rec.state.size != scn.model.n_s:
            raise VerificationError(f"step {rec.step}: state has {rec.state.size} entries, model needs {scn.model.n_s}")
        pose = scn.model.pose_of(rec.state)
        for i, j, alpha in pair_scales(scn.robot, scn.obstacles, pose):
            checked += 1
            min_scale = min(min_scale, alpha)
            if alpha < 1.0 - tol:
                violations.append((rec.step, i, j, alpha))
    return VerificationReport(min_scale, violations, checked)


def verify_trace(trace_path: str | Path, scn: Scenario, tol: float = COLLISION_TOL) -> VerificationReport:
    records, n_s, n_u = read_trace(trace_path)
    if n_s != scn.model.n_s or n_u != scn.model.n_u:
        raise VerificationError(
            f"trace has {n_s} states/{n_u} controls, scenario model needs {scn.model.n_s}/{scn.model.n_u}"
        )
    return verify_records(records, scn, tol)


def synthetic_obstacles(scn: Scenario, n_cells: int, rng: np.random.Generator) -> ObstacleSet:
    """Random boxes around the start so that ``N * M * T >= n_cells``."""
    per_obstacle = len(scn.robot) * scn.horizon
    m = max(1, math.ceil(n_cells / per_obstacle))
    start = scn.model.position(scn.initial_state)
    boxes = []
    for _ in range(m):
        center = start + rng.uniform(-4.0, 4.0, size=scn.dimension)
        boxes.append(make_box(center, rng.uniform(0.2, 0.8, size=scn.dimension)))
    return ObstacleSet(tuple(boxes))


def frozen_iterate(scn: Scenario, n_cells: int | None = None) -> tuple[MpcProblem, TrajectoryIterate, AdmmParams]:
    """A fixed problem/iterate pair for timing the certificate update in isolation."""
    rng = np.random.default_rng(scn.seed)
    obstacles = scn.obstacles if n_cells is None else synthetic_obstacles(scn, n_cells, rng)
    prob = build_problem(scn, scn.initial_state, 0, obstacles, range(len(obstacles)))
    traj = cold_start(prob)
    traj.zeta = rng.normal(scale=0.1, size=traj.zeta.shape)
    traj.xi = rng.normal(scale=0.1, size=traj.xi.shape)
    return prob, traj, admm_params(scn)


def run_benchmark(
    scn: Scenario, worker_counts: list[int], reps: int = 10, n_cells: int | None = None
) -> list[dict]:
    """Median wall time of the certificate update for each worker count."""
    prob, traj, params = frozen_iterate(scn, n_cells)
    n_cells_actual = len(prob.cells())
    n_max = max(
        (p.poly.n_rows + o.n_rows for p in prob.robot.parts for o in prob.obstacles), default=0
    )
    dual_update(traj, prob, params, Backend.serial())  # JIT warm-up
    medians = {}
    for w in worker_counts:
        backend = Backend.serial() if w == 1 else Backend.parallel(w)
        samples = []
        for _ in range(reps):
            t0 = time.perf_counter()
            dual_update(traj, prob, params, backend)
            samples.append(time.perf_counter() - t0)
        medians[w] = float(np.median(samples))
    base = medians.get(1)
    if base is None:
        samples = []
        for _ in range(reps):
            t0 = time.perf_counter()
            dual_update(traj, prob, params, Backend.serial())
            samples.append(time.perf_counter() - t0)
        base = float(np.median(samples))
    return [
        {
            "workers": w,
            "NMT": n_cells_actual,
            "n_max": n_max,
            "median_us": round(medians[w] * 1e6),
            "speedup_vs_serial": base / medians[w],
        }
        for w in worker_counts
    ]


def plot_run(scn: Scenario, records: list[TraceRecord], path: str | Path) -> None:
    """Write a static SVG/PNG of the executed path against obstacles and reference."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Polygon

    fig, ax = plt.subplots(figsize=(7, 4))
    for obs in scn.obstacles:
        v = obs.vertices()
        if len(v) >= 3:
            order = np.argsort(np.arctan2(*(v - v.mean(0)).T[::-1]))
            ax.add_patch(Polygon(v[order, :2], closed=True, color="0.6"))
    ref = scn.reference_at(np.linspace(0, scn.duration, 200))
    pos = scn.model.position(ref)
    ax.plot(pos[:, 0], pos[:, 1], "--", color="tab:blue", label="reference")
    path_xy = np.array([scn.model.position(r.state) for r in records])
    ax.plot(path_xy[:, 0], path_xy[:, 1], color="tab:red", label="executed")
    ax.set_aspect("equal")
    ax.legend(loc="best")
    ax.set_title(scn.name)
    fig.savefig(path)
    plt.close(fig)
