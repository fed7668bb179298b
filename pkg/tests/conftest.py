from __future__ import annotations

from pathlib import Path

import numba
import numpy as np
import pytest

from polyadmm.dual_subproblem import LcpProblem, build_subproblem
from polyadmm.geometry import BodyPolytope, HalfspacePolytope, Pose, make_box, rotation_2d

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS


def random_polytope(rng: np.random.Generator, dim: int, center=None, n_rows: int | None = None) -> HalfspacePolytope:
    """Random bounded polytope around ``center`` (the origin lies inside when center is None)."""
    center = np.zeros(dim) if center is None else np.asarray(center, float)
    while True:
        k = n_rows if n_rows is not None else int(rng.integers(dim + 1, 2 * dim + 4))
        a = rng.normal(size=(k, dim))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b = rng.uniform(0.3, 1.5, size=k)
        poly = HalfspacePolytope(a, b + a @ center)
        if poly.is_bounded():
            return poly


def random_body(rng: np.random.Generator, dim: int, n_rows: int | None = None) -> BodyPolytope:
    return BodyPolytope(random_polytope(rng, dim, None, n_rows))


def random_pose(rng: np.random.Generator, dim: int) -> Pose:
    if dim == 2:
        rot = rotation_2d(rng.uniform(-np.pi, np.pi))
    else:
        q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        rot = q * np.sign(np.linalg.det(q))
    return Pose(rot, rng.uniform(-2.0, 2.0, size=dim))


def random_subproblem(rng: np.random.Generator, dim: int = 2):
    body = random_body(rng, dim, int(rng.integers(dim + 1, 6)))
    obstacle = random_polytope(rng, dim, rng.uniform(-3, 3, size=dim), int(rng.integers(dim + 1, 6)))
    pose = random_pose(rng, dim)
    sub = build_subproblem(body, obstacle, pose, rng.normal(scale=0.5), rng.normal(scale=0.5, size=dim))
    return sub, body, obstacle, pose


def random_qp_lcp(rng: np.random.Generator, n_x: int, n_c: int) -> tuple[LcpProblem, np.ndarray, np.ndarray]:
    """LCP of ``min 0.5 x'Hx + c'x  s.t.  Gx <= h, x >= 0`` with ``h > 0``; returns (lcp, H, c)."""
    g = rng.normal(size=(n_x, n_x))
    hess = g @ g.T + 0.05 * np.eye(n_x)
    c = rng.normal(size=n_x)
    gmat = rng.normal(size=(n_c, n_x))
    h = rng.uniform(0.1, 2.0, size=n_c)
    n = n_x + n_c
    m = np.zeros((n, n))
    m[:n_x, :n_x] = hess
    m[:n_x, n_x:] = gmat.T
    m[n_x:, :n_x] = -gmat
    return LcpProblem(m, np.concatenate([c, h])), hess, c


def box_pair(rng: np.random.Generator):
    robot = make_box(np.zeros(2), rng.uniform(0.2, 1.5, size=2))
    obstacle = make_box(rng.uniform(-3, 3, size=2), rng.uniform(0.2, 1.5, size=2))
    return robot, obstacle


@numba.njit(cache=True)
def _project_weighted_simplex(v, w):
    # argmin |x - v|  s.t.  x >= 0, w'x = 1, with w > 0
    lo = np.min((v - 1.0) / w) - 1.0
    hi = np.max(v / w) + 1.0
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        s = 0.0
        for k in range(v.size):
            x = v[k] - tau * w[k]
            if x > 0.0:
                s += w[k] * x
        if s > 1.0:
            lo = tau
        else:
            hi = tau
    tau = 0.5 * (lo + hi)
    return np.maximum(v - tau * w, 0.0)


@numba.njit(cache=True)
def _fista(k, bvec, weights, n_r, iters):
    n = k.shape[0]
    hess = k @ k.T
    lip = np.linalg.eigvalsh(hess).max() + 1e-12
    lin = k @ bvec
    y = np.zeros(n)
    y[:n_r] = 1.0 / weights.sum()
    z = y.copy()
    t = 1.0
    for _ in range(iters):
        g = hess @ z + lin
        v = z - g / lip
        y_new = np.empty(n)
        y_new[:n_r] = _project_weighted_simplex(v[:n_r], weights)
        y_new[n_r:] = np.maximum(v[n_r:], 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = y_new + ((t - 1.0) / t_new) * (y_new - y)
        y = y_new
        t = t_new
    return y


def projected_gradient_oracle(sub, iters: int = 100_000) -> np.ndarray:
    """Accelerated projected gradient on ``0.5|K'y + b|^2`` over ``{y >= 0, kappa'y = 1}``."""
    weights = np.ascontiguousarray(sub.kappa[: sub.n_r])
    return _fista(np.ascontiguousarray(sub.k_matrix), np.ascontiguousarray(sub.b_vec), weights, sub.n_r, iters)


def dense_lq_oracle(model, x0, reference, q_s, q_u, dt, horizon):
    """Equality-constrained LQ tracking solved through one dense KKT system.

    Variables are ``(s_1..s_T, u_0..u_{T-1})``; dynamics are linear so the
    Jacobians at any point define them exactly.
    """
    lin = model.linearize(np.zeros(model.n_s), np.zeros(model.n_u), dt)
    a, b, c = lin.a_jac, lin.b_jac, lin.c_const
    n_s, n_u, T = model.n_s, model.n_u, horizon
    nv = T * n_s + T * n_u
    hess = np.zeros((nv, nv))
    grad = np.zeros(nv)
    for t in range(1, T + 1):
        sl = slice((t - 1) * n_s, t * n_s)
        hess[sl, sl] += 2 * q_s
        grad[sl] += -2 * q_s @ reference[t]
    for t in range(T):
        sl = slice(T * n_s + t * n_u, T * n_s + (t + 1) * n_u)
        hess[sl, sl] += 2 * q_u
    eq = np.zeros((T * n_s, nv))
    rhs = np.zeros(T * n_s)
    for t in range(T):
        row = slice(t * n_s, (t + 1) * n_s)
        eq[row, t * n_s : (t + 1) * n_s] = np.eye(n_s)
        eq[row, T * n_s + t * n_u : T * n_s + (t + 1) * n_u] = -b
        if t == 0:
            rhs[row] = a @ x0 + c
        else:
            eq[row, (t - 1) * n_s : t * n_s] = -a
            rhs[row] = c
    kkt = np.block([[hess, eq.T], [eq, np.zeros((T * n_s, T * n_s))]])
    sol = np.linalg.solve(kkt, np.concatenate([-grad, rhs]))
    states = np.vstack([x0, sol[: T * n_s].reshape(T, n_s)])
    controls = sol[T * n_s : nv].reshape(T, n_u)
    e = states - reference
    cost = float(np.einsum("ti,ij,tj->", e, q_s, e) + np.einsum("ti,ij,tj->", controls, q_u, controls))
    return states, controls, cost


def grid_overlap(p: HalfspacePolytope, q: HalfspacePolytope, resolution: float = 1e-3) -> bool:
    """Brute-force intersection test on a dense grid over the common bounding box."""
    vp, vq = p.vertices(), q.vertices()
    lo = np.maximum(vp.min(0), vq.min(0))
    hi = np.minimum(vp.max(0), vq.max(0))
    if np.any(lo > hi):
        return False
    n = int(round(1.0 / resolution)) + 1
    axes = [np.linspace(lo[k], hi[k], n) for k in range(p.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p.dim)
    inside = np.all(pts @ p.a_matrix.T <= p.b_vector + 1e-12, axis=1)
    inside &= np.all(pts @ q.a_matrix.T <= q.b_vector + 1e-12, axis=1)
    return bool(inside.any())


def random_box_pair_posed(rng: np.random.Generator):
    """Rotated robot box about the origin and an axis-aligned obstacle box (2D)."""
    body = BodyPolytope(make_box(np.zeros(2), rng.uniform(0.2, 1.5, size=2)))
    pose = Pose(rotation_2d(rng.uniform(-np.pi, np.pi)), np.zeros(2))
    obstacle = make_box(rng.uniform(-3, 3, size=2), rng.uniform(0.2, 1.5, size=2))
    return body, pose, obstacle


def _central_difference(fn, x, h=1e-6):
    x = np.asarray(x, float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def jacobian_errors(model, s, u, dt=0.1) -> dict[str, float]:
    """Largest elementwise gap between analytic Jacobians and central differences."""
    lin = model.linearize(s, u, dt)
    pose = model.linearize_pose(s)
    fd_a = _central_difference(lambda x: model.step(x, u, dt), s)
    fd_b = _central_difference(lambda v: model.step(s, v, dt), u)
    fd_rot = _central_difference(lambda x: model.pose_of(x).rotation, s)
    fd_trans = _central_difference(lambda x: model.pose_of(x).translation, s)
    return {
        "a_jac": float(np.abs(lin.a_jac - fd_a).max()),
        "b_jac": float(np.abs(lin.b_jac - fd_b).max()),
        "rot_jac": float(np.abs(pose.rot_jac - fd_rot).max()),
        "trans_jac": float(np.abs(pose.trans_jac - fd_trans).max()),
    }


def random_state_control(model, rng):
    s = rng.uniform(-3, 3, size=model.n_s)
    u = rng.uniform(-2, 2, size=model.n_u)
    return s, u


def make_problem(
    obstacles=(),
    horizon: int = 8,
    dt: float = 0.1,
    initial_state=(0.0, -0.3, 0.0, 0.0),
    speed: float = 1.0,
    u_bound: float = 5.0,
    v_bound: float = np.inf,
    robot_half=(0.3, 0.2),
):
    """Double-integrator problem tracking a straight line along the x axis."""
    from polyadmm.admm_mpc import MpcProblem
    from polyadmm.dynamics import DoubleIntegrator
    from polyadmm.geometry import ObstacleSet, RobotGeometry

    model = DoubleIntegrator(2)
    t = np.arange(horizon + 1) * dt
    ref = np.zeros((horizon + 1, 4))
    ref[:, 0] = speed * t
    ref[:, 2] = speed
    return MpcProblem(
        horizon=horizon,
        dt=dt,
        q_s=np.diag([10.0, 10.0, 1.0, 1.0]),
        q_u=np.diag([0.1, 0.1]),
        s_min=np.array([-np.inf, -np.inf, -v_bound, -v_bound]),
        s_max=np.array([np.inf, np.inf, v_bound, v_bound]),
        u_min=-u_bound * np.ones(2),
        u_max=u_bound * np.ones(2),
        reference=ref,
        robot=RobotGeometry((BodyPolytope(make_box([0, 0], robot_half)),)),
        obstacles=ObstacleSet(tuple(obstacles)),
        model=model,
        initial_state=np.asarray(initial_state, float),
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
