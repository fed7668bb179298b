"""Scenario files (YAML) and simulation traces (CSV)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import DynamicsModel, make_model
from .geometry import (
    BodyPolytope,
    GeometryError,
    HalfspacePolytope,
    ObstacleSet,
    RobotGeometry,
    make_box,
)


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    dimension: int
    model_name: str
    dt: float
    horizon: int
    robot: RobotGeometry
    obstacles: ObstacleSet
    initial_state: np.ndarray
    waypoints: np.ndarray
    duration: float
    state_min: np.ndarray
    state_max: np.ndarray
    control_min: np.ndarray
    control_max: np.ndarray
    q_state: np.ndarray
    q_control: np.ndarray
    sigma: float = 300.0
    eps_pri: float | None = None
    eps_dual: float | None = None
    max_iters: int = 100
    sensing_radius: float = math.inf
    goal_tolerance: float = 0.3
    safety_margin: float = 1.0
    max_time: float | None = None
    seed: int = 0
    model: DynamicsModel = field(init=False, repr=False)

    def __post_init__(self):
        self.model = make_model(self.model_name, self.dimension)
        if self.duration <= 0:
            raise ScenarioError("reference.duration must be positive")
        if self.max_time is None:
            self.max_time = self.duration + 5.0

    @property
    def goal(self) -> np.ndarray:
        return self.waypoints[-1]

    def reference_at(self, times) -> np.ndarray:
        """Reference states at the given times (seconds), holding the goal after the end."""
        return reference_states(self.model, self.waypoints, self.duration, np.asarray(times, dtype=float))


def reference_states(model: DynamicsModel, waypoints: np.ndarray, duration: float, times: np.ndarray) -> np.ndarray:
    """Constant-speed piecewise-linear path through ``waypoints`` over ``duration``."""
    seg = np.diff(waypoints, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    total = lengths.sum()
    out = np.zeros((times.size, model.n_s))
    if total <= 0:
        out[:, list(model.position_indices)] = waypoints[-1]
        return out
    speed = total / duration
    knots = np.concatenate([[0.0], np.cumsum(lengths)])
    arc = np.clip(times * speed, 0.0, total)
    pos = np.column_stack([np.interp(arc, knots, waypoints[:, k]) for k in range(waypoints.shape[1])])
    idx = np.clip(np.searchsorted(knots, arc, side="right") - 1, 0, len(seg) - 1)
    moving = (times * speed < total)[:, None]
    vel = np.where(moving, seg[idx] / np.maximum(lengths[idx], 1e-12)[:, None] * speed, 0.0)
    if model.name == "double_integrator":
        out[:, : model.d] = pos
        out[:, model.d :] = vel
    elif model.name == "unicycle":
        headings = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))
        out[:, :2] = pos
        out[:, 2] = headings[idx]
    else:
        raise ScenarioError(f"no reference builder for model {model.name!r}")
    return out


def _line_index(node, prefix=()) -> dict[tuple, int]:
    lines = {prefix: node.start_mark.line + 1}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            lines.update(_line_index(v, prefix + (k.value,)))
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            lines.update(_line_index(v, prefix + (i,)))
    return lines


class _Doc:
    def __init__(self, data: dict, lines: dict, source: str):
        self.data = data
        self.lines = lines
        self.source = source

    def error(self, path: tuple, msg: str) -> ScenarioError:
        line = None
        for k in range(len(path), -1, -1):
            line = self.lines.get(path[:k])
            if line is not None:
                break
        where = f"{self.source}:{line}" if line is not None else self.source
        return ScenarioError(f"{where}: field '{'.'.join(map(str, path))}': {msg}")

    def get(self, *path, default=KeyError):
        node = self.data
        for i, key in enumerate(path):
            if isinstance(node, dict) and key in node:
                node = node[key]
            elif isinstance(node, list) and isinstance(key, int) and key < len(node):
                node = node[key]
            else:
                if default is KeyError:
                    raise self.error(path[: i + 1], "missing")
                return default
        return node

    def number(self, *path, default=KeyError, positive=False) -> float:
        value = self.get(*path, default=default)
        if value is None:
            return value
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise self.error(path, f"expected a number, got {value!r}") from None
        if positive and not value > 0:
            raise self.error(path, "must be positive")
        return value

    def vector(self, *path, length=None, default=KeyError, fill=None) -> np.ndarray:
        value = self.get(*path, default=default)
        if value is None:
            return None
        if not isinstance(value, list):
            raise self.error(path, "expected a list")
        out = []
        for v in value:
            if v is None and fill is not None:
                out.append(fill)
                continue
            try:
                out.append(float(v))
            except (TypeError, ValueError):
                raise self.error(path, f"non-numeric entry {v!r}") from None
        if length is not None and len(out) != length:
            raise self.error(path, f"expected {length} entries, got {len(out)}")
        return np.array(out)


def _polytope(doc: _Doc, path: tuple, dim: int) -> HalfspacePolytope:
    spec = doc.get(*path)
    if not isinstance(spec, dict):
        raise doc.error(path, "expected a mapping with 'box' or 'halfspaces'")
    try:
        if "box" in spec:
            return make_box(
                doc.vector(*path, "box", "center", length=dim),
                doc.vector(*path, "box", "half_extents", length=dim),
            )
        if "halfspaces" in spec:
            rows = doc.get(*path, "halfspaces", "a")
            a = np.array([doc.vector(*path, "halfspaces", "a", r, length=dim) for r in range(len(rows))])
            b = doc.vector(*path, "halfspaces", "b", length=len(rows))
            return HalfspacePolytope(a, b)
    except GeometryError as exc:
        raise doc.error(path, str(exc)) from None
    raise doc.error(path, "expected 'box' or 'halfspaces'")


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ScenarioError(f"{where}: parse error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: expected a mapping at top level")
    doc = _Doc(data, _line_index(node), source)

    dim = int(doc.number("dimension", default=2))
    if dim not in (2, 3):
        raise doc.error(("dimension",), "must be 2 or 3")
    model_name = doc.get("model")
    try:
        model = make_model(model_name, dim)
    except ValueError as exc:
        raise doc.error(("model",), str(exc)) from None

    parts = doc.get("robot")
    if not isinstance(parts, list) or not parts:
        raise doc.error(("robot",), "expected a non-empty list of parts")
    bodies = []
    for i in range(len(parts)):
        poly = _polytope(doc, ("robot", i), dim)
        try:
            poly.validate(f"robot part {i}")
            bodies.append(BodyPolytope(poly))
        except GeometryError as exc:
            raise doc.error(("robot", i), str(exc)) from None

    obs_list = doc.get("obstacles", default=[]) or []
    obstacles = []
    for j in range(len(obs_list)):
        poly = _polytope(doc, ("obstacles", j), dim)
        try:
            poly.validate(f"obstacle {j}")
        except GeometryError as exc:
            raise doc.error(("obstacles", j), str(exc)) from None
        obstacles.append(poly)

    n_s, n_u = model.n_s, model.n_u
    wps = doc.get("reference", "waypoints")
    if not isinstance(wps, list) or len(wps) < 1:
        raise doc.error(("reference", "waypoints"), "expected a list of points")
    waypoints = np.array([doc.vector("reference", "waypoints", k, length=dim) for k in range(len(wps))])

    q_state = doc.vector("weights", "state", length=n_s, default=[1.0] * n_s)
    q_control = doc.vector("weights", "control", length=n_u, default=[0.1] * n_u)
    if np.any(q_state <= 0) or np.any(q_control <= 0):
        raise doc.error(("weights",), "weights must be positive")

    scn = Scenario(
        name=str(doc.get("name", default=Path(source).stem)),
        dimension=dim,
        model_name=model_name,
        dt=doc.number("dt", positive=True),
        horizon=int(doc.number("horizon", positive=True)),
        robot=RobotGeometry(tuple(bodies)),
        obstacles=ObstacleSet(tuple(obstacles)),
        initial_state=doc.vector("initial_state", length=n_s),
        waypoints=waypoints,
        duration=doc.number("reference", "duration", positive=True),
        state_min=doc.vector("bounds", "state_min", length=n_s, default=[None] * n_s, fill=-math.inf),
        state_max=doc.vector("bounds", "state_max", length=n_s, default=[None] * n_s, fill=math.inf),
        control_min=doc.vector("bounds", "control_min", length=n_u),
        control_max=doc.vector("bounds", "control_max", length=n_u),
        q_state=np.diag(q_state),
        q_control=np.diag(q_control),
        sigma=doc.number("solver", "sigma", default=300.0, positive=True),
        eps_pri=doc.number("solver", "eps_pri", default=None, positive=True),
        eps_dual=doc.number("solver", "eps_dual", default=None, positive=True),
        max_iters=int(doc.number("solver", "max_iters", default=100, positive=True)),
        sensing_radius=doc.number("sensing_radius", default=math.inf, positive=True),
        goal_tolerance=doc.number("goal_tolerance", default=0.3, positive=True),
        safety_margin=doc.number("safety_margin", default=1.0, positive=True),
        max_time=doc.number("max_time", default=None, positive=True),
        seed=int(doc.number("seed", default=0)),
    )
    if scn.safety_margin < 1.0:
        raise doc.error(("safety_margin",), "must be >= 1")
    if np.any(scn.control_min >= scn.control_max):
        raise doc.error(("bounds",), "control_min must be below control_max")
    if np.any(scn.state_min >= scn.state_max):
        raise doc.error(("bounds",), "state_min must be below state_max")
    return scn


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), str(path))


def scenario_to_dict(scn: Scenario) -> dict:
    """Plain-data form of a scenario (polytopes written as halfspaces)."""

    def poly(p: HalfspacePolytope) -> dict:
        return {"halfspaces": {"a": p.a_matrix.tolist(), "b": p.b_vector.tolist()}}

    def vec(v):
        return [None if not np.isfinite(x) else float(x) for x in v]

    return {
        "name": scn.name,
        "dimension": scn.dimension,
        "model": scn.model_name,
        "dt": scn.dt,
        "horizon": scn.horizon,
        "robot": [poly(b.poly) for b in scn.robot.parts],
        "obstacles": [poly(o) for o in scn.obstacles],
        "initial_state": vec(scn.initial_state),
        "reference": {"waypoints": scn.waypoints.tolist(), "duration": scn.duration},
        "bounds": {
            "state_min": vec(scn.state_min),
            "state_max": vec(scn.state_max),
            "control_min": vec(scn.control_min),
            "control_max": vec(scn.control_max),
        },
        "weights": {"state": np.diag(scn.q_state).tolist(), "control": np.diag(scn.q_control).tolist()},
        "solver": {"sigma": scn.sigma, "eps_pri": scn.eps_pri, "eps_dual": scn.eps_dual, "max_iters": scn.max_iters},
        "sensing_radius": None if math.isinf(scn.sensing_radius) else scn.sensing_radius,
        "goal_tolerance": scn.goal_tolerance,
        "safety_margin": scn.safety_margin,
        "max_time": scn.max_time,
        "seed": scn.seed,
    }


# --- traces -----------------------------------------------------------------


@dataclass
class TraceRecord:
    step: int
    time: float
    state: np.ndarray
    control: np.ndarray  # NaN for the terminal row
    cost: float
    min_scale: float
    admm_iters: int
    solve_us: int
    converged: bool = True


def trace_header(n_s: int, n_u: int) -> list[str]:
    return (
        ["step", "time"]
        + [f"state_{k}" for k in range(n_s)]
        + [f"control_{k}" for k in range(n_u)]
        + ["cost", "min_scale", "admm_iters", "solve_us", "converged"]
    )


def write_trace(path: str | Path, records: list[TraceRecord], n_s: int, n_u: int) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(n_s, n_u))
        for r in records:
            w.writerow(
                [r.step, repr(float(r.time))]
                + [repr(float(x)) for x in r.state]
                + [repr(float(x)) for x in r.control]
                + [repr(float(r.cost)), repr(float(r.min_scale)), r.admm_iters, r.solve_us, int(r.converged)]
            )


class TraceError(ValueError):
    pass


def read_trace(path: str | Path) -> tuple[list[TraceRecord], int, int]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TraceError(f"{path}: empty trace")
    header = rows[0]
    n_s = sum(h.startswith("state_") for h in header)
    n_u = sum(h.startswith("control_") for h in header)
    if header != trace_header(n_s, n_u):
        raise TraceError(f"{path}: unexpected header {header}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise TraceError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            vals = [float(x) for x in row]
        except ValueError as exc:
            raise TraceError(f"{path}:{lineno}: {exc}") from None
        records.append(
            TraceRecord(
                step=int(vals[0]),
                time=vals[1],
                state=np.array(vals[2 : 2 + n_s]),
                control=np.array(vals[2 + n_s : 2 + n_s + n_u]),
                cost=vals[2 + n_s + n_u],
                min_scale=vals[3 + n_s + n_u],
                admm_iters=int(vals[4 + n_s + n_u]),
                solve_us=int(vals[5 + n_s + n_u]),
                converged=bool(int(vals[6 + n_s + n_u])),
            )
        )
    return records, n_s, n_u
