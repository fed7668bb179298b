"""Seeded random scenarios and a small multi-run campaign."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .batch_solver import Backend
from .geometry import BodyPolytope, ObstacleSet, RobotGeometry, make_box
from .scenario import Scenario
from .sim import RunMetrics, VerificationReport, run_simulation, verify_records

ROBOT_HALF_EXTENTS = (0.3, 0.2)
MIN_PASSAGE = 0.7


def _box_distance(c1, h1, c2, h2) -> float:
    gap = np.maximum(np.abs(np.asarray(c1) - c2) - (np.asarray(h1) + h2), 0.0)
    return float(np.linalg.norm(gap))


def _polyline_clearance(center, half, path: np.ndarray) -> float:
    gap = np.maximum(np.abs(path - center) - half, 0.0)
    return float(np.linalg.norm(gap, axis=1).min())


def random_scenario(
    seed: int,
    n_obstacles: int = 8,
    length: float = 12.0,
    speed: float = 1.2,
    clearance: tuple[float, float] = (0.05, 0.8),
) -> Scenario:
    """Double-integrator run from ``(0, 0)`` to ``(length, 0)`` through two random waypoints.

    Boxes are placed beside the reference path at a random clearance, so the
    robot has to swerve when the clearance is below its own half-width. Every
    pair of boxes leaves a gap of at least ``MIN_PASSAGE``, which keeps the
    world passable.
    """
    rng = np.random.default_rng(seed)
    waypoints = np.array(
        [[0.0, 0.0], [length / 3, rng.uniform(-1.5, 1.5)], [2 * length / 3, rng.uniform(-1.5, 1.5)], [length, 0.0]]
    )
    dense = np.concatenate(
        [np.linspace(waypoints[k], waypoints[k + 1], 200, endpoint=False) for k in range(3)] + [waypoints[-1:]]
    )
    total = float(np.sum(np.linalg.norm(np.diff(waypoints, axis=0), axis=1)))
    boxes: list[tuple[np.ndarray, np.ndarray]] = []
    attempts = 0
    while len(boxes) < n_obstacles:
        attempts += 1
        if attempts > 10000:
            raise RuntimeError(f"seed {seed}: could not place {n_obstacles} obstacles")
        half = rng.uniform(0.2, 0.6, size=2)
        k = rng.integers(int(0.1 * len(dense)), int(0.9 * len(dense)))
        p = dense[k]
        tangent = dense[min(k + 1, len(dense) - 1)] - dense[max(k - 1, 0)]
        normal = np.array([-tangent[1], tangent[0]]) / np.linalg.norm(tangent)
        side = rng.choice([-1.0, 1.0])
        want = rng.uniform(*clearance)
        # push out along the normal until the box sits ``want`` away from the path
        center = p.copy()
        for r in np.linspace(0.0, 3.0, 301):
            center = p + side * normal * r
            if _polyline_clearance(center, half, dense) >= want:
                break
        else:
            continue
        if np.linalg.norm(center - waypoints[0]) < 1.5 or np.linalg.norm(center - waypoints[-1]) < 1.5:
            continue
        if any(_box_distance(center, half, c, h) < MIN_PASSAGE for c, h in boxes):
            continue
        boxes.append((center, half))

    inf = math.inf
    return Scenario(
        name=f"random_{seed}",
        dimension=2,
        model_name="double_integrator",
        dt=0.1,
        horizon=16,
        robot=RobotGeometry((BodyPolytope(make_box([0.0, 0.0], ROBOT_HALF_EXTENTS)),)),
        obstacles=ObstacleSet(tuple(make_box(c, h) for c, h in boxes)),
        initial_state=np.zeros(4),
        waypoints=waypoints,
        duration=total / speed,
        state_min=np.array([-inf, -inf, -3.0, -3.0]),
        state_max=np.array([inf, inf, 3.0, 3.0]),
        control_min=np.array([-5.0, -5.0]),
        control_max=np.array([5.0, 5.0]),
        q_state=np.diag([10.0, 10.0, 1.0, 1.0]),
        q_control=np.diag([0.1, 0.1]),
        sigma=300.0,
        sensing_radius=5.0,
        goal_tolerance=0.3,
        safety_margin=1.1,
        max_time=total / speed + 5.0,
        seed=seed,
    )


@dataclass
class CampaignRun:
    seed: int
    metrics: RunMetrics
    verification: VerificationReport


@dataclass
class CampaignSummary:
    runs: list[CampaignRun]

    @property
    def success_rate(self) -> float:
        return sum(r.metrics.success for r in self.runs) / max(len(self.runs), 1)

    @property
    def verified_collisions_among_successes(self) -> int:
        return sum(1 for r in self.runs if r.metrics.success and not r.verification.ok)


def run_campaign(seeds, backend: Backend | None = None, **scenario_kwargs) -> CampaignSummary:
    runs = []
    for seed in seeds:
        scn = random_scenario(seed, **scenario_kwargs)
        metrics, records = run_simulation(scn, backend)
        runs.append(CampaignRun(seed, metrics, verify_records(records, scn)))
    return CampaignSummary(runs)
