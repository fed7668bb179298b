import math
from dataclasses import replace

import numpy as np
import pytest
import yaml

from polyadmm.batch_solver import Backend
from polyadmm.campaign import MIN_PASSAGE, random_scenario
from polyadmm.geometry import ObstacleSet, make_box
from polyadmm.scenario import (
    ScenarioError,
    TraceError,
    load_scenario,
    parse_scenario,
    read_trace,
    scenario_to_dict,
    write_trace,
)
from polyadmm.sim import (
    VerificationError,
    inflate,
    run_benchmark,
    run_simulation,
    verify_records,
    verify_trace,
)

from .conftest import SCENARIOS, dense_lq_oracle

MINIMAL = """
model: double_integrator
dt: 0.1
horizon: 4
robot:
  - box: {center: [0, 0], half_extents: [0.3, 0.2]}
initial_state: [0, 0, 0, 0]
reference: {waypoints: [[0, 0], [1, 0]], duration: 1.0}
bounds: {control_min: [-1, -1], control_max: [1, 1]}
"""


@pytest.fixture(scope="module")
def corridor_run(tmp_path_factory):
    scn = load_scenario(SCENARIOS / "corridor.yaml")
    path = tmp_path_factory.mktemp("corridor") / "trace.csv"
    metrics, records = run_simulation(scn, trace_path=path)
    return scn, metrics, records, path


# -- loading ------------------------------------------------------------------


def test_minimal_file_has_no_obstacles():
    scn = parse_scenario(MINIMAL)
    assert len(scn.obstacles) == 0 and len(scn.robot) == 1
    assert math.isinf(scn.sensing_radius)
    assert scn.max_time == pytest.approx(6.0)


def test_corridor_fixture_values():
    scn = load_scenario(SCENARIOS / "corridor.yaml")
    assert len(scn.robot) == 1 and len(scn.obstacles) == 2
    assert scn.horizon == 16 and scn.dt == 0.1


def test_unbounded_obstacle_is_named():
    text = MINIMAL + """
obstacles:
  - box: {center: [3, 0], half_extents: [0.5, 0.5]}
  - halfspaces: {a: [[1, 0], [0, 1], [-1, 1]], b: [1, 1, 1]}
"""
    with pytest.raises(ScenarioError, match="obstacle 1"):
        parse_scenario(text, "bad.yaml")


def test_parse_error_reports_line():
    with pytest.raises(ScenarioError, match=r"bad.yaml:\d+"):
        parse_scenario("model: double_integrator\nrobot: [\n  - {", "bad.yaml")


def test_field_errors_name_the_field():
    with pytest.raises(ScenarioError, match="dt"):
        parse_scenario(MINIMAL.replace("dt: 0.1", "dt: -0.1"))
    with pytest.raises(ScenarioError, match="initial_state"):
        parse_scenario(MINIMAL.replace("initial_state: [0, 0, 0, 0]", "initial_state: [0, 0]"))
    with pytest.raises(ScenarioError, match="model"):
        parse_scenario(MINIMAL.replace("double_integrator", "bicycle"))


def test_reference_is_piecewise_linear():
    scn = parse_scenario(MINIMAL.replace("[[0, 0], [1, 0]]", "[[0, 0], [1, 0], [1, 1]]").replace("1.0}", "2.0}"))
    ref = scn.reference_at([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    np.testing.assert_allclose(ref[:, :2], [[0, 0], [0.5, 0], [1, 0], [1, 0.5], [1, 1], [1, 1]], atol=1e-12)


def test_scenario_dict_round_trip():
    scn = load_scenario(SCENARIOS / "corridor.yaml")
    again = parse_scenario(yaml.safe_dump(scenario_to_dict(scn)))
    assert scenario_to_dict(again) == scenario_to_dict(scn)


# -- traces -------------------------------------------------------------------


def test_trace_round_trip(corridor_run, tmp_path):
    scn, _, records, path = corridor_run
    loaded, n_s, n_u = read_trace(path)
    assert (n_s, n_u) == (4, 2)
    copy = tmp_path / "copy.csv"
    write_trace(copy, loaded, n_s, n_u)
    assert copy.read_bytes() == path.read_bytes()
    for a, b in zip(records, loaded):
        assert a.step == b.step and a.time == b.time and a.cost == b.cost
        np.testing.assert_array_equal(a.state, b.state)
        np.testing.assert_array_equal(a.control, b.control)


def test_malformed_trace(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("step,time\n")
    with pytest.raises(TraceError):
        read_trace(path)


# -- simulation ---------------------------------------------------------------


def test_corridor_run_is_safe(corridor_run):
    scn, metrics, _, path = corridor_run
    assert metrics.success
    assert metrics.min_scale_overall >= 0.99
    report = verify_trace(path, scn)
    assert report.ok and report.min_scale >= 0.99
    assert report.pairs_checked == 2 * (metrics.steps + 1)


def test_planted_fault_is_found(corridor_run, tmp_path):
    scn, _, records, _ = corridor_run
    bad = [replace(r) for r in records]
    bad[10] = replace(bad[10], state=np.array([3.0, 0.95, 0.0, 0.0]))
    path = tmp_path / "bad.csv"
    write_trace(path, bad, 4, 2)
    report = verify_trace(path, scn)
    assert [v[0] for v in report.violations] == [10]
    assert report.violations[0][2] == 0


def test_trace_scenario_mismatch(corridor_run):
    _, _, _, path = corridor_run
    with pytest.raises(VerificationError):
        verify_trace(path, load_scenario(SCENARIOS / "unicycle_slalom.yaml"))


def test_empty_world_matches_open_loop_lq():
    scn = load_scenario(SCENARIOS / "empty.yaml")
    metrics, records = run_simulation(scn)
    assert metrics.success
    k = metrics.steps
    ref = scn.reference_at(np.arange(k + 1) * scn.dt)
    _, _, lq = dense_lq_oracle(scn.model, scn.initial_state, ref, scn.q_state, scn.q_control, scn.dt, k)
    assert abs(metrics.navigation_cost - lq) <= 0.05 * lq
    report = verify_records(records, scn)
    assert report.ok and report.pairs_checked == 0 and math.isinf(report.min_scale)


def test_obstacle_on_start_collides_immediately():
    scn = load_scenario(SCENARIOS / "corridor.yaml")
    scn = replace(scn, obstacles=ObstacleSet((make_box([0.1, 0.0], [0.5, 0.5]),)))
    metrics, records = run_simulation(scn)
    assert not metrics.success and metrics.collision_step == 0
    assert len(records) == 1


def test_runs_are_deterministic_across_backends():
    scn = replace(load_scenario(SCENARIOS / "corridor.yaml"), max_time=2.0)
    runs = [run_simulation(scn, b)[1] for b in (Backend.serial(), Backend.serial(), Backend.parallel(3))]
    for other in runs[1:]:
        assert len(other) == len(runs[0])
        for a, b in zip(runs[0], other):
            np.testing.assert_array_equal(a.state, b.state)
            np.testing.assert_array_equal(a.control, b.control)
            assert (a.cost, a.min_scale, a.admm_iters, a.converged) == (b.cost, b.min_scale, b.admm_iters, b.converged)


def test_unicycle_fixture_succeeds():
    scn = load_scenario(SCENARIOS / "unicycle_slalom.yaml")
    metrics, records = run_simulation(scn)
    assert metrics.success
    assert verify_records(records, scn).ok


def test_inflate_scales_about_origin():
    scn = load_scenario(SCENARIOS / "corridor.yaml")
    big = inflate(scn.robot, 1.5)
    np.testing.assert_array_equal(big.parts[0].poly.b_vector, 1.5 * scn.robot.parts[0].poly.b_vector)
    assert inflate(scn.robot, 1.0) is scn.robot


# -- benchmark harness ----------------------------------------------------------


def test_benchmark_single_worker_is_unit_speedup():
    scn = load_scenario(SCENARIOS / "corridor.yaml")
    (rec,) = run_benchmark(scn, [1], reps=3, n_cells=64)
    assert rec["speedup_vs_serial"] == 1.0
    assert rec["NMT"] >= 64 and rec["n_max"] == 8
    assert set(rec) == {"workers", "NMT", "n_max", "median_us", "speedup_vs_serial"}


# -- randomized scenarios ---------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_random_scenarios_are_well_formed(seed):
    scn = random_scenario(seed)
    assert len(scn.obstacles) == 8 and scn.horizon == 16 and scn.dt == 0.1
    robot_half = np.array([0.3, 0.2])
    boxes = [(o.vertices().mean(0), o.vertices().max(0) - o.vertices().mean(0)) for o in scn.obstacles]
    start, goal = scn.model.position(scn.initial_state), scn.goal
    for c, h in boxes:
        gap = np.maximum(np.abs(c - start) - h - robot_half, 0)
        assert np.linalg.norm(gap) > 0  # start is free
        assert np.linalg.norm(np.maximum(np.abs(c - goal) - h, 0)) > 1.0
    for a in range(len(boxes)):
        for b in range(a + 1, len(boxes)):
            (c1, h1), (c2, h2) = boxes[a], boxes[b]
            assert np.linalg.norm(np.maximum(np.abs(c1 - c2) - h1 - h2, 0)) >= MIN_PASSAGE - 1e-9
    again = random_scenario(seed)
    assert scenario_to_dict(again) == scenario_to_dict(scn)
