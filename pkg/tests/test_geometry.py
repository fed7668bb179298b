import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyadmm.geometry import (
    BodyPolytope,
    GeometryError,
    HalfspacePolytope,
    ObstacleSet,
    Pose,
    RobotGeometry,
    contains,
    make_box,
    rotation_2d,
    transform_polytope,
)

from .conftest import random_body, random_pose


def _same_vertex_set(u, v, tol=1e-9):
    if len(u) != len(v):
        return False
    return all(np.min(np.linalg.norm(v - p, axis=1)) <= tol for p in u)


def test_identity_pose_keeps_box():
    box = make_box([0, 0], [1, 1])
    out = transform_polytope(BodyPolytope(box), Pose.identity(2))
    np.testing.assert_array_equal(out.a_matrix, box.a_matrix)
    np.testing.assert_array_equal(out.b_vector, box.b_vector)


def test_translation_shifts_bounds():
    out = transform_polytope(BodyPolytope(make_box([0, 0], [1, 1])), Pose(np.eye(2), np.array([3.0, 0.0])))
    expected = np.array([[2, -1], [2, 1], [4, -1], [4, 1]], float)
    assert _same_vertex_set(out.vertices(), expected)
    assert out.n_rows == 4


def test_rotation_maps_vertices():
    body = BodyPolytope(make_box([0, 0], [1.0, 0.5]))
    pose = Pose(rotation_2d(np.pi / 2), np.zeros(2))
    out = transform_polytope(body, pose)
    rotated = body.poly.vertices() @ pose.rotation.T
    assert _same_vertex_set(out.vertices(), rotated)


def test_make_box_rows():
    box = make_box([0, 0], [1, 1])
    rows = {tuple(r) for r in box.a_matrix}
    assert rows == {(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)}
    np.testing.assert_array_equal(box.b_vector, np.ones(4))
    assert box.is_bounded()


def test_make_box_offset_center():
    box = make_box([3, 0], [1, 1])
    assert contains(box, [3, 0])
    assert not contains(box, [0, 0])


@pytest.mark.parametrize("extent", [[0.0, 1.0], [-1.0, 1.0]])
def test_make_box_rejects_nonpositive_extent(extent):
    with pytest.raises(GeometryError):
        make_box([0, 0], extent)


def test_make_box_membership_matches_intervals():
    rng = np.random.default_rng(1)
    center = rng.uniform(-2, 2, size=3)
    half = rng.uniform(0.1, 2, size=3)
    box = make_box(center, half)
    pts = center + rng.uniform(-2.5, 2.5, size=(1000, 3)) * half
    for p in pts:
        assert contains(box, p) == bool(np.all(np.abs(p - center) <= half + 1e-9))


@pytest.mark.parametrize("point,expected", [([0, 0], True), ([2, 0], False), ([1, 1], True)])
def test_contains_unit_box(point, expected):
    assert contains(make_box([0, 0], [1, 1]), point) is expected


def test_boundedness():
    assert not HalfspacePolytope(np.array([[1.0, 0.0]]), np.array([1.0])).is_bounded()
    wedge = HalfspacePolytope(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 1.0]]), np.ones(3))
    thin = HalfspacePolytope(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1e-3]]), np.ones(3))
    assert thin.is_bounded()
    assert not wedge.is_bounded()
    assert make_box([1, 2], [0.5, 0.1]).is_bounded()


def test_emptiness_and_validate():
    empty = HalfspacePolytope(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]), np.array([-1.0, -1.0, 1.0, 1.0]))
    assert not empty.is_nonempty()
    with pytest.raises(GeometryError, match="obstacle 3"):
        empty.validate("obstacle 3")
    make_box([0, 0], [1, 1]).validate()


def test_body_polytope_requires_origin_inside():
    with pytest.raises(GeometryError):
        BodyPolytope(make_box([2, 0], [1, 1]))


def test_pose_validation():
    with pytest.raises(GeometryError):
        Pose(np.diag([1.0, -1.0]), np.zeros(2))
    with pytest.raises(GeometryError):
        Pose(2 * np.eye(2), np.zeros(2))


def test_collections_check_dimension():
    with pytest.raises(GeometryError):
        RobotGeometry(())
    with pytest.raises(GeometryError):
        ObstacleSet((make_box([0, 0], [1, 1]), make_box([0, 0, 0], [1, 1, 1])))
    assert len(ObstacleSet(())) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_body_contains_origin(seed, dim):
    body = random_body(np.random.default_rng(seed), dim)
    assert contains(body.poly, np.zeros(dim))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_transform_then_inverse_preserves_membership(seed, dim):
    rng = np.random.default_rng(seed)
    body = random_body(rng, dim)
    pose = random_pose(rng, dim)
    back = transform_polytope(transform_polytope(body, pose), pose.inverse())
    pts = rng.uniform(-2, 2, size=(100, dim))
    for p in pts:
        a = body.poly.a_matrix @ p - body.poly.b_vector
        if np.min(np.abs(a)) < 1e-7:
            continue
        assert contains(body.poly, p) == contains(back, p)
