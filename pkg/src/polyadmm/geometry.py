"""Halfspace polytopes, rigid poses and the robot/obstacle world model."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .simplex import LPStatus, linprog

CONTAIN_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class HalfspacePolytope:
    """Convex polytope ``{x : a_matrix @ x <= b_vector}``.

    Rows are stored exactly as given (no normalisation). Boundedness and
    nonemptiness are only checked by :meth:`validate`.
    """

    a_matrix: np.ndarray
    b_vector: np.ndarray

    def __post_init__(self):
        a = np.array(self.a_matrix, dtype=float, ndmin=2)
        b = np.array(self.b_vector, dtype=float).reshape(-1)
        if a.shape[0] != b.shape[0]:
            raise GeometryError(f"row mismatch: A has {a.shape[0]} rows, b has {b.shape[0]}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_vector", b)

    @property
    def dim(self) -> int:
        return self.a_matrix.shape[1]

    @property
    def n_rows(self) -> int:
        return self.a_matrix.shape[0]

    def is_bounded(self) -> bool:
        """Recession cone ``{x : A x <= 0}`` is trivial iff ``max ±x_k`` over it is 0."""
        if self.n_rows < self.dim + 1:
            return False
        free = np.ones(self.dim, bool)
        zeros = np.zeros(self.n_rows)
        for k in range(self.dim):
            for sign in (1.0, -1.0):
                c = np.zeros(self.dim)
                c[k] = -sign
                res = linprog(c, self.a_matrix, zeros, free=free)
                if res.status is not LPStatus.OPTIMAL or res.objective < -1e-9:
                    return False
        return True

    def is_nonempty(self) -> bool:
        res = linprog(np.zeros(self.dim), self.a_matrix, self.b_vector, free=np.ones(self.dim, bool))
        return res.status is LPStatus.OPTIMAL

    def validate(self, name: str = "polytope") -> None:
        if self.n_rows < self.dim + 1:
            raise GeometryError(f"{name}: {self.n_rows} halfspaces cannot bound a {self.dim}-d set")
        if not self.is_nonempty():
            raise GeometryError(f"{name} is empty")
        if not self.is_bounded():
            raise GeometryError(f"{name} is unbounded")

    def vertices(self, tol: float = 1e-9) -> np.ndarray:
        """Brute-force vertex enumeration over all ``dim``-subsets of rows."""
        a, b = self.a_matrix, self.b_vector
        pts = []
        for rows in itertools.combinations(range(self.n_rows), self.dim):
            sub = a[list(rows)]
            if abs(np.linalg.det(sub)) < 1e-12:
                continue
            x = np.linalg.solve(sub, b[list(rows)])
            if np.all(a @ x <= b + tol * (1.0 + np.abs(b))):
                if not any(np.allclose(x, p, atol=1e-9) for p in pts):
                    pts.append(x)
        return np.array(pts).reshape(-1, self.dim)


@dataclass(frozen=True)
class BodyPolytope:
    """A robot part in its body frame; the body origin lies strictly inside."""

    poly: HalfspacePolytope

    def __post_init__(self):
        if not np.all(self.poly.b_vector > 0):
            raise GeometryError("body polytope must contain its frame origin strictly (b > 0)")

    @property
    def dim(self) -> int:
        return self.poly.dim


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float, ndmin=2)
        p = np.array(self.translation, dtype=float).reshape(-1)
        d = p.shape[0]
        if r.shape != (d, d):
            raise GeometryError(f"rotation shape {r.shape} does not match translation length {d}")
        if not np.allclose(r.T @ r, np.eye(d), atol=1e-9) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise GeometryError("rotation must be orthogonal with determinant +1")
        r.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", p)

    @classmethod
    def identity(cls, dim: int) -> "Pose":
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.translation.shape[0]

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.rotation.T + self.translation


def rotation_2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class RobotGeometry:
    parts: tuple[BodyPolytope, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise GeometryError("robot needs at least one part")
        if len({p.dim for p in parts}) != 1:
            raise GeometryError("robot parts have mixed dimensions")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def __len__(self) -> int:
        return len(self.parts)


@dataclass(frozen=True)
class ObstacleSet:
    obstacles: tuple[HalfspacePolytope, ...] = field(default_factory=tuple)

    def __post_init__(self):
        obs = tuple(self.obstacles)
        if len({o.dim for o in obs}) > 1:
            raise GeometryError("obstacles have mixed dimensions")
        object.__setattr__(self, "obstacles", obs)

    def __len__(self) -> int:
        return len(self.obstacles)

    def __iter__(self):
        return iter(self.obstacles)

    def __getitem__(self, j):
        return self.obstacles[j]


def transform_polytope(body: BodyPolytope | HalfspacePolytope, pose: Pose) -> HalfspacePolytope:
    """World-frame image ``{y : A R^T y <= b + A R^T rho}`` of a body-frame polytope."""
    poly = body.poly if isinstance(body, BodyPolytope) else body
    if poly.dim != pose.dim:
        raise GeometryError(f"dimension mismatch: polytope {poly.dim}, pose {pose.dim}")
    art = poly.a_matrix @ pose.rotation.T
    return HalfspacePolytope(art, poly.b_vector + art @ pose.translation)


def make_box(center, half_extents) -> HalfspacePolytope:
    center = np.asarray(center, dtype=float).reshape(-1)
    half = np.asarray(half_extents, dtype=float).reshape(-1)
    if center.shape != half.shape:
        raise GeometryError("center and half_extents differ in length")
    if np.any(half <= 0):
        raise GeometryError("half extents must be positive")
    d = center.size
    eye = np.eye(d)
    a = np.vstack([eye, -eye])
    b = np.concatenate([center + half, half - center])
    return HalfspacePolytope(a, b)


def contains(poly: HalfspacePolytope, point, tol: float = CONTAIN_TOL) -> bool:
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.size != poly.dim:
        raise GeometryError(f"point has dimension {point.size}, polytope {poly.dim}")
    return bool(np.all(poly.a_matrix @ point <= poly.b_vector + tol))
