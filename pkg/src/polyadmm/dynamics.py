"""Discrete-time planar robot models and their linearisations.

Both models use forward Euler, ``s' = s + f(s, u)`` with ``f`` already
multiplied by ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose, rotation_2d


@dataclass
class LinearizedStep:
    a_jac: np.ndarray
    b_jac: np.ndarray
    c_const: np.ndarray

    def __call__(self, s, u) -> np.ndarray:
        return self.a_jac @ s + self.b_jac @ u + self.c_const


@dataclass
class LinearizedPose:
    rot0: np.ndarray
    rot_jac: np.ndarray  # (d, d, n_s)
    trans0: np.ndarray
    trans_jac: np.ndarray  # (d, n_s)


class DynamicsModel:
    name: str
    n_s: int
    n_u: int
    d: int
    angle_indices: tuple[int, ...] = ()
    position_indices: tuple[int, ...] = ()

    def step(self, s, u, dt: float) -> np.ndarray:
        raise NotImplementedError

    def jacobians(self, s, u, dt: float) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def pose_of(self, s) -> Pose:
        raise NotImplementedError

    def linearize_pose(self, s) -> LinearizedPose:
        raise NotImplementedError

    def linearize(self, s, u, dt: float) -> LinearizedStep:
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        a, b = self.jacobians(s, u, dt)
        return LinearizedStep(a, b, self.step(s, u, dt) - a @ s - b @ u)

    def state_error(self, s, ref) -> np.ndarray:
        """``s - ref`` with angular components wrapped to ``[-pi, pi)``."""
        e = np.asarray(s, dtype=float) - np.asarray(ref, dtype=float)
        for k in self.angle_indices:
            e[..., k] = wrap_angle(e[..., k])
        return e

    def position(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float)[..., list(self.position_indices)]


def wrap_angle(x):
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


class DoubleIntegrator(DynamicsModel):
    """``s = (p, v)``, ``u = a``; translation only, rotation fixed to identity."""

    name = "double_integrator"

    def __init__(self, d: int = 2):
        self.d = d
        self.n_s = 2 * d
        self.n_u = d
        self.position_indices = tuple(range(d))
        eye = np.eye(d)
        self._a_cont = np.block([[np.zeros((d, d)), eye], [np.zeros((d, d)), np.zeros((d, d))]])
        self._b_cont = np.vstack([np.zeros((d, d)), eye])

    def step(self, s, u, dt):
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        d = self.d
        return np.concatenate([s[:d] + s[d:] * dt, s[d:] + u * dt])

    def jacobians(self, s, u, dt):
        return np.eye(self.n_s) + dt * self._a_cont, dt * self._b_cont

    def pose_of(self, s):
        return Pose(np.eye(self.d), np.asarray(s, dtype=float)[: self.d])

    def linearize_pose(self, s):
        s = np.asarray(s, dtype=float)
        d = self.d
        trans_jac = np.zeros((d, self.n_s))
        trans_jac[:, :d] = np.eye(d)
        return LinearizedPose(np.eye(d), np.zeros((d, d, self.n_s)), s[:d].copy(), trans_jac)


class Unicycle(DynamicsModel):
    """``s = (x, y, theta)``, ``u = (v, omega)``; heading is stored unwrapped."""

    name = "unicycle"
    d = 2
    n_s = 3
    n_u = 2
    angle_indices = (2,)
    position_indices = (0, 1)

    def step(self, s, u, dt):
        x, y, th = np.asarray(s, dtype=float)
        v, om = np.asarray(u, dtype=float)
        return np.array([x + v * np.cos(th) * dt, y + v * np.sin(th) * dt, th + om * dt])

    def jacobians(self, s, u, dt):
        th = float(s[2])
        v = float(u[0])
        a = np.eye(3)
        a[0, 2] = -v * np.sin(th) * dt
        a[1, 2] = v * np.cos(th) * dt
        b = np.array([[np.cos(th) * dt, 0.0], [np.sin(th) * dt, 0.0], [0.0, dt]])
        return a, b

    def pose_of(self, s):
        s = np.asarray(s, dtype=float)
        return Pose(rotation_2d(s[2]), s[:2])

    def linearize_pose(self, s):
        s = np.asarray(s, dtype=float)
        c, sn = np.cos(s[2]), np.sin(s[2])
        rot_jac = np.zeros((2, 2, 3))
        rot_jac[:, :, 2] = [[-sn, -c], [c, -sn]]
        trans_jac = np.zeros((2, 3))
        trans_jac[:, :2] = np.eye(2)
        return LinearizedPose(rotation_2d(s[2]), rot_jac, s[:2].copy(), trans_jac)


MODELS = {"double_integrator": DoubleIntegrator, "unicycle": Unicycle}


def make_model(name: str, d: int = 2) -> DynamicsModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown dynamics model {name!r}; choose from {sorted(MODELS)}") from None
    if cls is Unicycle:
        if d != 2:
            raise ValueError("unicycle model is planar (d=2)")
        return Unicycle()
    return cls(d)


def step(model: DynamicsModel, s, u, dt: float) -> np.ndarray:
    return model.step(s, u, dt)


def linearize(model: DynamicsModel, s, u, dt: float) -> LinearizedStep:
    return model.linearize(s, u, dt)


def pose_of(model: DynamicsModel, s) -> Pose:
    return model.pose_of(s)


def linearize_pose(model: DynamicsModel, s) -> LinearizedPose:
    return model.linearize_pose(s)
