"""Shared domain types, planar/spatial rotations and discretization."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def rot2(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s], [s, c]])


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_to_matrix(rpy) -> np.ndarray:
    """Z-Y-X (yaw, pitch, roll) rotation, body to world."""
    r, p, y = rpy
    cr, sr = math.cos(r), math.sin(r)
    cp, sp = math.cos(p), math.sin(p)
    cy, sy = math.cos(y), math.sin(y)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def matrix_to_rpy(R: np.ndarray) -> np.ndarray:
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def discretize(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward-Euler hold: ``Ad = I + A dt``, ``Bd = B dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    A = np.asarray(A, dtype=float)
    return np.eye(A.shape[0]) + A * dt, np.asarray(B, dtype=float) * dt


@dataclass(frozen=True)
class ObjectState:
    """Planar pose and twist of the pushed object."""

    psi: float = 0.0
    pos: np.ndarray = field(default_factory=lambda: np.zeros(2))
    omega_z: float = 0.0
    vel: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))
        object.__setattr__(self, "pos", np.array(self.pos, dtype=float).reshape(2))
        object.__setattr__(self, "vel", np.array(self.vel, dtype=float).reshape(2))
        object.__setattr__(self, "omega_z", float(self.omega_z))
        if not (np.all(np.isfinite(self.pos)) and np.all(np.isfinite(self.vel))
                and math.isfinite(self.omega_z)):
            raise ValueError("ObjectState entries must be finite")

    def as_vector(self) -> np.ndarray:
        """(psi, x, y, omega_z, vx, vy)."""
        return np.array([self.psi, self.pos[0], self.pos[1], self.omega_z, self.vel[0], self.vel[1]])


@dataclass(frozen=True)
class ObjectParams:
    mass: float = 5.0
    inertia_z: float | None = None
    half_length: float = 0.2
    half_width: float = 0.2
    mu_ground: float = 0.5
    gravity: float = GRAVITY

    def __post_init__(self):
        if self.inertia_z is None:
            # uniform rectangular slab
            a, b = 2 * self.half_length, 2 * self.half_width
            object.__setattr__(self, "inertia_z", self.mass * (a * a + b * b) / 12.0)
        if self.mass <= 0 or self.inertia_z <= 0:
            raise ValueError("object mass and inertia must be positive")
        if self.half_length <= 0 or self.half_width <= 0:
            raise ValueError("object half extents must be positive")
        if self.mu_ground < 0 or self.gravity <= 0:
            raise ValueError("invalid friction coefficient or gravity")

    @property
    def friction_force(self) -> float:
        return self.mu_ground * self.mass * self.gravity


@dataclass(frozen=True)
class RobotState:
    """Single-rigid-body state of the robot trunk plus its four feet."""

    rpy: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_body: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    foot_pos: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))

    def __post_init__(self):
        rpy = np.array(self.rpy, dtype=float).reshape(3)
        rpy[2] = wrap_angle(rpy[2])
        object.__setattr__(self, "rpy", rpy)
        for name, shape in (("pos", (3,)), ("omega_body", (3,)), ("vel", (3,)), ("foot_pos", (4, 3))):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(shape))
        for name in ("rpy", "pos", "omega_body", "vel", "foot_pos"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"RobotState.{name} must be finite")

    @property
    def yaw(self) -> float:
        return float(self.rpy[2])

    @property
    def rotation(self) -> np.ndarray:
        return rpy_to_matrix(self.rpy)

    @property
    def omega_world(self) -> np.ndarray:
        return self.rotation @ self.omega_body

    def mpc_vector(self) -> np.ndarray:
        """12-vector (rpy, pos, world angular velocity, linear velocity)."""
        return np.concatenate([self.rpy, self.pos, self.omega_world, self.vel])


def _default_hips() -> np.ndarray:
    # FR, FL, RR, RL
    return np.array([[0.183, -0.13], [0.183, 0.13], [-0.183, -0.13], [-0.183, 0.13]])


@dataclass(frozen=True)
class RobotParams:
    mass: float = 12.0
    inertia_body: np.ndarray = field(default_factory=lambda: np.diag([0.07, 0.26, 0.242]))
    hip_offsets: np.ndarray = field(default_factory=_default_hips)
    head_offset: float = 0.30
    mu_foot: float = 0.6
    fz_min: float = 0.5
    fz_max: float = 120.0
    standing_height: float = 0.30
    gravity: float = GRAVITY

    def __post_init__(self):
        inertia = np.array(self.inertia_body, dtype=float).reshape(3, 3)
        object.__setattr__(self, "inertia_body", inertia)
        object.__setattr__(self, "hip_offsets", np.array(self.hip_offsets, dtype=float).reshape(4, 2))
        if self.mass <= 0:
            raise ValueError("robot mass must be positive")
        if not np.allclose(inertia, inertia.T) or np.any(np.linalg.eigvalsh(inertia) <= 0):
            raise ValueError("robot inertia must be symmetric positive definite")
        if self.fz_min < 0 or self.fz_max <= self.fz_min:
            raise ValueError("need 0 <= fz_min < fz_max")
        if self.mu_foot <= 0:
            raise ValueError("mu_foot must be positive")


class ReferenceTrajectory:
    """Time-stamped object reference, linearly interpolated and clamped at the ends.

    Headings are stored unwrapped so that interpolation never crosses a +-pi seam.
    """

    def __init__(self, times, psi, pos, omega, vel):
        self.times = np.asarray(times, dtype=float)
        self.psi = np.unwrap(np.asarray(psi, dtype=float))
        self.pos = np.asarray(pos, dtype=float).reshape(-1, 2)
        self.omega = np.asarray(omega, dtype=float)
        self.vel = np.asarray(vel, dtype=float).reshape(-1, 2)
        n = len(self.times)
        if n == 0:
            raise ValueError("empty reference trajectory")
        if not (len(self.psi) == len(self.pos) == len(self.omega) == len(self.vel) == n):
            raise ValueError("reference arrays must have matching lengths")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("reference times must be strictly increasing")
        self._table = np.column_stack([self.psi, self.pos, self.omega, self.vel])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def end_pos(self) -> np.ndarray:
        return self.pos[-1].copy()

    def sample(self, t) -> np.ndarray:
        """Rows of (psi, x, y, omega, vx, vy) at time(s) ``t``; psi is unwrapped."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((len(t), 6))
        for j in range(6):
            out[:, j] = np.interp(t, self.times, self._table[:, j])
        return out

    def state_at(self, t: float) -> ObjectState:
        row = self.sample(t)[0]
        return ObjectState(psi=row[0], pos=row[1:3], omega_z=row[3], vel=row[4:6])

    def __len__(self) -> int:
        return len(self.times)
