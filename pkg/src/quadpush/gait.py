"""Trot scheduling, foothold placement, swing trajectories and the offset robot reference."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ObjectParams, ObjectState, ReferenceTrajectory, RobotParams, RobotState, rot2, wrap_angle

K_V = 0.03  # s, foothold velocity-error gain


@dataclass(frozen=True)
class GaitTable:
    period: float = 0.3
    duty: float = 0.6
    phase_offsets: tuple = (0.0, 0.5, 0.5, 0.0)  # FR, FL, RR, RL
    pattern: str = "trot"
    apex_height: float = 0.06

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("gait period must be positive")
        if not 0 < self.duty <= 1:
            raise ValueError("duty must lie in (0, 1]")
        if len(self.phase_offsets) != 4 or not all(0 <= p < 1 for p in self.phase_offsets):
            raise ValueError("need four phase offsets in [0, 1)")

    @property
    def stance_time(self) -> float:
        return self.duty * self.period

    @property
    def swing_time(self) -> float:
        return (1.0 - self.duty) * self.period

    def phases(self, t: float) -> np.ndarray:
        base = t / self.period
        return np.array([(base + off) % 1.0 for off in self.phase_offsets])

    def swing_phase(self, t: float) -> np.ndarray:
        """Progress through swing in [0, 1] per foot (0 for stance feet)."""
        ph = self.phases(t)
        if self.duty >= 1.0:
            return np.zeros(4)
        return np.where(ph < self.duty, 0.0, (ph - self.duty) / (1.0 - self.duty))


def contact_flags(gait: GaitTable, t: float, N: int, dt: float) -> np.ndarray:
    """N x 4 stance flags for steps starting at ``t``."""
    out = np.empty((N, 4), dtype=bool)
    for i in range(N):
        # small offset keeps exact phase boundaries from flipping on round-off
        out[i] = gait.phases(t + i * dt + 1e-12) < gait.duty
    return out


def hip_ground_positions(state: RobotState, params: RobotParams) -> np.ndarray:
    R = rot2(state.yaw)
    hips = state.pos[:2] + params.hip_offsets @ R.T
    return np.column_stack([hips, np.zeros(4)])


def plan_footholds(state: RobotState, vel_cmd, gait: GaitTable, params: RobotParams) -> np.ndarray:
    """Raibert-style touchdown targets on flat ground."""
    vel_cmd = np.asarray(vel_cmd, dtype=float)
    shift = vel_cmd * (gait.stance_time / 2.0) + K_V * (state.vel[:2] - vel_cmd)
    out = hip_ground_positions(state, params)
    out[:, :2] += shift
    return out


def swing_foot_pos(phase: float, liftoff, touchdown, apex_h: float) -> np.ndarray:
    """Smooth-step in the plane with a sinusoidal height arc."""
    if not 0.0 <= phase <= 1.0:
        raise ValueError("swing phase must lie in [0, 1]")
    liftoff = np.asarray(liftoff, dtype=float)
    touchdown = np.asarray(touchdown, dtype=float)
    s = phase * phase * (3.0 - 2.0 * phase)
    p = liftoff + s * (touchdown - liftoff)
    p[2] = apex_h * math.sin(math.pi * phase)
    return p


def offset_robot_reference(obj_ref: ReferenceTrajectory, plan, box_state: ObjectState | None,
                           obj_params: ObjectParams, robot_params: RobotParams,
                           t: float, N: int, dt: float) -> np.ndarray:
    """N x 12 robot references (rpy, pos, omega, vel) placed behind the push face.

    Each step puts the trunk at ``anchor + R(psi) (-(half_length + head_offset), d_i)``.
    With no object prediction available the anchor is the reference pose. When the
    plan carries the object's predicted states the anchor keeps the reference
    progress along the push direction but takes heading and lateral placement from
    the prediction, so that the realised contact point lands at ``d_i`` on the
    actual face.
    """
    if len(plan) < N:
        raise ValueError("contact plan shorter than the robot horizon")
    rows = obj_ref.sample(t + dt * np.arange(1, N + 1))
    if box_state is not None:
        rows[:, 0] = [box_state.psi + wrap_angle(p - box_state.psi) for p in rows[:, 0]]
    back = obj_params.half_length + robot_params.head_offset
    pred = getattr(plan, "predicted", None)
    out = np.zeros((N, 12))
    for i in range(N):
        psi_r, pos_r, om_r, vel_r = rows[i, 0], rows[i, 1:3], rows[i, 3], rows[i, 4:6]
        if pred is not None:
            psi = pred[i, 0]
            axis = np.array([math.cos(psi), math.sin(psi)])
            along = axis @ (pos_r - pred[i, 1:3])
            anchor = pred[i, 1:3] + along * axis
            omega = pred[i, 3]
        else:
            psi, anchor, omega = psi_r, pos_r, om_r
        xy = anchor + rot2(psi) @ np.array([-back, plan.d[i]])
        out[i, 0:3] = (0.0, 0.0, psi)
        out[i, 3:6] = (xy[0], xy[1], robot_params.standing_height)
        out[i, 6:9] = (0.0, 0.0, omega)
        out[i, 9:12] = (vel_r[0], vel_r[1], 0.0)
    return out
