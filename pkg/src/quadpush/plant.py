"""Ground-truth simulation: sliding box, robot trunk and a penalty head contact."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import ObjectParams, ObjectState, RobotParams, RobotState, matrix_to_rpy, rot2, skew

OMEGA_TOL = 0.01  # rad/s, rotational stiction band


class ContactKind(enum.Enum):
    IN_CONTACT = "InContact"
    SEPARATED = "Separated"
    SLID_OFF_FACE = "SlidOffFace"


@dataclass
class PlantConfig:
    dt_plant: float = 0.001
    k_n: float = 5000.0
    c_n: float = 200.0
    mu_head: float = 0.1
    stiction_tol: float = 0.01
    c_rot_factor: float = 0.4  # torsional friction arm as a fraction of half_width

    def validate(self, control_dt: float | None = None) -> None:
        if self.dt_plant <= 0:
            raise ValueError("dt_plant must be positive")
        if control_dt is not None and self.dt_plant > control_dt + 1e-15:
            raise ValueError("dt_plant must not exceed the control period")
        if self.k_n <= 0 or self.c_n <= 0:
            raise ValueError("contact stiffness and damping must be positive")
        if self.mu_head < 0 or self.stiction_tol <= 0:
            raise ValueError("invalid head friction or stiction tolerance")


@dataclass
class ContactEvent:
    kind: ContactKind
    point_offset: float = 0.0
    normal_force: float = 0.0
    tangential_force: float = 0.0
    penetration: float = 0.0

    @classmethod
    def separated(cls, kind: ContactKind = ContactKind.SEPARATED, offset: float = 0.0,
                  penetration: float = 0.0) -> "ContactEvent":
        return cls(kind, offset, 0.0, 0.0, penetration)

    @property
    def in_contact(self) -> bool:
        return self.kind is ContactKind.IN_CONTACT


def head_point(robot: RobotState, robot_params: RobotParams) -> np.ndarray:
    return robot.pos[:2] + rot2(robot.yaw) @ np.array([robot_params.head_offset, 0.0])


def head_contact(robot: RobotState, box: ObjectState, obj_params: ObjectParams,
                 robot_params: RobotParams, cfg: PlantConfig) -> ContactEvent:
    """Point-on-face penalty contact between the robot head and the box rear face."""
    R = rot2(box.psi)
    head = head_point(robot, robot_params)
    local = R.T @ (head - box.pos)
    depth = local[0] + obj_params.half_length
    s = float(local[1])
    if depth <= 0.0:
        return ContactEvent.separated(ContactKind.SEPARATED, s, depth)
    if abs(s) > obj_params.half_width:
        return ContactEvent.separated(ContactKind.SLID_OFF_FACE, s, depth)
    # relative velocity of the head w.r.t. the material point of the box under it
    wz_robot = robot.omega_world[2]
    arm_r = head - robot.pos[:2]
    v_head = robot.vel[:2] + wz_robot * np.array([-arm_r[1], arm_r[0]])
    arm_b = head - box.pos
    v_box = box.vel + box.omega_z * np.array([-arm_b[1], arm_b[0]])
    rel = R.T @ (v_head - v_box)
    fn = max(0.0, cfg.k_n * depth + cfg.c_n * rel[0])
    # regularized Coulomb: the head drags the face along its sliding direction
    ft = cfg.mu_head * fn * max(-1.0, min(1.0, rel[1] / cfg.stiction_tol))
    return ContactEvent(ContactKind.IN_CONTACT, s, fn, ft, depth)


def contact_wrench_on_box(contact: ContactEvent, box: ObjectState, obj_params: ObjectParams):
    """World force on the box and the yaw torque about its COM."""
    if not contact.in_contact:
        return np.zeros(2), 0.0
    f_local = np.array([contact.normal_force, contact.tangential_force])
    r_local = np.array([-obj_params.half_length, contact.point_offset])
    torque = r_local[0] * f_local[1] - r_local[1] * f_local[0]
    return rot2(box.psi) @ f_local, float(torque)


def box_step(box: ObjectState, contact: ContactEvent, obj_params: ObjectParams, dt: float,
             stiction_tol: float = 0.01, c_rot_factor: float = 0.4, extra_force=None) -> ObjectState:
    """Semi-implicit Euler step of the sliding box with Coulomb ground friction."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    F, tau = contact_wrench_on_box(contact, box, obj_params)
    if extra_force is not None:
        F = F + np.asarray(extra_force, dtype=float)
    m = obj_params.mass
    f_fric = obj_params.friction_force
    v = box.vel
    speed = math.hypot(v[0], v[1])
    Fmag = math.hypot(F[0], F[1])
    if speed > stiction_tol:
        v_new = v + (F - f_fric * v / speed) / m * dt
        if v_new @ v <= 0.0 and Fmag <= f_fric:
            v_new = np.zeros(2)
    elif Fmag <= f_fric:
        v_new = np.zeros(2)
    else:
        v_new = v + (F - f_fric * F / Fmag) / m * dt

    tau_fric = c_rot_factor * obj_params.half_width * f_fric
    w = box.omega_z
    I = obj_params.inertia_z
    if abs(w) > OMEGA_TOL:
        w_new = w + (tau - tau_fric * math.copysign(1.0, w)) / I * dt
        if w_new * w <= 0.0 and abs(tau) <= tau_fric:
            w_new = 0.0
    elif abs(tau) <= tau_fric:
        w_new = 0.0
    else:
        w_new = w + (tau - tau_fric * math.copysign(1.0, tau)) / I * dt
    return ObjectState(psi=box.psi + w_new * dt, pos=box.pos + v_new * dt, omega_z=w_new, vel=v_new)


def _cross(a, b) -> np.ndarray:
    """Cross product over the last axis; np.cross carries heavy overhead for 3-vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.stack([a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
                     a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
                     a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]], axis=-1)


def _so3_exp(w: np.ndarray) -> np.ndarray:
    th = float(np.linalg.norm(w))
    K = skew(w)
    if th < 1e-12:
        return np.eye(3) + K
    return np.eye(3) + math.sin(th) / th * K + (1.0 - math.cos(th)) / th ** 2 * (K @ K)


def robot_step(robot: RobotState, foot_forces, contact: ContactEvent, stance, swing_targets,
               params: RobotParams, dt: float, box: ObjectState | None = None,
               obj_params: ObjectParams | None = None) -> RobotState:
    """Semi-implicit Euler step of the trunk.

    Stance feet stay pinned and carry their commanded forces; swing feet carry no
    force and are placed at ``swing_targets``. The reaction of the head contact acts
    at the head point, so unlike the MPC model it also produces a moment.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    stance = np.asarray(stance, dtype=bool)
    f = np.where(stance[:, None], np.asarray(foot_forces, dtype=float), 0.0)
    feet = robot.foot_pos
    F = f.sum(axis=0)
    F[2] -= params.mass * params.gravity
    tau = _cross(feet - robot.pos, f).sum(axis=0)
    if contact.in_contact and box is not None and obj_params is not None:
        F_box, _ = contact_wrench_on_box(contact, box, obj_params)
        f_head = np.array([-F_box[0], -F_box[1], 0.0])
        hp = head_point(robot, params)
        F += f_head
        tau += _cross(np.array([hp[0], hp[1], robot.pos[2]]) - robot.pos, f_head)
    vel = robot.vel + F / params.mass * dt
    pos = robot.pos + vel * dt
    Rm = robot.rotation
    I = params.inertia_body
    wb = robot.omega_body
    wdot = np.linalg.solve(I, Rm.T @ tau - _cross(wb, I @ wb))
    wb_new = wb + wdot * dt
    R_new = Rm @ _so3_exp(wb_new * dt)
    new_feet = feet.copy()
    new_feet[stance, 2] = 0.0
    swing = ~stance
    if np.any(swing):
        new_feet[swing] = np.asarray(swing_targets, dtype=float)[swing]
    return RobotState(rpy=matrix_to_rpy(R_new), pos=pos, omega_body=wb_new, vel=vel, foot_pos=new_feet)


def check_obstacles(box: ObjectState, obj_params: ObjectParams, obstacles) -> bool:
    """True when the box footprint overlaps any obstacle disc ``(center, radius)``."""
    if not obstacles:
        return False
    R = rot2(box.psi)
    for center, radius in obstacles:
        local = R.T @ (np.asarray(center, dtype=float) - box.pos)
        nearest = np.clip(local, [-obj_params.half_length, -obj_params.half_width],
                          [obj_params.half_length, obj_params.half_width])
        if np.linalg.norm(local - nearest) <= radius:
            return True
    return False
