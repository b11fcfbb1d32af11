"""Closed-loop orchestration: controllers at the MPC tick, plant at dt_plant."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..baselines import fixed_contact_plan, heuristic_lateral, heuristic_target
from ..core import ObjectState, ReferenceTrajectory, RobotState, rot2, wrap_angle
from ..gait import contact_flags, hip_ground_positions, offset_robot_reference, plan_footholds, swing_foot_pos
from ..loco_mpc import LocoMpc
from ..object_mpc import ObjectMpc
from ..plant import ContactKind, box_step, check_obstacles, head_contact, robot_step
from .scenario import Controller, ScenarioConfig, make_reference

REACH_POS_TOL = 0.10
REACH_HEADING_TOL = 0.15
LOST_CONTACT_TIME = 0.5
SIG_DIGITS = 9


class Outcome(enum.Enum):
    REACHED_TARGET = "ReachedTarget"
    LOST_CONTACT = "LostContact"
    SLID_OFF_FACE = "SlidOffFace"
    COLLISION = "Collision"
    TIMEOUT = "Timeout"


KIND_CODES = {ContactKind.IN_CONTACT: 0, ContactKind.SEPARATED: 1, ContactKind.SLID_OFF_FACE: 2}

COLUMNS = (
    ["t", "box_psi", "box_x", "box_y", "box_omega", "box_vx", "box_vy"]
    + ["robot_roll", "robot_pitch", "robot_yaw", "robot_x", "robot_y", "robot_z",
       "robot_wx", "robot_wy", "robot_wz", "robot_vx", "robot_vy", "robot_vz"]
    + ["f_c", "d", "f_n", "f_t", "contact_kind"]
    + [f"foot{leg}_f{ax}" for leg in range(4) for ax in "xyz"]
    + ["solve_time_obj", "solve_time_loco"]
)


def round_sig(a, digits: int = SIG_DIGITS) -> np.ndarray:
    """Round to ``digits`` significant digits via the same text form the CSV uses."""
    a = np.asarray(a, dtype=float)
    return np.array([float(f"{v:.{digits}g}") for v in a.ravel()]).reshape(a.shape)


@dataclass
class Metrics:
    rms_cross_track: float
    max_cross_track: float
    rms_heading_error: float
    final_position_error: float
    mean_solve_obj: float
    max_solve_obj: float
    median_solve_obj: float
    p99_solve_obj: float
    mean_solve_loco: float
    max_solve_loco: float
    median_solve_loco: float
    p99_solve_loco: float


@dataclass
class RunResult:
    name: str
    controller: str
    task: str
    data: np.ndarray  # ticks x len(COLUMNS), rounded to SIG_DIGITS
    outcome: Outcome
    metrics: Metrics
    reference: ReferenceTrajectory | None = None
    kkt_residuals: list = field(default_factory=list)
    d_max: float = 0.0
    F_max: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return self.data[:, COLUMNS.index(name)]

    @property
    def ticks(self) -> int:
        return len(self.data)


def _segment_distance(points: np.ndarray, path: np.ndarray) -> np.ndarray:
    """Distance from each point to a polyline."""
    if len(path) == 1:
        return np.linalg.norm(points - path[0], axis=1)
    a = path[:-1]
    ab = path[1:] - a
    L2 = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-18)
    out = np.empty(len(points))
    for i, p in enumerate(points):
        t = np.clip(((p - a) * ab).sum(axis=1) / L2, 0.0, 1.0)
        proj = a + ab * t[:, None]
        out[i] = np.sqrt(((proj - p) ** 2).sum(axis=1)).min()
    return out


def compute_metrics(data: np.ndarray, ref: ReferenceTrajectory) -> Metrics:
    if len(data) == 0:
        nan = float("nan")
        return Metrics(*([nan] * 12))
    col = {c: i for i, c in enumerate(COLUMNS)}
    t = data[:, col["t"]]
    pos = data[:, [col["box_x"], col["box_y"]]]
    ct = _segment_distance(pos, ref.pos)
    psi_ref = ref.sample(t)[:, 0]
    he = np.array([wrap_angle(a - b) for a, b in zip(data[:, col["box_psi"]], psi_ref)])
    final = float(np.linalg.norm(pos[-1] - ref.end_pos))
    so = data[:, col["solve_time_obj"]]
    sl = data[:, col["solve_time_loco"]]

    def stats(x):
        return float(np.mean(x)), float(np.max(x)), float(np.median(x)), float(np.percentile(x, 99))

    return Metrics(float(np.sqrt(np.mean(ct ** 2))), float(np.max(ct)), float(np.sqrt(np.mean(he ** 2))),
                   final, *stats(so), *stats(sl))


def initial_states(cfg: ScenarioConfig, ref: ReferenceTrajectory):
    r0 = ref.sample(0.0)[0]
    psi_ref = r0[0]
    lateral = rot2(psi_ref) @ np.array([0.0, cfg.box_lateral0])
    box = ObjectState(psi=psi_ref + cfg.box_heading0, pos=r0[1:3] + lateral)
    rp = cfg.robot_params
    back = cfg.object_params.half_length + rp.head_offset
    xy = r0[1:3] + rot2(psi_ref) @ np.array([-back, 0.0])
    robot = RobotState(rpy=(0.0, 0.0, psi_ref), pos=(xy[0], xy[1], rp.standing_height))
    feet = hip_ground_positions(robot, rp)
    return box, RobotState(rpy=robot.rpy, pos=robot.pos, foot_pos=feet)


class _FootManager:
    """Tracks liftoff points and places swing feet along their arcs."""

    def __init__(self, robot: RobotState):
        self.liftoff = robot.foot_pos.copy()
        self.stance = np.ones(4, dtype=bool)

    def update(self, t, robot, gait, params, vel_cmd):
        stance = gait.phases(t + 1e-12) < gait.duty
        for leg in range(4):
            if self.stance[leg] and not stance[leg]:
                self.liftoff[leg] = robot.foot_pos[leg]
        self.stance = stance
        targets = plan_footholds(robot, vel_cmd, gait, params)
        swing_ph = gait.swing_phase(t + 1e-12)
        positions = robot.foot_pos.copy()
        for leg in np.flatnonzero(~stance):
            positions[leg] = swing_foot_pos(min(1.0, swing_ph[leg]), self.liftoff[leg], targets[leg],
                                            gait.apex_height)
        return stance, positions, targets


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    cfg.validate()
    ref = make_reference(cfg.task)
    duration = cfg.run_duration(ref)
    op, rp = cfg.object_params, cfg.robot_params
    dt = cfg.object_mpc.dt
    N = cfg.object_mpc.N
    substeps = int(round(dt / cfg.plant.dt_plant))
    dtp = dt / substeps
    rng = np.random.default_rng(cfg.seed)

    box, robot = initial_states(cfg, ref)
    obj_mpc = ObjectMpc(op, cfg.object_mpc) if cfg.controller is Controller.HIERARCHICAL else None
    loco = LocoMpc(rp, cfg.loco_mpc)
    feet_mgr = _FootManager(robot)
    lateral_offset = 0.0
    d_max = cfg.object_mpc.d_max(op)
    obstacles = cfg.obstacle_list

    rows = []
    kkt = []
    outcome = None
    separated_since = None
    n_ticks = int(math.floor(duration / dt + 1e-9))
    end_psi = ref.sample(ref.t_end)[0, 0]

    for k in range(max(n_ticks, 1)):
        t = k * dt
        meas = box
        if cfg.measurement_noise > 0:
            noise = rng.normal(scale=cfg.measurement_noise, size=3)
            meas = ObjectState(psi=box.psi + noise[0], pos=box.pos + noise[1:3], omega_z=box.omega_z, vel=box.vel)

        vel_extra = np.zeros(2)
        if cfg.controller is Controller.HIERARCHICAL:
            plan = obj_mpc.step(meas, ref, t, stamp=k)
            kkt.append(("object", plan.kkt_residual, plan.status.value))
            robot_ref = offset_robot_reference(ref, plan, meas, op, rp, t, N, dt)
        else:
            plan = fixed_contact_plan(ref, t, N, cfg.push_force, stamp=k)
            if cfg.controller is Controller.HEURISTIC:
                target = heuristic_target(ref, t, cfg.heuristic.lookahead)
                if np.linalg.norm(target - meas.pos) < 1e-6:
                    v_y = 0.0
                else:
                    v_y = heuristic_lateral(meas, target, cfg.heuristic)
                lateral_offset += v_y * dt
                plan.d[:] = lateral_offset
                vel_extra = rot2(ref.sample(t)[0, 0]) @ np.array([0.0, v_y])
            robot_ref = offset_robot_reference(ref, plan, None, op, rp, t, N, dt)
            robot_ref[:, 9:11] += vel_extra

        flags = contact_flags(cfg.gait, t, N, dt)
        stance_now, _, targets = feet_mgr.update(t, robot, cfg.gait, rp, robot_ref[0, 9:11])
        foot_h = np.repeat(robot.foot_pos[None], N, axis=0)
        for i in range(N):
            landing = flags[i] & ~stance_now
            foot_h[i, landing] = targets[landing]
        fplan = loco.step(robot, robot_ref, flags, plan, foot_h)
        kkt.append(("loco", fplan.kkt_residual, fplan.status.value))
        forces = fplan.first

        contact0 = head_contact(robot, box, op, rp, cfg.plant)
        st_obj = plan.solve_time if (cfg.record_timing and obj_mpc is not None) else 0.0
        st_loco = fplan.solve_time if cfg.record_timing else 0.0
        rows.append(np.concatenate([
            [t], box.as_vector(), robot.mpc_vector(),
            [plan.f_c[0], plan.d[0], contact0.normal_force, contact0.tangential_force,
             KIND_CODES[contact0.kind]],
            forces.ravel(), [st_obj, st_loco],
        ]))

        for j in range(substeps):
            tp = t + j * dtp
            stance, swing_pos, _ = feet_mgr.update(tp, robot, cfg.gait, rp, robot_ref[0, 9:11])
            contact = head_contact(robot, box, op, rp, cfg.plant)
            new_box = box_step(box, contact, op, dtp, cfg.plant.stiction_tol, cfg.plant.c_rot_factor)
            robot = robot_step(robot, forces, contact, stance, swing_pos, rp, dtp, box, op)
            box = new_box
            if contact.kind is ContactKind.SLID_OFF_FACE:
                outcome = Outcome.SLID_OFF_FACE
                break
            if contact.in_contact:
                separated_since = None
            elif separated_since is None:
                separated_since = tp
            elif tp - separated_since > LOST_CONTACT_TIME:
                outcome = Outcome.LOST_CONTACT
                break
        if outcome is None and check_obstacles(box, op, obstacles):
            outcome = Outcome.COLLISION
        t_next = (k + 1) * dt
        if outcome is None and t_next >= ref.t_end - 1e-9:
            if (np.linalg.norm(box.pos - ref.end_pos) < REACH_POS_TOL
                    and abs(wrap_angle(box.psi - end_psi)) < REACH_HEADING_TOL):
                outcome = Outcome.REACHED_TARGET
        if outcome is not None:
            break
    if outcome is None:
        outcome = Outcome.TIMEOUT

    data = round_sig(np.array(rows)) if rows else np.zeros((0, len(COLUMNS)))
    return RunResult(cfg.name, cfg.controller.value, cfg.task.kind.value, data, outcome,
                     compute_metrics(data, ref), ref, kkt, d_max, cfg.object_mpc.F_max)
