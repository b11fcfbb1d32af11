"""Loco-manipulation MPC: convex single-rigid-body model with the push reaction.

The trunk is linearized about the current yaw (roll/pitch small), giving 12
states (rpy, position, world angular velocity, linear velocity) plus gravity
and the object reaction as affine terms. The push ``f_c`` acts along the trunk's
longitudinal axis and only enters the translational rows.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import RobotParams, RobotState, rot_z, skew, wrap_angle
from .qp import QpProblem, QpSolver, QpStatus

NX = 12


@dataclass
class LocoMpcConfig:
    N: int = 10
    dt: float = 0.003
    Q_x: tuple = (2.0e3, 2.0e3, 2.0e3, 2.0e4, 2.0e4, 2.0e4, 5.0, 5.0, 5.0, 30.0, 30.0, 30.0)
    R_f: float = 1e-5
    mu_foot: float = 0.6

    def validate(self) -> None:
        if self.N < 1 or self.dt <= 0:
            raise ValueError("loco MPC needs N >= 1 and dt > 0")
        if len(self.Q_x) != NX or min(self.Q_x) < 0 or self.R_f < 0:
            raise ValueError("loco MPC weights must be 12 non-negative entries and R_f >= 0")
        q = np.asarray(self.Q_x)
        if np.any(q[3:6] < 10.0 * q[9:12]):
            raise ValueError("position weights must be at least 10x the velocity weights")
        if self.mu_foot <= 0:
            raise ValueError("mu_foot must be positive")


@dataclass
class FootForcePlan:
    forces: np.ndarray  # N x 4 x 3, world frame
    status: QpStatus = QpStatus.SOLVED
    solve_time: float = 0.0
    iterations: int = 0
    kkt_residual: float = 0.0
    n_variables: int = 0

    @property
    def first(self) -> np.ndarray:
        return self.forces[0]


def push_direction(yaw: float) -> np.ndarray:
    return rot_z(yaw)[:, 0]


def build_srbd_model(state: RobotState, params: RobotParams, foot_pos_horizon, contact_plan, dt: float,
                     N: int | None = None):
    """Per-step discrete models ``(Ad, Bd, affine)`` with all four feet as inputs.

    ``Bd`` is 12 x 12 (four world-frame force vectors); callers drop swing columns.
    """
    foot_pos_horizon = np.asarray(foot_pos_horizon, dtype=float)
    N = len(foot_pos_horizon) if N is None else N
    if len(contact_plan) < N:
        raise ValueError("contact plan shorter than the loco horizon")
    yaw = state.yaw
    Rz = rot_z(yaw)
    I_world = Rz @ params.inertia_body @ Rz.T
    I_inv = np.linalg.inv(I_world)
    A = np.zeros((NX, NX))
    A[0:3, 6:9] = Rz.T
    A[3:6, 9:12] = np.eye(3)
    Ad = np.eye(NX) + A * dt
    push = push_direction(yaw)
    # rows 6:9 map a foot force to angular acceleration, I^-1 [r]x, for every step and leg
    r = foot_pos_horizon[:N] - state.pos                      # N x 4 x 3
    sk = np.zeros(r.shape + (3,))
    sk[..., 0, 1], sk[..., 0, 2] = -r[..., 2], r[..., 1]
    sk[..., 1, 0], sk[..., 1, 2] = r[..., 2], -r[..., 0]
    sk[..., 2, 0], sk[..., 2, 1] = -r[..., 1], r[..., 0]
    ang = np.einsum("ij,nljk->nilk", I_inv, sk).reshape(N, 3, 12)
    lin = np.tile(np.eye(3) / params.mass, (1, 4))
    models = []
    for k in range(N):
        B = np.zeros((NX, 12))
        B[6:9] = ang[k]
        B[9:12] = lin
        affine = np.zeros(NX)
        affine[11] = -params.gravity
        affine[9:12] -= push * contact_plan.f_c[k] / params.mass
        models.append((Ad, B * dt, affine * dt))
    return models


def _balance_map(state: RobotState, feet, stance) -> np.ndarray:
    """Pseudo-inverse taking a (force, moment) wrench to minimum-norm stance forces."""
    idx = np.flatnonzero(stance)
    M = np.zeros((6, 3 * len(idx)))
    for a, leg in enumerate(idx):
        M[0:3, 3 * a:3 * a + 3] = np.eye(3)
        M[3:6, 3 * a:3 * a + 3] = skew(feet[leg] - state.pos)
    return np.linalg.pinv(M)


def _balance_wrench(params: RobotParams, f_push_world) -> np.ndarray:
    w = np.zeros(6)
    w[0:3] = f_push_world
    w[2] += params.mass * params.gravity
    return w


def static_balance(state: RobotState, params: RobotParams, feet, stance, f_push_world) -> np.ndarray:
    """Minimum-norm stance-foot forces balancing weight and push with zero net moment."""
    idx = np.flatnonzero(stance)
    out = np.zeros((4, 3))
    if len(idx) == 0:
        return out
    out[idx] = (_balance_map(state, feet, stance) @ _balance_wrench(params, f_push_world)).reshape(-1, 3)
    return out


def _friction_rows(mu, fz_min, fz_max):
    C = np.array([
        [0.0, 0.0, 1.0],
        [1.0, 0.0, -mu],
        [1.0, 0.0, mu],
        [0.0, 1.0, -mu],
        [0.0, 1.0, mu],
    ])
    lo = np.array([fz_min, -np.inf, 0.0, -np.inf, 0.0])
    hi = np.array([fz_max, 0.0, np.inf, 0.0, np.inf])
    return C, lo, hi


def build_loco_qp(state, robot_ref, gait_flags, contact_plan, params, cfg, foot_pos_horizon):
    N = cfg.N
    flags = np.asarray(gait_flags, dtype=bool)[:N]
    models = build_srbd_model(state, params, foot_pos_horizon, contact_plan, cfg.dt, N)
    Ad = models[0][0]
    cols = []           # (step, leg) per 3-column block
    offsets = []
    nv = 0
    for k in range(N):
        legs = np.flatnonzero(flags[k])
        offsets.append(nv)
        for leg in legs:
            cols.append((k, leg))
        nv += 3 * len(legs)
    x0 = state.mpc_vector()
    ref = np.asarray(robot_ref, dtype=float)[:N].copy()
    ref[:, 2] = [x0[2] + wrap_angle(y - x0[2]) for y in ref[:, 2]]

    # prediction X = free + Gamma U
    Apow = [np.eye(NX)]
    for _ in range(N):
        Apow.append(Ad @ Apow[-1])
    Gamma = np.zeros((N * NX, nv))
    free = np.empty(N * NX)
    xk = x0.copy()
    for k in range(N):
        xk = Ad @ xk + models[k][2]
        free[k * NX:(k + 1) * NX] = xk
    for j in range(N):
        legs = np.flatnonzero(flags[j])
        if len(legs) == 0:
            continue
        Bj = models[j][1][:, np.concatenate([np.arange(3 * l, 3 * l + 3) for l in legs])]
        c0 = offsets[j]
        for k in range(j, N):
            Gamma[k * NX:(k + 1) * NX, c0:c0 + Bj.shape[1]] = Apow[k - j] @ Bj
    Qd = np.tile(np.asarray(cfg.Q_x, dtype=float), N)
    GQ = Gamma.T * Qd
    P = GQ @ Gamma + cfg.R_f * np.eye(nv)
    # force regularization is taken about the quasi-static balance
    u_ff = np.empty(nv)
    push_w = push_direction(state.yaw)
    maps = {}
    for k in range(N):
        legs = np.flatnonzero(flags[k])
        key = (flags[k].tobytes(), foot_pos_horizon[k].tobytes())
        if key not in maps:
            maps[key] = _balance_map(state, foot_pos_horizon[k], flags[k])
        wrench = _balance_wrench(params, push_w * contact_plan.f_c[k])
        u_ff[offsets[k]:offsets[k] + 3 * len(legs)] = maps[key] @ wrench
    q = GQ @ (free - ref.ravel()) - cfg.R_f * u_ff

    Cf, lof, hif = _friction_rows(cfg.mu_foot, params.fz_min, params.fz_max)
    nf = len(cols)
    C = np.zeros((5 * nf, nv))
    for a in range(nf):
        C[5 * a:5 * a + 5, 3 * a:3 * a + 3] = Cf
    lo = np.tile(lof, nf)
    hi = np.tile(hif, nf)
    return QpProblem(P, q, C, lo, hi), cols


def project_friction(forces, flags, params, mu):
    """Strip solver round-off so stance forces sit exactly inside the pyramid."""
    out = forces.copy()
    fz = np.clip(out[..., 2], params.fz_min, params.fz_max)
    out[..., 2] = fz
    out[..., 0] = np.clip(out[..., 0], -mu * fz, mu * fz)
    out[..., 1] = np.clip(out[..., 1], -mu * fz, mu * fz)
    out[~flags] = 0.0
    return out


def emergency_stance(params: RobotParams) -> np.ndarray:
    f = np.zeros((4, 3))
    f[:, 2] = params.mass * params.gravity / 4.0
    return f


class LocoMpc:
    """Stateful wrapper keeping the warm start and the previous first-step forces."""

    def __init__(self, params: RobotParams, cfg: LocoMpcConfig | None = None):
        self.params = params
        self.cfg = cfg or LocoMpcConfig()
        self.cfg.validate()
        self.solver = QpSolver()
        self.prev_first: np.ndarray | None = None
        self._warm: np.ndarray | None = None  # previous N x 4 x 3 force plan

    def step(self, state, robot_ref, gait_flags, contact_plan, foot_pos_horizon) -> FootForcePlan:
        plan = solve_loco_mpc(state, robot_ref, gait_flags, contact_plan, self.params, self.cfg,
                              foot_pos_horizon, solver=self.solver, warm=self._warm,
                              prev_first=self.prev_first)
        self.prev_first = plan.first.copy()
        self._warm = plan.forces if plan.status is QpStatus.SOLVED else None
        return plan


def solve_loco_mpc(state: RobotState, robot_ref, gait_flags, contact_plan, params: RobotParams,
                   cfg: LocoMpcConfig, foot_pos_horizon=None, solver: QpSolver | None = None,
                   warm=None, prev_first=None) -> FootForcePlan:
    """Solve for world-frame foot forces over the horizon."""
    solver = solver or QpSolver()
    N = cfg.N
    flags = np.asarray(gait_flags, dtype=bool)[:N]
    if not np.all(flags.any(axis=1)):
        raise ValueError("every horizon step needs at least one stance foot")
    if foot_pos_horizon is None:
        foot_pos_horizon = np.repeat(state.foot_pos[None], N, axis=0)
    problem, cols = build_loco_qp(state, robot_ref, flags, contact_plan, params, cfg, foot_pos_horizon)
    ws = None
    if warm is not None and np.shape(warm) == (N, 4, 3):
        # shift the previous plan one step and lay it out like the new decision vector
        shifted = np.concatenate([warm[1:], warm[-1:]])
        ws = np.concatenate([shifted[k, leg] for k, leg in cols])
    t0 = time.perf_counter()
    sol = solver.solve(problem, ws)
    elapsed = time.perf_counter() - t0
    forces = np.zeros((N, 4, 3))
    if sol.status is QpStatus.SOLVED:
        for a, (k, leg) in enumerate(cols):
            forces[k, leg] = sol.x[3 * a:3 * a + 3]
        forces = project_friction(forces, flags, params, cfg.mu_foot)
    elif sol.status is QpStatus.MAX_ITER and prev_first is not None:
        forces[:] = prev_first
    else:
        forces[:] = emergency_stance(params)
    plan = FootForcePlan(forces, sol.status, elapsed, sol.iterations,
                         max(sol.primal_residual, sol.dual_residual), problem.n)
    return plan
