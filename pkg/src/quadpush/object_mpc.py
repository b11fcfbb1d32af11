"""Contact-optimizer MPC: pushing force and contact offset on the object's rear face.

Object state is (psi, x, y, omega_z, vx, vy); the input is (f_c, d) with f_c the
push along the object's body +x axis and d the contact offset along body y.
The push acts on the rear face at body (-half_length, d), so the yaw torque is
``-d * f_c``; ``f_c`` in that product is frozen at the previous tick's value.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import ObjectParams, ObjectState, ReferenceTrajectory, discretize, wrap_angle
from .qp import QpProblem, QpSolver, QpStatus

NX, NU = 6, 2
STICTION_BAND = 0.01  # m/s


@dataclass
class ObjectMpcConfig:
    N: int = 10
    dt: float = 0.003
    Q: tuple = (200.0, 10.0, 10.0, 0.0, 1.0, 1.0)
    R: tuple = (3e-4, 0.3)
    F_max: float = 40.0
    d_margin: float = 0.02
    lookahead: float = 0.6  # m; line-of-sight distance for cross-track correction, 0 disables

    def validate(self, params: ObjectParams) -> None:
        if self.N < 1 or self.dt <= 0:
            raise ValueError("object MPC needs N >= 1 and dt > 0")
        if len(self.Q) != NX or len(self.R) != NU:
            raise ValueError("object MPC weights must have 6 state and 2 input entries")
        if min(self.Q) < 0 or min(self.R) < 0:
            raise ValueError("object MPC weights must be non-negative")
        if self.F_max <= params.friction_force:
            raise ValueError(
                f"F_max={self.F_max} cannot overcome ground friction {params.friction_force:.3f} N")
        if not 0 <= self.d_margin < params.half_width:
            raise ValueError("d_margin must lie in [0, half_width)")
        if self.lookahead < 0:
            raise ValueError("lookahead must be non-negative")

    def d_max(self, params: ObjectParams) -> float:
        return params.half_width - self.d_margin


@dataclass
class ContactPlan:
    """Horizon sequences of push force and contact offset."""

    f_c: np.ndarray
    d: np.ndarray
    stamp: int = 0
    predicted: np.ndarray | None = None  # N x 6 predicted object states, if known
    status: QpStatus = QpStatus.SOLVED
    solve_time: float = 0.0
    iterations: int = 0
    kkt_residual: float = 0.0

    def __post_init__(self):
        self.f_c = np.asarray(self.f_c, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        if self.f_c.shape != self.d.shape:
            raise ValueError("f_c and d must have equal length")

    def __len__(self) -> int:
        return len(self.f_c)

    def shifted(self, stamp: int) -> "ContactPlan":
        """Advance one tick, repeating the last element."""
        f = np.append(self.f_c[1:], self.f_c[-1])
        d = np.append(self.d[1:], self.d[-1])
        pred = None
        if self.predicted is not None:
            pred = np.vstack([self.predicted[1:], self.predicted[-1:]])
        return ContactPlan(f, d, stamp, pred, QpStatus.MAX_ITER)


def friction_direction(vel, band: float = STICTION_BAND) -> np.ndarray:
    speed = math.hypot(vel[0], vel[1])
    if speed < band:
        return np.zeros(2)
    return np.asarray(vel, dtype=float) / speed


def build_object_model(state: ObjectState, params: ObjectParams, f_c0: float):
    """Continuous-time linear model ``xdot = A x + B u + affine`` around the current heading."""
    if f_c0 < 0:
        raise ValueError("f_c0 must be non-negative")
    A = np.zeros((NX, NX))
    A[0:3, 3:6] = np.eye(3)
    B = np.zeros((NX, NU))
    B[3, 1] = -f_c0 / params.inertia_z
    B[4, 0] = math.cos(state.psi) / params.mass
    B[5, 0] = math.sin(state.psi) / params.mass
    affine = np.zeros(NX)
    affine[4:6] = -params.mu_ground * params.gravity * friction_direction(state.vel)
    return A, B, affine


def condense(Ad, Bd, cd, N):
    """Stacked prediction ``X = Phi x0 + Gamma U + c`` for time-invariant dynamics."""
    nx, nu = Bd.shape
    Phi = np.empty((N * nx, nx))
    Gamma = np.zeros((N * nx, N * nu))
    c = np.empty(N * nx)
    Ak = np.eye(nx)
    ck = np.zeros(nx)
    AkB = [Bd]
    for k in range(N):
        ck = Ad @ ck + cd
        Ak = Ad @ Ak
        Phi[k * nx:(k + 1) * nx] = Ak
        c[k * nx:(k + 1) * nx] = ck
        if k > 0:
            AkB.append(Ad @ AkB[-1])
        for j in range(k + 1):
            Gamma[k * nx:(k + 1) * nx, j * nu:(j + 1) * nu] = AkB[k - j]
    return Phi, Gamma, c


def horizon_reference(state: ObjectState, ref: ReferenceTrajectory, t: float, N: int, dt: float,
                      lookahead: float = 0.0):
    """Reference rows for steps 1..N.

    With ``lookahead > 0`` the heading rows are steered toward the path by
    ``-atan(e / lookahead)``, e being the signed cross-track error now. A 30 ms
    horizon cannot see lateral drift through the heading, so without this the
    lateral weight has no effect.
    """
    rows = ref.sample(t + dt * np.arange(1, N + 1))
    if lookahead > 0:
        now = ref.sample(t)[0]
        normal = np.array([-math.sin(now[0]), math.cos(now[0])])
        err = float(normal @ (state.pos - now[1:3]))
        rows[:, 0] -= math.atan2(err, lookahead)
    # express reference headings on the branch nearest the current heading
    rows[:, 0] = [state.psi + wrap_angle(p - state.psi) for p in rows[:, 0]]
    return rows


def build_contact_qp(state, ref, t, f_c0, params, cfg):
    A, B, aff = build_object_model(state, params, f_c0)
    Ad, Bd = discretize(A, B, cfg.dt)
    Phi, Gamma, c = condense(Ad, Bd, aff * cfg.dt, cfg.N)
    x0 = state.as_vector()
    free = Phi @ x0 + c
    r = horizon_reference(state, ref, t, cfg.N, cfg.dt, cfg.lookahead).ravel()
    Qd = np.tile(np.asarray(cfg.Q, dtype=float), cfg.N)
    Rd = np.tile(np.asarray(cfg.R, dtype=float), cfg.N)
    GQ = Gamma.T * Qd
    P = GQ @ Gamma + np.diag(Rd)
    q = GQ @ (free - r)
    dmax = cfg.d_max(params)
    C = np.eye(NU * cfg.N)
    lo = np.tile([0.0, -dmax], cfg.N)
    hi = np.tile([cfg.F_max, dmax], cfg.N)
    return QpProblem(P, q, C, lo, hi), free, Gamma


class ObjectMpc:
    """Stateful contact-optimizer MPC (keeps f_c0, warm start and the last plan)."""

    def __init__(self, params: ObjectParams, cfg: ObjectMpcConfig | None = None):
        self.params = params
        self.cfg = cfg or ObjectMpcConfig()
        self.cfg.validate(params)
        self.solver = QpSolver()
        self.f_c0 = params.friction_force
        self.plan: ContactPlan | None = None

    def step(self, state: ObjectState, ref: ReferenceTrajectory, t: float, stamp: int = 0) -> ContactPlan:
        plan = solve_contact_mpc(state, ref, t, self.f_c0, self.params, self.cfg,
                                 warm=self.plan, solver=self.solver, stamp=stamp)
        self.plan = plan
        self.f_c0 = float(plan.f_c[0])
        return plan


def solve_contact_mpc(state: ObjectState, ref: ReferenceTrajectory, t: float, f_c0: float,
                      params: ObjectParams, cfg: ObjectMpcConfig, warm: ContactPlan | None = None,
                      solver: QpSolver | None = None, stamp: int = 0) -> ContactPlan:
    """Solve the horizon QP and return the full force/offset sequence."""
    solver = solver or QpSolver()
    problem, free, Gamma = build_contact_qp(state, ref, t, f_c0, params, cfg)
    ws = None
    if warm is not None and len(warm) == cfg.N:
        u = np.column_stack([warm.f_c, warm.d])
        ws = np.vstack([u[1:], u[-1:]]).ravel()
    t0 = time.perf_counter()
    sol = solver.solve(problem, ws)
    elapsed = time.perf_counter() - t0
    if sol.status is not QpStatus.SOLVED:
        if warm is not None:
            fallback = warm.shifted(stamp)
            fallback.solve_time = elapsed
            fallback.status = sol.status
            return fallback
        dmax = cfg.d_max(params)
        u = np.clip(sol.x.reshape(cfg.N, NU), [0.0, -dmax], [cfg.F_max, dmax])
    else:
        u = sol.x.reshape(cfg.N, NU)
        dmax = cfg.d_max(params)
        # hard bounds hold to solver tolerance; remove round-off so they hold exactly
        u = np.clip(u, [0.0, -dmax], [cfg.F_max, dmax])
    pred = (free + Gamma @ u.ravel()).reshape(cfg.N, NX)
    return ContactPlan(u[:, 0].copy(), u[:, 1].copy(), stamp, pred, sol.status, elapsed,
                       sol.iterations, max(sol.primal_residual, sol.dual_residual))
