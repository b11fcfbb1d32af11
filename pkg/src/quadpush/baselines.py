"""Comparison controllers: fixed contact location and the lateral-velocity heuristic."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ObjectState, ReferenceTrajectory, wrap_angle
from .object_mpc import ContactPlan


@dataclass(frozen=True)
class HeuristicConfig:
    v_y_des: float = 0.1
    deadband: float = 0.05
    lookahead: float = 3.0  # s along the reference used as the target; 0 aims at the endpoint

    def __post_init__(self):
        if self.v_y_des <= 0:
            raise ValueError("v_y_des must be positive")
        if self.deadband < 0:
            raise ValueError("deadband must be non-negative")
        if self.lookahead < 0:
            raise ValueError("lookahead must be non-negative")


def fixed_contact_plan(ref: ReferenceTrajectory, t: float, N: int, f_push: float, stamp: int = 0) -> ContactPlan:
    """Open-loop plan: centred contact and constant push."""
    return ContactPlan(np.full(N, float(f_push)), np.zeros(N), stamp)


def heuristic_target(ref: ReferenceTrajectory, t: float, lookahead: float) -> np.ndarray:
    """Reference position ``lookahead`` seconds ahead.

    Past the end of the reference the point keeps moving along the final heading at
    the last nonzero reference speed, so the direction to it stays defined as the
    box closes on the endpoint.
    """
    if lookahead <= 0:
        return ref.end_pos
    ta = t + lookahead
    if ta <= ref.t_end:
        return ref.sample(ta)[0, 1:3]
    speeds = np.linalg.norm(ref.vel, axis=1)
    moving = np.nonzero(speeds > 0)[0]
    speed = float(speeds[moving[-1]]) if len(moving) else 0.0
    psi_end = float(ref.psi[-1])
    return ref.end_pos + (ta - ref.t_end) * speed * np.array([math.cos(psi_end), math.sin(psi_end)])


def heuristic_lateral(box: ObjectState, target, cfg: HeuristicConfig) -> float:
    """Robot-frame lateral velocity that turns the box toward ``target``."""
    delta = np.asarray(target, dtype=float) - box.pos
    if not np.any(delta):
        raise ValueError("target coincides with the box position")
    psi_target = math.atan2(delta[1], delta[0])
    err = wrap_angle(box.psi - psi_target)
    if abs(err) <= cfg.deadband:
        return 0.0
    return math.copysign(cfg.v_y_des, err)
