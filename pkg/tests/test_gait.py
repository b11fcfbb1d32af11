import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadpush.core import ObjectParams, ObjectState, ReferenceTrajectory, RobotParams, RobotState, rot2
from quadpush.gait import (GaitTable, contact_flags, hip_ground_positions, offset_robot_reference,
                           plan_footholds, swing_foot_pos)
from quadpush.object_mpc import ContactPlan

OP = ObjectParams(half_length=0.2)
RP = RobotParams(head_offset=0.15)  # half_length + head_offset = 0.35


def test_full_duty_is_always_stance():
    flags = contact_flags(GaitTable(duty=1.0), 0.123, 10, 0.003)
    assert flags.all()


def test_trot_pairs_at_zero():
    flags = contact_flags(GaitTable(duty=0.5, phase_offsets=(0.0, 0.5, 0.5, 0.0)), 0.0, 1, 0.003)
    assert flags[0].tolist() == [True, False, False, True]


@given(st.floats(0.0, 20.0))
def test_flags_periodic_and_diagonal(t):
    g = GaitTable()
    a = contact_flags(g, t, 10, 0.003)
    b = contact_flags(g, t + g.period, 10, 0.003)
    # the round-off guard makes the comparison exact except right at a phase edge
    edge = np.abs((np.array([t + i * 0.003 for i in range(10)])[:, None] / g.period
                   + np.array(g.phase_offsets)) % 1.0 - g.duty) < 1e-9
    assert np.all((a == b) | edge)
    assert np.array_equal(a[:, 0], a[:, 3]) and np.array_equal(a[:, 1], a[:, 2])


def test_flags_duty_fraction_over_period():
    g = GaitTable(period=0.3, duty=0.6)
    n = 1000
    flags = contact_flags(g, 0.0, n, g.period / n)
    np.testing.assert_allclose(flags.mean(axis=0), g.duty, atol=2.0 / n)


@pytest.mark.parametrize("kwargs", [dict(period=0.0), dict(duty=0.0), dict(duty=1.5),
                                    dict(phase_offsets=(0.0, 0.5, 1.0, 0.0))])
def test_gait_validation(kwargs):
    with pytest.raises(ValueError):
        GaitTable(**kwargs)


def robot(vel=(0.0, 0.0, 0.0), yaw=0.0):
    return RobotState(rpy=(0, 0, yaw), pos=(0.0, 0.0, 0.3), vel=vel)


def test_footholds_under_hips_at_rest():
    s = robot()
    np.testing.assert_allclose(plan_footholds(s, (0.0, 0.0), GaitTable(), RP), hip_ground_positions(s, RP))


def test_foothold_forward_shift():
    g = GaitTable(period=0.5, duty=0.6)  # stance time 0.3 s
    s = robot(vel=(0.5, 0.0, 0.0))
    shift = plan_footholds(s, (0.5, 0.0), g, RP) - hip_ground_positions(s, RP)
    np.testing.assert_allclose(shift[:, 0], 0.075)
    np.testing.assert_allclose(shift[:, 1:], 0.0)


def test_foothold_lateral_mirror():
    g = GaitTable()
    s = robot()
    left = plan_footholds(s, (0.0, 0.2), g, RP)
    right = plan_footholds(s, (0.0, -0.2), g, RP)
    hips = hip_ground_positions(s, RP)
    np.testing.assert_allclose(left[:, 1] - hips[:, 1], -(right[:, 1] - hips[:, 1]))
    assert np.all(left[:, 2] == 0.0)


def test_swing_endpoints_and_apex():
    lo, td = np.array([0.0, 0.0, 0.0]), np.array([0.2, 0.1, 0.0])
    np.testing.assert_allclose(swing_foot_pos(0.0, lo, td, 0.06), lo)
    np.testing.assert_allclose(swing_foot_pos(1.0, lo, td, 0.06), td, atol=1e-15)
    mid = swing_foot_pos(0.5, lo, td, 0.06)
    np.testing.assert_allclose(mid, [0.1, 0.05, 0.06])


@given(st.floats(0.0, 1.0))
def test_swing_continuity(phase):
    lo, td = np.array([0.0, 0.0, 0.0]), np.array([0.2, -0.1, 0.0])
    h = 1e-6
    a = swing_foot_pos(phase, lo, td, 0.06)
    b = swing_foot_pos(min(1.0, phase + h), lo, td, 0.06)
    assert np.abs(a - b).max() < 1e-5


def test_swing_rejects_phase_outside():
    with pytest.raises(ValueError):
        swing_foot_pos(1.1, np.zeros(3), np.zeros(3), 0.06)


def still_ref(psi, pos):
    return ReferenceTrajectory([0.0, 10.0], [psi, psi], [pos, pos], [0, 0], [[0, 0], [0, 0]])


@pytest.mark.parametrize("d, psi, box, expected", [
    (0.0, 0.0, (1.0, 0.0), (0.65, 0.0)),
    (0.1, 0.0, (1.0, 0.0), (0.65, 0.1)),
    (0.1, math.pi / 2, (0.0, 1.0), (-0.1, 0.65)),
])
def test_offset_reference_examples(d, psi, box, expected):
    plan = ContactPlan(np.full(10, 20.0), np.full(10, d), 0)
    out = offset_robot_reference(still_ref(psi, box), plan, None, OP, RP, 0.0, 10, 0.003)
    np.testing.assert_allclose(out[:, 3:5], np.tile(expected, (10, 1)), atol=1e-12)
    np.testing.assert_allclose(out[:, 2], psi)
    np.testing.assert_allclose(out[:, 5], RP.standing_height)
    assert np.all(out[:, 0:2] == 0.0)


@given(st.lists(st.floats(-0.18, 0.18), min_size=10, max_size=10), st.floats(-3.0, 3.0))
def test_offset_reference_on_face_line(ds, psi):
    ref = ReferenceTrajectory([0.0, 10.0], [psi, psi + 0.5], [[0, 0], [2, 1]], [0.05, 0.05],
                              [[0.2, 0.1], [0.2, 0.1]])
    plan = ContactPlan(np.full(10, 20.0), np.array(ds), 0)
    out = offset_robot_reference(ref, plan, None, OP, RP, 1.0, 10, 0.003)
    rows = ref.sample(1.0 + 0.003 * np.arange(1, 11))
    for i in range(10):
        local = rot2(rows[i, 0]).T @ (out[i, 3:5] - rows[i, 1:3])
        assert local[0] == pytest.approx(-0.35, abs=1e-12)
        assert local[1] == pytest.approx(ds[i], abs=1e-12)
    np.testing.assert_allclose(out[:, 9:11], rows[:, 4:6])


def test_offset_reference_with_prediction_uses_predicted_heading():
    ref = still_ref(0.0, (1.0, 0.0))
    pred = np.zeros((10, 6))
    pred[:, 0] = 0.1
    pred[:, 1:3] = (1.0, 0.05)
    plan = ContactPlan(np.full(10, 20.0), np.zeros(10), 0, pred)
    out = offset_robot_reference(ref, plan, ObjectState(psi=0.1, pos=(1.0, 0.05)), OP, RP, 0.0, 10, 0.003)
    np.testing.assert_allclose(out[:, 2], 0.1)
    # the robot sits on the predicted face normal through the contact point
    local = rot2(0.1).T @ (out[0, 3:5] - pred[0, 1:3])
    assert local[1] == pytest.approx(0.0, abs=1e-12)


def test_offset_reference_needs_full_plan():
    plan = ContactPlan(np.zeros(3), np.zeros(3), 0)
    with pytest.raises(ValueError):
        offset_robot_reference(still_ref(0.0, (0, 0)), plan, None, OP, RP, 0.0, 10, 0.003)
