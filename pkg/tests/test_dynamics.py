from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lanesim.dynamics import (
    VehicleParams,
    VehicleState,
    relative_offset,
    simulate,
    step,
    sw_to_wheel,
)
from lanesim.errors import DomainError
from lanesim.pose import Pose2D, PoseOffset, wrap_angle

P = VehicleParams()
DT = 1.0 / 30.0


def circumradius(a, b, c) -> float:
    ab = np.linalg.norm(b - a)
    bc = np.linalg.norm(c - b)
    ca = np.linalg.norm(a - c)
    cross = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return ab * bc * ca / (2.0 * cross)


def drive(delta_sw: float, v: float, t: float, dt: float, start=VehicleState()) -> VehicleState:
    n = int(round(t / dt))
    state = start
    for _ in range(n):
        state = step(state, delta_sw, v, dt, P)
    return state


def test_straight_step_advances_one_meter():
    s = step(VehicleState(Pose2D(0.0, 0.0, 0.3)), 0.0, 10.0, 0.1, P)
    assert s.pose.x == pytest.approx(math.cos(0.3), abs=1e-12)
    assert s.pose.y == pytest.approx(math.sin(0.3), abs=1e-12)
    assert s.pose.heading == 0.3


def test_eight_meter_circle_closes():
    wheel = math.atan(P.wheelbase / 8.0)
    delta = wheel * P.steering_ratio
    v = 8.0
    t = 2.0 * math.pi * 8.0 / v
    n = int(round(t / DT))
    dt = t / n
    end = drive(delta, v, t, dt)
    assert math.hypot(end.pose.x, end.pose.y) <= 1e-3
    assert abs(wrap_angle(end.pose.heading)) <= 1e-9


def test_circle_curvature_from_circumcircle():
    wheel = math.radians(12.0)
    delta = wheel * P.steering_ratio
    states = simulate(VehicleState(), [delta] * 300, [6.0] * 300, DT, P)
    xy = np.array([[s.pose.x, s.pose.y] for s in states])
    expected = P.wheelbase / math.tan(wheel)
    for i in range(0, 290, 37):
        r = circumradius(xy[i], xy[i + 5], xy[i + 10])
        assert r == pytest.approx(expected, rel=1e-6)


def exact_circle(delta_sw: float, v: float, t: float) -> np.ndarray:
    omega = v * math.tan(sw_to_wheel(delta_sw, P)) / P.wheelbase
    return np.array([math.sin(omega * t) / omega * v, (1.0 - math.cos(omega * t)) / omega * v])


def test_rk4_convergence_order():
    delta, v, t = 6.0, 9.0, 10.0
    errs = []
    for dt in (0.1, 0.05, 0.025):
        end = drive(delta, v, t, dt)
        errs.append(np.linalg.norm([end.pose.x, end.pose.y] - exact_circle(delta, v, t)))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 3.9
    a = drive(delta, v, t, DT)
    b = drive(delta, v, t, DT / 2)
    assert math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y) <= 1e-6


@given(st.floats(-8.0, 8.0), st.floats(0.5, 30.0))
def test_mirrored_input_mirrors_trajectory(delta, v):
    a = drive(delta, v, 2.0, DT)
    b = drive(-delta, v, 2.0, DT)
    assert a.pose.x == pytest.approx(b.pose.x, abs=1e-12)
    assert a.pose.y == pytest.approx(-b.pose.y, abs=1e-12)
    assert a.pose.heading == pytest.approx(-b.pose.heading, abs=1e-12)


def test_identical_inputs_keep_twins_identical():
    rng = np.random.default_rng(0)
    deltas = rng.normal(0.0, 1.0, 200)
    speeds = rng.uniform(3.0, 15.0, 200)
    a = simulate(VehicleState(), deltas, speeds, DT, P)
    b = simulate(VehicleState(), deltas, speeds, DT, P)
    for sa, sb in zip(a, b):
        assert relative_offset(sa.pose, sb.pose) == PoseOffset(0.0, 0.0)


@pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(dt=0.2), dict(delta_sw=math.nan), dict(v=math.inf)])
def test_step_rejects_bad_inputs(kwargs):
    args = dict(state=VehicleState(), delta_sw=0.0, v=5.0, dt=DT, params=P)
    args.update(kwargs)
    with pytest.raises(DomainError):
        step(**args)


def test_steering_ratio_and_saturation():
    assert math.degrees(sw_to_wheel(math.radians(10.0), P)) == pytest.approx(0.5)
    assert sw_to_wheel(0.0, P) == 0.0
    assert sw_to_wheel(math.radians(10000.0), P) == P.max_wheel_angle
    assert sw_to_wheel(-math.radians(10000.0), P) == -P.max_wheel_angle


@pytest.mark.parametrize(
    "kwargs", [dict(wheelbase=0.0), dict(steering_ratio=0.5), dict(max_wheel_angle=math.pi / 2)]
)
def test_vehicle_params_validation(kwargs):
    with pytest.raises(DomainError):
        VehicleParams(**kwargs)


def test_relative_offset_examples():
    assert relative_offset(Pose2D(1.0, 2.0, 0.4), Pose2D(1.0, 2.0, 0.4)) == PoseOffset(0.0, 0.0)
    human = Pose2D(0.0, 0.0, 0.0)
    assert relative_offset(human, Pose2D(0.0, 1.0, 0.0)).de == pytest.approx(1.0)
    off = relative_offset(Pose2D(0.0, 0.0, math.pi / 2), Pose2D(1.0, 0.0, math.pi / 2))
    assert off.de == pytest.approx(-1.0)
    assert off.dtheta == pytest.approx(0.0)


pose = st.builds(Pose2D, st.floats(-100, 100), st.floats(-100, 100), st.floats(-math.pi, math.pi))


@given(pose, pose)
def test_relative_heading_is_antisymmetric(a, b):
    ab = relative_offset(a, b).dtheta
    ba = relative_offset(b, a).dtheta
    assert wrap_angle(ab + ba) == pytest.approx(0.0, abs=1e-12)


@given(pose, st.floats(-3.0, 3.0), st.floats(-0.5, 0.5))
def test_offset_of_displaced_pose(base, left, turn):
    off = relative_offset(base, base.moved(left=left, turn=turn))
    assert off.de == pytest.approx(left, abs=1e-9)
    assert off.dtheta == pytest.approx(turn, abs=1e-12)
