"""Kinematic bicycle model and human/network pose offsets."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

from lanesim.errors import DomainError
from lanesim.pose import Pose2D, PoseOffset, wrap_angle

CAMERA_DT = 1.0 / 30.0


@dataclass(frozen=True)
class VehicleParams:
    """Wheelbase (m), steering-wheel to road-wheel ratio and road-wheel
    saturation (rad)."""

    wheelbase: float = 2.7
    steering_ratio: float = 20.0
    max_wheel_angle: float = math.radians(30.0)

    def __post_init__(self):
        if not self.wheelbase > 0.0:
            raise DomainError("wheelbase must be positive")
        if not self.steering_ratio >= 1.0:
            raise DomainError("steering_ratio must be >= 1")
        if not 0.0 < self.max_wheel_angle < math.pi / 2:
            raise DomainError("max_wheel_angle must lie in (0, pi/2)")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleParams":
        data = dict(data)
        if "max_wheel_angle_deg" in data:
            data["max_wheel_angle"] = math.radians(data.pop("max_wheel_angle_deg"))
        return cls(**data)


@dataclass(frozen=True)
class VehicleState:
    pose: Pose2D = Pose2D()
    wheel_angle: float = 0.0


def sw_to_wheel(delta_sw: float, params: VehicleParams) -> float:
    """Steering-wheel angle to road-wheel angle, saturated."""
    wheel = delta_sw / params.steering_ratio
    return max(-params.max_wheel_angle, min(params.max_wheel_angle, wheel))


def _rates(heading: float, v: float, yaw_rate: float) -> tuple[float, float, float]:
    return (v * math.cos(heading), v * math.sin(heading), yaw_rate)


def step(
    state: VehicleState, delta_sw: float, v: float, dt: float, params: VehicleParams
) -> VehicleState:
    """Advance the rear-axle bicycle model by ``dt`` with RK4.

    Inputs are held constant over the step.
    """
    if not (math.isfinite(delta_sw) and math.isfinite(v) and math.isfinite(dt)):
        raise DomainError("non-finite bicycle input")
    if not 0.0 < dt <= 0.1:
        raise DomainError(f"dt must lie in (0, 0.1], got {dt}")
    wheel = sw_to_wheel(delta_sw, params)
    yaw_rate = v * math.tan(wheel) / params.wheelbase

    x, y, h = state.pose.x, state.pose.y, state.pose.heading
    k1 = _rates(h, v, yaw_rate)
    k2 = _rates(h + 0.5 * dt * k1[2], v, yaw_rate)
    k3 = _rates(h + 0.5 * dt * k2[2], v, yaw_rate)
    k4 = _rates(h + dt * k3[2], v, yaw_rate)
    w = dt / 6.0
    x += w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    y += w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    h += w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return VehicleState(Pose2D(x, y, wrap_angle(h)), wheel)


def simulate(
    state: VehicleState, delta_sw, speeds, dt: float, params: VehicleParams
) -> list[VehicleState]:
    """Roll the model over input sequences; returns all states including the first."""
    states = [state]
    for d, v in zip(delta_sw, speeds):
        state = step(state, d, v, dt, params)
        states.append(state)
    return states


def relative_offset(human: Pose2D, network: Pose2D) -> PoseOffset:
    """Offset of the network pose expressed in the human pose frame.

    The longitudinal component is dropped: the warp has no longitudinal
    degree of freedom.
    """
    dx = network.x - human.x
    dy = network.y - human.y
    c, s = math.cos(human.heading), math.sin(human.heading)
    lateral = -s * dx + c * dy
    return PoseOffset(lateral, wrap_angle(network.heading - human.heading))
