"""Lateral control law shared by the oracle, vision controller and log generator."""
from __future__ import annotations

import math

from lanesim.augment import MAX_STEERING, ControlGains, lateral_correction
from lanesim.dynamics import VehicleParams
from lanesim.pose import PoseOffset


def feedforward(curvature: float, params: VehicleParams) -> float:
    """Steering-wheel angle that holds a path of the given curvature."""
    return params.steering_ratio * math.atan(params.wheelbase * curvature)


def control_law(
    curvature: float,
    lateral_offset: float,
    heading_error: float,
    v: float,
    gains: ControlGains,
    params: VehicleParams,
) -> float:
    """Feedforward plus error feedback, clamped to the steering range.

    ``lateral_offset`` and ``heading_error`` describe the vehicle relative
    to the reference path (positive = left of / rotated left of it).
    """
    delta = feedforward(curvature, params) + lateral_correction(
        v, PoseOffset(lateral_offset, heading_error), gains
    )
    return min(MAX_STEERING, max(-MAX_STEERING, delta))
