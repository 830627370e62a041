"""Steering controllers, the shared control law and the external protocol."""
from lanesim.control.law import control_law, feedforward
from lanesim.control.controllers import (
    CONTROLLER_KINDS,
    Controller,
    ControllerSpec,
    EnsembleController,
    ExternalController,
    FrameContext,
    OracleController,
    ReplayController,
    StraightController,
    VisionController,
    build_controller,
    python_command,
    road_mask,
)

__all__ = [
    "CONTROLLER_KINDS",
    "Controller",
    "ControllerSpec",
    "EnsembleController",
    "ExternalController",
    "FrameContext",
    "OracleController",
    "ReplayController",
    "StraightController",
    "VisionController",
    "build_controller",
    "control_law",
    "feedforward",
    "python_command",
    "road_mask",
]
