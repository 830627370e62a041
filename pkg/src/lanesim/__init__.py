"""Closed-loop evaluation of steering controllers on replayed drive logs.

Recorded frames are warped to the pose of a simulated vehicle driven by
the controller under test; recoveries are counted and scored as autonomy.
"""
from lanesim.errors import (
    ControllerError,
    DataError,
    DomainError,
    EnvelopeError,
    ExtrapolationError,
    GenerationError,
    LanesimError,
    SpeedDomainError,
    TrackError,
)
from lanesim.pose import Pose2D, PoseOffset, wrap_angle

__version__ = "0.1.0"

__all__ = [
    "ControllerError",
    "DataError",
    "DomainError",
    "EnvelopeError",
    "ExtrapolationError",
    "GenerationError",
    "LanesimError",
    "Pose2D",
    "PoseOffset",
    "SpeedDomainError",
    "TrackError",
    "__version__",
    "wrap_angle",
]
