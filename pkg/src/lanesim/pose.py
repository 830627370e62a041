"""Planar pose value types shared by the dynamics, warp and label code.

Conventions used throughout the package: x forward, y left, z up;
headings and angular offsets are positive when rotated to the left.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped == -math.pi:
        return math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.heading)):
            raise ValueError(f"non-finite pose {self}")

    def moved(self, forward: float = 0.0, left: float = 0.0, turn: float = 0.0) -> "Pose2D":
        """Return the pose displaced in its own frame and rotated by ``turn``."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        return Pose2D(
            self.x + c * forward - s * left,
            self.y + s * forward + c * left,
            wrap_angle(self.heading + turn),
        )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.heading)


@dataclass(frozen=True)
class PoseOffset:
    """Lateral (m) and heading (rad) deviation of a virtual vehicle.

    ``de > 0`` means the virtual vehicle sits to the left of the reference,
    ``dtheta > 0`` means its heading is rotated to the left.
    """

    de: float = 0.0
    dtheta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.de) and math.isfinite(self.dtheta)):
            raise ValueError(f"non-finite offset {self}")

    def __add__(self, other: "PoseOffset") -> "PoseOffset":
        return PoseOffset(self.de + other.de, self.dtheta + other.dtheta)

    def __neg__(self) -> "PoseOffset":
        return PoseOffset(-self.de, -self.dtheta)
