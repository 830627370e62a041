"""Pose-offset sampling and corrected steering labels."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from lanesim.errors import DomainError, SpeedDomainError
from lanesim.geometry import CylImage, compose_offset_warp
from lanesim.pose import PoseOffset

__all__ = [
    "AugmentConfig",
    "ControlGains",
    "MAX_STEERING",
    "MIN_SPEED",
    "PoseOffset",
    "augment_frame",
    "corrected_label",
    "lateral_correction",
    "sample_offset",
    "sample_offsets",
]

MIN_SPEED = 1.0
MAX_STEERING = math.radians(540.0)


@dataclass(frozen=True)
class ControlGains:
    """Lateral controller gains.

    The lateral gain is ``ke_numerator / v`` (steering-wheel radians per
    meter of error); ``ktheta`` is steering-wheel radians per radian of
    heading error.
    """

    ke_numerator: float = 12.0
    ktheta: float = 5.3

    def __post_init__(self):
        if not (self.ke_numerator > 0.0 and self.ktheta > 0.0):
            raise DomainError("gains must be positive")

    def ke(self, v: float) -> float:
        if not v > MIN_SPEED:
            raise SpeedDomainError(f"speed {v} m/s below the {MIN_SPEED} m/s floor")
        return self.ke_numerator / v

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class AugmentConfig:
    """Offset distribution: zero-mean normals truncated at ``clip_*``.

    A clip of 0 disables that axis.
    """

    sigma_de: float = 0.45
    sigma_dtheta: float = math.radians(5.0)
    clip_de: float = 0.9
    clip_dtheta: float = math.radians(10.0)
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma_de > 0.0 and self.sigma_dtheta > 0.0):
            raise DomainError("sigmas must be positive")
        for clip, sigma in ((self.clip_de, self.sigma_de), (self.clip_dtheta, self.sigma_dtheta)):
            if clip != 0.0 and clip < sigma:
                raise DomainError("clips must be 0 or at least one sigma")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentConfig":
        data = dict(data)
        for key in ("sigma_dtheta", "clip_dtheta"):
            if key + "_deg" in data:
                data[key] = math.radians(data.pop(key + "_deg"))
        return cls(**data)


def _truncated_normal(rng: np.random.Generator, sigma: float, clip: float, size: int) -> np.ndarray:
    if clip == 0.0:
        return np.zeros(size)
    out = rng.normal(0.0, sigma, size)
    bad = np.abs(out) > clip
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = np.abs(out) > clip
    return out


def sample_offsets(rng: np.random.Generator, cfg: AugmentConfig, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` offsets as ``(de, dtheta)`` arrays."""
    de = _truncated_normal(rng, cfg.sigma_de, cfg.clip_de, n)
    dtheta = _truncated_normal(rng, cfg.sigma_dtheta, cfg.clip_dtheta, n)
    return de, dtheta


def sample_offset(rng: np.random.Generator, cfg: AugmentConfig) -> PoseOffset:
    de, dtheta = sample_offsets(rng, cfg, 1)
    return PoseOffset(float(de[0]), float(dtheta[0]))


def lateral_correction(v: float, offset: PoseOffset, gains: ControlGains) -> float:
    """Steering-wheel correction that steers a displaced vehicle back.

    Errors are measured as reference minus actual, so a vehicle displaced
    to the left (``de > 0``) receives a rightward (negative) correction.
    """
    return gains.ke(v) * (-offset.de) + gains.ktheta * (-offset.dtheta)


def corrected_label(
    delta_h: float, v: float, offset: PoseOffset, gains: ControlGains = ControlGains()
) -> float:
    """Steering-wheel label for a frame re-rendered at ``offset``."""
    label = delta_h + lateral_correction(v, offset, gains)
    return min(MAX_STEERING, max(-MAX_STEERING, label))


def augment_frame(
    image: CylImage,
    delta_h: float,
    v: float,
    offset: PoseOffset,
    gains: ControlGains = ControlGains(),
) -> tuple[CylImage, float]:
    """Warp a recorded frame to ``offset`` and relabel it consistently."""
    label = corrected_label(delta_h, v, offset, gains)
    warped = compose_offset_warp(image.spec, offset).apply(image)
    return warped, label
