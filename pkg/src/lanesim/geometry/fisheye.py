"""Equidistant fisheye model and projection onto the cylinder."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from lanesim.errors import DomainError
from lanesim.geometry.image import CylImage, area_downsample, bilinear_sample, to_uint8
from lanesim.geometry.projection import ProjectionSpec, pixels_to_rays


@dataclass(frozen=True)
class FisheyeIntrinsics:
    """Raw camera parameters.

    ``focal`` is in pixels per radian (r = focal * angle off axis),
    ``principal_point`` is ``(col, row)`` in pixel index coordinates,
    ``resolution`` is ``(width, height)`` and ``max_fov`` the full field of
    view in radians.
    """

    focal: float = 1280 / math.radians(190.0)
    principal_point: tuple[float, float] = (639.5, 399.5)
    resolution: tuple[int, int] = (1280, 800)
    max_fov: float = math.radians(190.0)

    def __post_init__(self):
        object.__setattr__(self, "principal_point", tuple(float(v) for v in self.principal_point))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        w, h = self.resolution
        cx, cy = self.principal_point
        if not self.focal > 0.0:
            raise DomainError("focal must be positive")
        if not (0.0 <= cx <= w - 1 and 0.0 <= cy <= h - 1):
            raise DomainError("principal point outside the image")
        if not 0.0 < self.max_fov < 2.0 * math.pi:
            raise DomainError("max_fov must lie in (0, 2*pi)")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "FisheyeIntrinsics":
        data = dict(data)
        if "max_fov_deg" in data:
            data["max_fov"] = math.radians(data.pop("max_fov_deg"))
        return cls(**data)


def fisheye_project(intr: FisheyeIntrinsics, rays) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Camera-frame rays to fisheye pixels ``(u, v, inside)``.

    The optical axis is +x; image u grows to the right (-y) and v down (-z).
    """
    rays = np.asarray(rays, dtype=float)
    norm = np.linalg.norm(rays, axis=-1)
    x, y, z = (rays[..., i] / norm for i in range(3))
    lateral = np.hypot(y, z)
    angle = np.arctan2(lateral, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        du = np.where(lateral > 0.0, -y / lateral, 0.0)
        dv = np.where(lateral > 0.0, -z / lateral, 0.0)
    r = intr.focal * angle
    u = intr.principal_point[0] + r * du
    v = intr.principal_point[1] + r * dv
    return u, v, angle <= intr.max_fov / 2.0


def fisheye_unproject(intr: FisheyeIntrinsics, u, v) -> np.ndarray:
    """Fisheye pixels to unit camera-frame rays."""
    du = np.asarray(u, dtype=float) - intr.principal_point[0]
    dv = np.asarray(v, dtype=float) - intr.principal_point[1]
    r = np.hypot(du, dv)
    angle = r / intr.focal
    with np.errstate(divide="ignore", invalid="ignore"):
        su = np.where(r > 0.0, du / r, 0.0)
        sv = np.where(r > 0.0, dv / r, 0.0)
    s = np.sin(angle)
    return np.stack([np.cos(angle), -su * s, -sv * s], axis=-1)


def fisheye_to_cyl(
    raw: np.ndarray,
    intr: FisheyeIntrinsics,
    rotation: np.ndarray | None,
    spec: ProjectionSpec,
    oversample: int = 1,
) -> CylImage:
    """Project a raw fisheye frame onto the vehicle-aligned cylinder.

    ``rotation`` maps camera-frame directions to the vehicle frame
    (``d_vehicle = rotation @ d_camera``), so a correctly calibrated
    extrinsic yields an image independent of how the camera is mounted.
    With ``oversample > 1`` the cylinder is sampled on a finer grid and
    area-averaged down.
    """
    if spec.hfov > intr.max_fov:
        raise DomainError("cylindrical hfov exceeds the fisheye field of view")
    raw = np.asarray(raw)
    if raw.shape[:2] != (intr.resolution[1], intr.resolution[0]):
        raise DomainError(f"raw image shape {raw.shape} does not match intrinsics")
    rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)

    k = int(oversample)
    sub = (np.arange(k) + 0.5) / k - 0.5
    cols = (np.arange(spec.width)[:, None] + sub[None, :]).ravel()
    rows = (np.arange(spec.height)[:, None] + sub[None, :]).ravel()
    rays_vehicle = pixels_to_rays(spec, cols[None, :], rows[:, None])
    rays_camera = rays_vehicle @ rot  # rot.T @ d for each ray
    u, v, inside = fisheye_project(intr, rays_camera)
    sampled = bilinear_sample(raw, u, v)
    sampled[~inside] = 0.0
    return CylImage(to_uint8(area_downsample(sampled, k)), spec)
