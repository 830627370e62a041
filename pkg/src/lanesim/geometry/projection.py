"""Cylindrical image geometry.

Pixel coordinates are fractional array indices: pixel ``(col, row)`` has
its center at integer ``col``/``row``, so a W-wide image spans columns
``[-0.5, W - 0.5]``. Columns are uniform in azimuth (positive to the
left); rows are linear in tan(elevation), which keeps the horizon a single
straight row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from lanesim.errors import DomainError

#: Slack (rad) so rays through the outer pixel edges count as in field.
_EDGE_TOL = 1e-12

#: Returned by :func:`ray_to_pixel` for rays outside the horizontal field.
OUT_OF_FIELD = None


@dataclass(frozen=True)
class ProjectionSpec:
    """Geometry of a cylindrical crop.

    Units: ``width``/``height`` in pixels, ``hfov`` in radians,
    ``horizon_row`` in pixel rows measured from the top edge of the image,
    ``camera_height`` in meters, ``vertical_scale`` in pixels per unit
    tan(elevation). ``vertical_scale`` defaults to ``width / hfov`` which
    gives square pixels at the image center.
    """

    width: int = 200
    height: int = 66
    hfov: float = math.pi / 2
    horizon_row: float = 0.22 * 66
    camera_height: float = 0.5
    vertical_scale: float | None = None

    def __post_init__(self):
        if not 0.0 < self.hfov < math.pi:
            raise DomainError(f"hfov must lie in (0, pi), got {self.hfov}")
        if self.vertical_scale is None:
            object.__setattr__(self, "vertical_scale", self.width / self.hfov)
        if int(self.width) != self.width or int(self.height) != self.height:
            raise DomainError("width and height must be integers")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if self.width <= 0 or self.height <= 0:
            raise DomainError("image dimensions must be positive")
        if not 0.0 <= self.horizon_row <= self.height:
            raise DomainError("horizon_row must lie within the image")
        if not self.camera_height > 0.0:
            raise DomainError("camera_height must be positive")
        if not self.vertical_scale > 0.0:
            raise DomainError("vertical_scale must be positive")

    @property
    def rad_per_col(self) -> float:
        return self.hfov / self.width

    @property
    def cols_per_rad(self) -> float:
        return self.width / self.hfov

    @property
    def horizon_center(self) -> float:
        """Fractional row index (center convention) of zero elevation."""
        return self.horizon_row - 0.5

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def with_fields(self, **changes) -> "ProjectionSpec":
        """Copy with fields replaced; a changed hfov/width re-derives the
        default vertical scale unless one is given explicitly."""
        if "vertical_scale" not in changes and ({"hfov", "width"} & changes.keys()):
            if math.isclose(self.vertical_scale, self.width / self.hfov):
                changes["vertical_scale"] = None
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectionSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"hfov_deg"}
        if unknown:
            raise DomainError(f"unknown projection keys: {sorted(unknown)}")
        data = dict(data)
        if "hfov_deg" in data:
            data["hfov"] = math.radians(data.pop("hfov_deg"))
        return cls(**data)

    @classmethod
    def preset(cls, name: str) -> "ProjectionSpec":
        """Named crops: ``fov90`` (default 200x66) and ``fov135`` (wider,
        less sky cropped, same angular resolution)."""
        if name == "fov90":
            return cls()
        if name == "fov135":
            base = cls()
            return cls(
                width=300,
                height=80,
                hfov=math.radians(135.0),
                horizon_row=80 - (66 - base.horizon_row),
                camera_height=base.camera_height,
            )
        raise DomainError(f"unknown projection preset {name!r}")


def col_to_azimuth(spec: ProjectionSpec, col):
    return (spec.width / 2.0 - col - 0.5) * spec.rad_per_col


def azimuth_to_col(spec: ProjectionSpec, azimuth):
    return spec.width / 2.0 - 0.5 - azimuth * spec.cols_per_rad


def row_to_tan_elevation(spec: ProjectionSpec, row):
    return (spec.horizon_row - row - 0.5) / spec.vertical_scale


def tan_elevation_to_row(spec: ProjectionSpec, tan_el):
    return spec.horizon_row - 0.5 - tan_el * spec.vertical_scale


def pixels_to_rays(spec: ProjectionSpec, cols, rows) -> np.ndarray:
    """Unit rays (camera frame) for arrays of pixel coordinates; no bounds check."""
    az = col_to_azimuth(spec, np.asarray(cols, dtype=float))
    tan_el = row_to_tan_elevation(spec, np.asarray(rows, dtype=float))
    az, tan_el = np.broadcast_arrays(az, tan_el)
    rays = np.stack([np.cos(az), np.sin(az), tan_el], axis=-1)
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    return rays


def rays_to_pixels(spec: ProjectionSpec, rays) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project rays (or points) to fractional pixels.

    Returns ``(cols, rows, in_field)``. Columns are extrapolated linearly in
    azimuth outside the field so callers can clamp for edge replication;
    rays with no horizontal component get NaN coordinates.
    """
    rays = np.asarray(rays, dtype=float)
    x, y, z = rays[..., 0], rays[..., 1], rays[..., 2]
    rho = np.hypot(x, y)
    az = np.arctan2(y, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        tan_el = np.where(rho > 0.0, z / np.where(rho > 0.0, rho, 1.0), np.nan)
    cols = np.where(rho > 0.0, azimuth_to_col(spec, az), np.nan)
    rows = tan_elevation_to_row(spec, tan_el)
    in_field = (rho > 0.0) & (np.abs(az) <= spec.hfov / 2.0 + _EDGE_TOL)
    return cols, rows, in_field


def pixel_to_ray(spec: ProjectionSpec, px) -> np.ndarray:
    """Unit ray (x forward, y left, z up) through pixel ``(col, row)``."""
    col, row = float(px[0]), float(px[1])
    if not (-0.5 <= col <= spec.width - 0.5 and -0.5 <= row <= spec.height - 0.5):
        raise DomainError(f"pixel {px} outside {spec.width}x{spec.height} image")
    return pixels_to_rays(spec, col, row)


def ray_to_pixel(spec: ProjectionSpec, ray):
    """Fractional ``(col, row)`` of a ray, or :data:`OUT_OF_FIELD`."""
    cols, rows, in_field = rays_to_pixels(spec, np.asarray(ray, dtype=float))
    if not bool(in_field):
        return OUT_OF_FIELD
    return (float(cols), float(rows))


def pixel_grid(spec: ProjectionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Column and row index arrays of shape (height, width)."""
    rows, cols = np.mgrid[0 : spec.height, 0 : spec.width]
    return cols.astype(float), rows.astype(float)


def yaw_rotation(angle: float) -> np.ndarray:
    """Rotation about +z (left-positive yaw)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_ypr(yaw: float = 0.0, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    """Camera-to-vehicle rotation from yaw (about z), pitch (about y), roll (about x)."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx
