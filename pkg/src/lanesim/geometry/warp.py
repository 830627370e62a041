"""Viewpoint warps on cylindrical images.

Everything below the horizon is assumed to lie on the ground plane and
everything above it at infinite distance. Under that model a virtual
camera displaced by ``de`` meters to the left and yawed by ``dtheta``
radians to the left can be synthesized from a single recorded frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from lanesim.errors import EnvelopeError
from lanesim.geometry.image import CylImage, bilinear_sample, to_uint8
from lanesim.geometry.projection import (
    ProjectionSpec,
    pixel_grid,
    pixels_to_rays,
    rays_to_pixels,
)
from lanesim.pose import PoseOffset

#: Offsets are rounded to these quanta before a map is built (cache key).
DE_QUANTUM = 1e-4
DTHETA_QUANTUM = 1e-5


@dataclass(frozen=True)
class WarpEnvelope:
    """Largest offsets the warp model is trusted for (m, rad)."""

    max_de: float = 2.0
    max_dtheta: float = math.radians(20.0)

    def contains(self, offset: PoseOffset) -> bool:
        return abs(offset.de) <= self.max_de and abs(offset.dtheta) <= self.max_dtheta


DEFAULT_ENVELOPE = WarpEnvelope()


@dataclass(frozen=True, eq=False)
class WarpMap:
    """Per-destination-pixel source coordinates.

    ``in_field`` is False where the source ray falls outside the source
    field of view (the OUT_OF_FIELD marker); those pixels are filled by
    edge replication when the map is applied.
    """

    src_col: np.ndarray
    src_row: np.ndarray
    in_field: np.ndarray
    spec: ProjectionSpec
    source_spec: ProjectionSpec

    def __post_init__(self):
        for name in ("src_col", "src_row", "in_field"):
            arr = getattr(self, name)
            if arr.shape != self.spec.shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {self.spec.shape}")
            arr.setflags(write=False)
        if not (np.all(np.isfinite(self.src_col)) and np.all(np.isfinite(self.src_row))):
            raise ValueError("warp map contains non-finite coordinates")

    @property
    def valid(self) -> np.ndarray:
        """Destination pixels whose source lies inside the source image."""
        w, h = self.source_spec.width, self.source_spec.height
        tol = 1e-6  # pixels; absorbs rounding in composed maps
        return (
            self.in_field
            & (self.src_col >= -tol) & (self.src_col <= w - 1.0 + tol)
            & (self.src_row >= -tol) & (self.src_row <= h - 1.0 + tol)
        )

    def apply(self, image: CylImage) -> CylImage:
        if image.spec != self.source_spec:
            raise ValueError("image geometry does not match the map's source spec")
        sampled = bilinear_sample(image.pixels, self.src_col, self.src_row)
        valid = self.valid
        if image.valid is not None:
            src_valid = bilinear_sample(image.valid[..., None].astype(float), self.src_col, self.src_row)
            valid = valid & (src_valid[..., 0] > 0.999)
        return CylImage(to_uint8(sampled), self.spec, valid)


def identity_map(spec: ProjectionSpec) -> WarpMap:
    cols, rows = pixel_grid(spec)
    return WarpMap(cols, rows, np.ones(spec.shape, dtype=bool), spec, spec)


def _shift_map(spec: ProjectionSpec, dtheta: float) -> WarpMap:
    cols, rows = pixel_grid(spec)
    src_col = cols - dtheta * spec.cols_per_rad
    half = spec.width / 2.0
    in_field = np.abs(src_col + 0.5 - half) <= half
    return WarpMap(src_col, rows, in_field, spec, spec)


def yaw_shift_map(spec: ProjectionSpec, dtheta: float) -> WarpMap:
    return _shift_map(spec, dtheta)


def yaw_shift(img: CylImage, dtheta: float) -> CylImage:
    """View from the same position with heading rotated ``dtheta`` to the left.

    A pure column translation: image content moves ``dtheta * width / hfov``
    columns to the right; vacated columns replicate the edge.
    """
    return _shift_map(img.spec, dtheta).apply(img)


def _offset_map(
    src: ProjectionSpec, dst: ProjectionSpec, de: float, dtheta: float
) -> WarpMap:
    cols, rows = pixel_grid(dst)
    rays = pixels_to_rays(dst, cols, rows)
    c, s = math.cos(dtheta), math.sin(dtheta)
    # rotate destination rays into the source camera's heading
    rx = c * rays[..., 0] - s * rays[..., 1]
    ry = s * rays[..., 0] + c * rays[..., 1]
    rz = rays[..., 2]
    ground = rz < 0.0

    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ground, -dst.camera_height / np.where(ground, rz, -1.0), 1.0)
    pts = np.stack([
        np.where(ground, t * rx, rx),
        np.where(ground, t * ry + de, ry),
        np.where(ground, -dst.camera_height, rz),
    ], axis=-1)
    src_col, src_row, in_field = rays_to_pixels(src, pts)

    if src == dst:
        # sky: exact column translation, keeps above-horizon rows bit-stable
        sky = ~ground
        shifted = cols - dtheta * dst.cols_per_rad
        src_col = np.where(sky, shifted, src_col)
        src_row = np.where(sky, rows, src_row)
        half = dst.width / 2.0
        in_field = np.where(sky, np.abs(shifted + 0.5 - half) <= half, in_field)

    src_col = np.nan_to_num(src_col, nan=0.0)
    src_row = np.nan_to_num(src_row, nan=0.0)
    return WarpMap(src_col, src_row, in_field, dst, src)


def lateral_warp_map(spec: ProjectionSpec, de: float) -> WarpMap:
    if de == 0.0:
        return identity_map(spec)
    return _offset_map(spec, spec, de, 0.0)


def lateral_warp(img: CylImage, de: float) -> CylImage:
    """View from a camera translated ``de`` meters to the left.

    Rows above the horizon are copied unchanged; ground pixels are
    re-projected through the ground plane at ``-camera_height``.
    """
    return lateral_warp_map(img.spec, de).apply(img)


@lru_cache(maxsize=512)
def _cached_offset_map(src: ProjectionSpec, dst: ProjectionSpec, qe: int, qtheta: int) -> WarpMap:
    de = qe * DE_QUANTUM
    dtheta = qtheta * DTHETA_QUANTUM
    if qe == 0 and qtheta == 0 and src == dst:
        return identity_map(dst)
    return _offset_map(src, dst, de, dtheta)


def compose_offset_warp(
    spec: ProjectionSpec,
    offset: PoseOffset,
    dst_spec: ProjectionSpec | None = None,
    envelope: WarpEnvelope | None = DEFAULT_ENVELOPE,
) -> WarpMap:
    """Single sampling map for a lateral offset followed by a yaw.

    Equivalent to ``yaw_shift(lateral_warp(img, de), dtheta)`` but resampled
    once. ``dst_spec`` optionally re-projects into a different cylindrical
    geometry (used by calibration sweeps). Maps are cached by the offset
    rounded to ``DE_QUANTUM``/``DTHETA_QUANTUM``.
    """
    if envelope is not None and not envelope.contains(offset):
        raise EnvelopeError(
            f"offset de={offset.de:.3f} m, dtheta={math.degrees(offset.dtheta):.2f} deg "
            f"outside warp envelope"
        )
    qe = int(round(offset.de / DE_QUANTUM))
    qtheta = int(round(offset.dtheta / DTHETA_QUANTUM))
    return _cached_offset_map(spec, dst_spec or spec, qe, qtheta)


def apply_offset(img: CylImage, offset: PoseOffset, **kwargs) -> CylImage:
    return compose_offset_warp(img.spec, offset, **kwargs).apply(img)


def reproject(img: CylImage, dst_spec: ProjectionSpec) -> CylImage:
    """Resample an image into another cylindrical geometry (same viewpoint)."""
    if dst_spec == img.spec:
        return img
    return compose_offset_warp(img.spec, PoseOffset(), dst_spec=dst_spec).apply(img)
