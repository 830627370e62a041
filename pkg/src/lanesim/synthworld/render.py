"""Analytic ray-cast renderer for flat-ground tracks.

Ground rays are intersected with z = 0 and shaded from the track's
ground truth (asphalt, lane markings, cone decals, grass). Sky rays are
shaded only by world azimuth and elevation, i.e. they sit at infinite
distance, with a band of distant hills so rotations stay observable.
Cones additionally get a vertical billboard, which deliberately breaks
the flat-ground assumption.
"""
from __future__ import annotations

import math

import numpy as np

from lanesim.geometry import (
    CylImage,
    FisheyeIntrinsics,
    ProjectionSpec,
    area_downsample,
    fisheye_unproject,
    pixels_to_rays,
    to_uint8,
)
from lanesim.pose import Pose2D
from lanesim.synthworld.track import GroundTruth, TrackSpec, make_track

ASPHALT = np.array([96.0, 96.0, 102.0])
MARKING = np.array([236.0, 236.0, 228.0])
GRASS = np.array([72.0, 128.0, 56.0])
CONE = np.array([250.0, 112.0, 24.0])
HILL = np.array([92.0, 104.0, 126.0])
SKY = np.array([150.0, 190.0, 236.0])

MARKING_WIDTH = 0.15
DASH_PERIOD = 9.0
DASH_LENGTH = 3.0
CONE_RADIUS = 0.18
CONE_HEIGHT = 0.7
DECAL_RADIUS = 0.3
MAX_RANGE = 250.0


def _as_truth(track) -> GroundTruth:
    return make_track(track) if isinstance(track, TrackSpec) else track


def _grass(x, y):
    # textures are even in y so a view straight down the x axis is mirror-symmetric
    mod = 12.0 * np.sin(0.31 * x) * np.cos(0.27 * y) + 7.0 * np.sin(0.11 * x) * np.cos(0.13 * y)
    return GRASS[None, :] + mod[:, None] * np.array([0.6, 1.0, 0.4])[None, :]


def _asphalt(x, y):
    mod = 6.0 * np.sin(0.45 * x) * np.cos(0.35 * y)
    return ASPHALT[None, :] + mod[:, None]


def _sky(wx, wy, wz):
    """Sky gradient with a hill ridge; varies with world azimuth so that
    yaw is observable above the horizon."""
    az = np.arctan2(wy, wx)
    rho = np.hypot(wx, wy)
    tan_el = wz / np.maximum(rho, 1e-12)
    ridge = 0.045 + 0.025 * np.cos(3.0 * az) + 0.015 * np.cos(7.0 * az)
    sky = SKY[None, :] - (40.0 * np.clip(tan_el, 0.0, 1.0))[:, None] * np.array([1.0, 0.6, 0.0])
    sky = sky + (8.0 * np.cos(2.0 * az))[:, None]
    hill = HILL[None, :] + (10.0 * np.cos(5.0 * az))[:, None]
    return np.where((tan_el < ridge)[:, None], hill, sky)


def _cone_positions(truth: GroundTruth) -> np.ndarray:
    out = []
    for cone in truth.spec.cones:
        p = truth.pose_at(cone.s).moved(left=cone.e)
        out.append((p.x, p.y))
    return np.array(out).reshape(-1, 2)


class _BearingIndex:
    """Sorted horizontal bearings of a set of directions, for fast sector queries."""

    def __init__(self, dx, dy):
        az = np.arctan2(dy, dx)
        self.order = np.argsort(az, kind="stable")
        self.sorted = az[self.order]

    def near(self, tx: float, ty: float, radius: float) -> np.ndarray:
        """Indices whose bearing can reach a disc of ``radius`` at (tx, ty);
        everything when the origin is inside the disc."""
        dist = math.hypot(tx, ty)
        if dist <= radius * 1.01:
            return np.sort(self.order)
        centre = math.atan2(ty, tx)
        half = math.asin(radius / dist) + 1e-6
        lo, hi = centre - half, centre + half
        parts = []
        for a, b in ((lo, hi), (lo + 2 * math.pi, hi + 2 * math.pi), (lo - 2 * math.pi, hi - 2 * math.pi)):
            i, j = np.searchsorted(self.sorted, [a, b])
            if j > i:
                parts.append(self.order[i:j])
        return np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.intp)


def shade_rays(
    truth: GroundTruth, pose: Pose2D, camera_height: float, rays, objects: bool = True
) -> np.ndarray:
    """Colors (N, 3) in [0, 255] for vehicle-frame rays (N, 3).

    ``objects=False`` leaves out the upright cone billboards, which are the
    only scene content that violates the flat-ground model.
    """
    spec = truth.spec
    rays = np.asarray(rays, dtype=float).reshape(-1, 3)
    c, s = np.cos(pose.heading), np.sin(pose.heading)
    wx = c * rays[:, 0] - s * rays[:, 1]
    wy = s * rays[:, 0] + c * rays[:, 1]
    wz = rays[:, 2]
    colors = np.empty((rays.shape[0], 3))

    ground = wz < 0.0
    sky = ~ground
    if sky.any():
        colors[sky] = _sky(wx[sky], wy[sky], wz[sky])

    t_ground = np.full(rays.shape[0], np.inf)
    if ground.any():
        t = camera_height / -wz[ground]
        t_ground[ground] = t
        gx = pose.x + t * wx[ground]
        gy = pose.y + t * wy[ground]
        dist = t * np.hypot(wx[ground], wy[ground])
        col = _grass(gx, gy)

        near = dist <= MAX_RANGE
        if near.any():
            nx, ny = gx[near], gy[near]
            s_arc, e, over = truth.project(
                nx, ny, near=(pose.x, pose.y), max_range=MAX_RANGE, cutoff=spec.road_half_width + 1.0
            )
            road = (np.abs(e) <= spec.road_half_width) & (over <= 0.0)
            ncol = col[near]
            ncol[road] = _asphalt(nx[road], ny[road])

            masked = np.array([seg.masked for seg in truth.segments])[truth.segment_index(s_arc)]
            dash_on = np.mod(s_arc, DASH_PERIOD) < DASH_LENGTH
            for side, style in ((1.0, spec.marking_left), (-1.0, spec.marking_right)):
                if style == "none":
                    continue
                line = road & ~masked & (np.abs(e - side * spec.lane_width / 2.0) <= MARKING_WIDTH / 2.0)
                if style == "dashed":
                    line &= dash_on
                ncol[line] = MARKING

            cones = _cone_positions(truth)
            index = _BearingIndex(nx - pose.x, ny - pose.y) if len(cones) else None
            for cx, cy in cones:
                cand = index.near(cx - pose.x, cy - pose.y, DECAL_RADIUS)
                decal = cand[np.hypot(nx[cand] - cx, ny[cand] - cy) <= DECAL_RADIUS]
                ncol[decal] = CONE
            col[near] = ncol
        colors[ground] = col

    # vertical cone billboards
    cones = _cone_positions(truth) if objects else ()
    index = _BearingIndex(wx, wy) if len(cones) else None
    for cx, cy in cones:
        if np.hypot(cx - pose.x, cy - pose.y) > MAX_RANGE:
            continue
        cand = index.near(cx - pose.x, cy - pose.y, CONE_RADIUS)
        rx, ry, rz = wx[cand], wy[cand], wz[cand]
        ox, oy = pose.x - cx, pose.y - cy
        a = rx * rx + ry * ry
        b = 2.0 * (ox * rx + oy * ry)
        cc = ox * ox + oy * oy - CONE_RADIUS ** 2
        disc = b * b - 4.0 * a * cc
        with np.errstate(invalid="ignore", divide="ignore"):
            tau = (-b - np.sqrt(disc)) / (2.0 * a)
        z = camera_height + tau * rz
        hit = (disc >= 0.0) & (tau > 0.0) & (z >= 0.0) & (z <= CONE_HEIGHT) & (tau < t_ground[cand])
        colors[cand[hit]] = CONE

    return np.clip(colors, 0.0, 255.0)


def render(
    track, pose: Pose2D, spec: ProjectionSpec, supersample: int = 3, objects: bool = True
) -> CylImage:
    """Render the cylindrical view from a camera at ``pose``.

    Each pixel averages a ``supersample x supersample`` grid of rays.
    """
    truth = _as_truth(track)
    k = int(supersample)
    sub = (np.arange(k) + 0.5) / k - 0.5
    cols = (np.arange(spec.width)[:, None] + sub[None, :]).ravel()
    rows = (np.arange(spec.height)[:, None] + sub[None, :]).ravel()
    rays = pixels_to_rays(spec, cols[None, :], rows[:, None])
    colors = shade_rays(truth, pose, spec.camera_height, rays.reshape(-1, 3), objects)
    fine = colors.reshape(spec.height * k, spec.width * k, 3)
    return CylImage(to_uint8(area_downsample(fine, k)), spec)


def render_fisheye(
    track,
    pose: Pose2D,
    intr: FisheyeIntrinsics,
    rotation: np.ndarray | None = None,
    camera_height: float = 0.5,
) -> np.ndarray:
    """Raw equidistant fisheye frame; ``rotation`` maps camera to vehicle frame."""
    truth = _as_truth(track)
    w, h = intr.resolution
    v, u = np.mgrid[0:h, 0:w]
    rays_cam = fisheye_unproject(intr, u, v)
    rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    rays_vehicle = rays_cam @ rot.T
    colors = shade_rays(truth, pose, camera_height, rays_vehicle.reshape(-1, 3)).reshape(h, w, 3)
    angle = np.hypot(u - intr.principal_point[0], v - intr.principal_point[1]) / intr.focal
    colors[angle > intr.max_fov / 2.0] = 0.0
    return to_uint8(colors)
