"""Piecewise straight/arc tracks and their arclength ground truth."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lanesim.errors import ExtrapolationError, TrackError
from lanesim.pose import Pose2D, wrap_angle

MARKING_STYLES = ("solid", "dashed", "none")
QUERY_RANGE = 50.0


@dataclass(frozen=True)
class Segment:
    """``straight`` (``length`` m) or ``arc`` (``radius`` m, signed ``angle`` rad,
    positive turning left)."""

    kind: str
    length: float = 0.0
    radius: float = 0.0
    angle: float = 0.0
    heading: float | None = None  # optional declared start heading, checked for continuity
    masked: bool = False  # lane markings hidden on this segment

    @property
    def curvature(self) -> float:
        if self.kind == "straight":
            return 0.0
        return math.copysign(1.0 / self.radius, self.angle)

    @property
    def arclength(self) -> float:
        return self.length if self.kind == "straight" else self.radius * abs(self.angle)

    def to_dict(self) -> dict:
        if self.kind == "straight":
            out = {"straight": self.length}
        else:
            out = {"arc": {"radius": self.radius, "angle_deg": math.degrees(self.angle)}}
        if self.heading is not None:
            out["heading_deg"] = math.degrees(self.heading)
        if self.masked:
            out["masked"] = True
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Segment":
        heading = data.get("heading_deg")
        heading = None if heading is None else math.radians(heading)
        masked = bool(data.get("masked", False))
        if "straight" in data:
            return cls("straight", length=float(data["straight"]), heading=heading, masked=masked)
        if "arc" in data:
            arc = data["arc"]
            angle = arc["angle"] if "angle" in arc else math.radians(arc["angle_deg"])
            return cls("arc", radius=float(arc["radius"]), angle=float(angle), heading=heading, masked=masked)
        raise TrackError(f"unknown segment {data!r}")


@dataclass(frozen=True)
class Cone:
    s: float
    e: float


@dataclass(frozen=True)
class TrackSpec:
    segments: tuple[Segment, ...]
    lane_width: float = 3.5
    shoulder: float = 0.5
    marking_left: str = "solid"
    marking_right: str = "solid"
    cones: tuple[Cone, ...] = ()
    start: Pose2D = field(default_factory=Pose2D)
    name: str = "track"

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "cones", tuple(self.cones))
        if not self.segments:
            raise TrackError("track has no segments")
        if not self.lane_width > 0.0 or self.shoulder < 0.0:
            raise TrackError("bad lane geometry")
        for style in (self.marking_left, self.marking_right):
            if style not in MARKING_STYLES:
                raise TrackError(f"unknown marking style {style!r}")
        for seg in self.segments:
            if seg.kind == "straight":
                if not seg.length > 0.0:
                    raise TrackError("straight segments need a positive length")
            elif seg.kind == "arc":
                if not seg.radius > self.lane_width / 2.0:
                    raise TrackError(f"arc radius {seg.radius} m is tighter than half the lane")
                if seg.angle == 0.0 or abs(seg.angle) > 2.0 * math.pi:
                    raise TrackError("arc angle must be nonzero and at most a full turn")
            else:
                raise TrackError(f"unknown segment kind {seg.kind!r}")

    @property
    def road_half_width(self) -> float:
        return self.lane_width / 2.0 + self.shoulder

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lane_width": self.lane_width,
            "shoulder": self.shoulder,
            "markings": {"left": self.marking_left, "right": self.marking_right},
            "start": {"x": self.start.x, "y": self.start.y, "heading_deg": math.degrees(self.start.heading)},
            "segments": [s.to_dict() for s in self.segments],
            "cones": [{"s": c.s, "e": c.e} for c in self.cones],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrackSpec":
        markings = data.get("markings", {})
        start = data.get("start", {})
        return cls(
            segments=tuple(Segment.from_dict(s) for s in data["segments"]),
            lane_width=float(data.get("lane_width", 3.5)),
            shoulder=float(data.get("shoulder", 0.5)),
            marking_left=markings.get("left", "solid"),
            marking_right=markings.get("right", "solid"),
            cones=tuple(Cone(float(c["s"]), float(c["e"])) for c in data.get("cones", ())),
            start=Pose2D(
                float(start.get("x", 0.0)),
                float(start.get("y", 0.0)),
                math.radians(float(start.get("heading_deg", 0.0))),
            ),
            name=data.get("name", "track"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "TrackSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrackQuery:
    """Nearest centerline point for a pose.

    ``e`` is the signed lateral offset of the pose (+ left of the
    centerline), ``theta`` the heading error (+ rotated left) and
    ``curvature`` the centerline curvature at ``s``.
    """

    s: float
    e: float
    theta: float
    curvature: float


class GroundTruth:
    """Arclength-parameterized centerline of a :class:`TrackSpec`."""

    def __init__(self, spec: TrackSpec):
        self.spec = spec
        starts = []
        pose = spec.start
        s = 0.0
        for seg in spec.segments:
            if seg.heading is not None and abs(wrap_angle(seg.heading - pose.heading)) > 1e-9:
                raise TrackError(
                    f"tangent discontinuity: segment declares heading "
                    f"{math.degrees(seg.heading):.3f} deg, track arrives at "
                    f"{math.degrees(pose.heading):.3f} deg"
                )
            starts.append((s, pose))
            pose = _advance(pose, seg, seg.arclength)
            s += seg.arclength
        self.length = s
        self.end = pose
        self._starts = starts
        self._s0 = np.array([st[0] for st in starts])
        self.closed = (
            math.hypot(pose.x - spec.start.x, pose.y - spec.start.y) < 1e-6
            and abs(wrap_angle(pose.heading - spec.start.heading)) < 1e-9
        )
        self._bounds = [_segment_bounds(p, seg) for (_, p), seg in zip(starts, spec.segments)]

    @property
    def segments(self) -> tuple[Segment, ...]:
        return self.spec.segments

    def _locate(self, s: float) -> int:
        if self.closed:
            s = s % self.length
        i = int(np.searchsorted(self._s0, s, side="right")) - 1
        return min(max(i, 0), len(self._s0) - 1)

    def pose_at(self, s: float) -> Pose2D:
        """Centerline pose at arclength ``s`` (straight extrapolation past the ends)."""
        if self.closed:
            s = s % self.length
        i = self._locate(s)
        s0, p0 = self._starts[i]
        seg = self.segments[i]
        ds = s - s0
        if ds < 0.0 or ds > seg.arclength:
            base = p0 if ds < 0.0 else _advance(p0, seg, seg.arclength)
            extra = ds if ds < 0.0 else ds - seg.arclength
            return base.moved(forward=extra)
        return _advance(p0, seg, ds)

    def segment_index(self, s):
        """Vectorized segment lookup for arclengths."""
        s = np.asarray(s, dtype=float)
        if self.closed:
            s = np.mod(s, self.length)
        idx = np.searchsorted(self._s0, s, side="right") - 1
        return np.clip(idx, 0, len(self._s0) - 1)

    def curvature_at(self, s: float) -> float:
        if not self.closed and (s < 0.0 or s > self.length):
            return 0.0
        return self.segments[self._locate(s)].curvature

    def project(
        self, xs, ys, near=None, max_range=None, cutoff=None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest-centerline query for arrays of points.

        Returns ``(s, e, overshoot)`` where ``overshoot`` is how far the
        point lies beyond an open track's ends (0 inside). With ``near`` and
        ``max_range`` only segments within range of ``near`` are searched.
        With ``cutoff`` a segment is only tested against points within
        ``cutoff`` of its bounding circle, and points farther than ``cutoff``
        from the centerline get ``e = inf``.
        """
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        best_d = np.full(xs.shape, np.inf)
        best_s = np.zeros(xs.shape)
        best_e = np.full(xs.shape, np.inf)
        best_over = np.zeros(xs.shape)
        last = len(self.segments) - 1
        for i, ((s0, p0), seg) in enumerate(zip(self._starts, self.segments)):
            (cx, cy), rad = self._bounds[i]
            if near is not None and max_range is not None:
                if math.hypot(cx - near[0], cy - near[1]) > rad + max_range:
                    continue
            if cutoff is not None:
                idx = np.flatnonzero(np.hypot(xs - cx, ys - cy) <= rad + cutoff)
                if idx.size == 0:
                    continue
                px, py = xs[idx], ys[idx]
            else:
                idx = slice(None)
                px, py = xs, ys
            ds, e, raw_over = _project_segment(p0, seg, px, py)
            d = e * e + raw_over * raw_over
            over = np.zeros_like(raw_over)
            if not self.closed:
                if i == 0:
                    over = np.maximum(over, -raw_over)
                if i == last:
                    over = np.maximum(over, raw_over)
            take = d < best_d[idx]
            best_d[idx] = np.where(take, d, best_d[idx])
            best_s[idx] = np.where(take, s0 + ds, best_s[idx])
            best_e[idx] = np.where(take, e, best_e[idx])
            best_over[idx] = np.where(take, over, best_over[idx])
        if cutoff is not None:
            # beyond the cutoff the true nearest segment may have been skipped
            best_e[best_d > cutoff * cutoff] = np.inf
        return best_s, best_e, best_over

    def query(self, pose: Pose2D, tolerance: float = 0.5) -> TrackQuery:
        """Cross-track and heading error of ``pose``.

        Raises :class:`ExtrapolationError` when the pose lies beyond the
        ends of an open track by more than ``tolerance`` meters.
        """
        s, e, over = self.project(
            np.array([pose.x]), np.array([pose.y]), near=(pose.x, pose.y), max_range=QUERY_RANGE
        )
        if not np.isfinite(e[0]):
            raise ExtrapolationError(f"pose {pose} is more than {QUERY_RANGE} m from the track")
        if over[0] > tolerance:
            raise ExtrapolationError(f"pose {pose} lies {over[0]:.2f} m beyond the track")
        s = float(s[0])
        tangent = self.pose_at(min(max(s, 0.0), self.length) if not self.closed else s)
        return TrackQuery(s, float(e[0]), wrap_angle(pose.heading - tangent.heading), self.curvature_at(s))


def make_track(spec: TrackSpec) -> GroundTruth:
    return GroundTruth(spec)


def _advance(pose: Pose2D, seg: Segment, ds: float) -> Pose2D:
    if seg.kind == "straight":
        return pose.moved(forward=ds)
    k = seg.curvature
    dh = ds * k
    # chord in the start frame
    forward = math.sin(dh) / k
    left = (1.0 - math.cos(dh)) / k
    return pose.moved(forward=forward, left=left, turn=dh)


def _segment_bounds(p0: Pose2D, seg: Segment):
    if seg.kind == "straight":
        end = p0.moved(forward=seg.length)
        return ((p0.x + end.x) / 2.0, (p0.y + end.y) / 2.0), seg.length / 2.0
    center = p0.moved(left=1.0 / seg.curvature)
    return (center.x, center.y), seg.radius


def _project_segment(p0: Pose2D, seg: Segment, xs, ys):
    """Per-segment projection: (distance along, lateral e, overshoot).

    Overshoot is negative before the segment start and positive past its end.
    """
    c, s = math.cos(p0.heading), math.sin(p0.heading)
    dx = xs - p0.x
    dy = ys - p0.y
    if seg.kind == "straight":
        along = c * dx + s * dy
        lat = -s * dx + c * dy
        clamped = np.clip(along, 0.0, seg.length)
        return clamped, lat, along - clamped

    k = seg.curvature
    sign = 1.0 if k > 0 else -1.0
    r = seg.radius
    # center lies 1/k to the left of the start pose
    cx = p0.x - s / k
    cy = p0.y + c / k
    vx = xs - cx
    vy = ys - cy
    dist = np.hypot(vx, vy)
    phi0 = math.atan2(p0.y - cy, p0.x - cx)
    u = np.mod(sign * (np.arctan2(vy, vx) - phi0), 2.0 * math.pi)
    span = abs(seg.angle)
    on_arc = u <= span
    past = u - span
    before = 2.0 * math.pi - u
    to_end = on_arc | (~on_arc & (past <= before))
    along = np.where(on_arc, r * u, np.where(to_end, seg.arclength, 0.0))
    e_on = sign * (r - dist)
    # off-arc points: project onto the tangent line at the nearest end
    end_pose = _advance(p0, seg, seg.arclength)
    ref = np.where(to_end, 1.0, 0.0)
    ex = np.where(ref > 0, end_pose.x, p0.x)
    ey = np.where(ref > 0, end_pose.y, p0.y)
    eh = np.where(ref > 0, end_pose.heading, p0.heading)
    tdx = xs - ex
    tdy = ys - ey
    t_along = np.cos(eh) * tdx + np.sin(eh) * tdy
    t_lat = -np.sin(eh) * tdx + np.cos(eh) * tdy
    e = np.where(on_arc, e_on, t_lat)
    over = np.where(on_arc, 0.0, t_along)
    return along, e, over
