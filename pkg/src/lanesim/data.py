"""Drive logs: on-disk format, frame filtering and steering resampling.

A log directory contains::

    manifest.csv   frame_id,timestamp,speed,steering_deg,blinker_l,blinker_r
    log.json       capture ProjectionSpec, dt, start pose, optional track
    frames/NNNNNN.png
    truth.csv      optional, synthetic logs only: frame_id,x,y,heading

A synthetic log stored without ``frames/`` is re-rendered on demand from
its track and ``truth.csv``.

Timestamps are seconds, speeds m/s, steering is the steering-wheel angle
in degrees on disk (positive left) and radians in memory. Degrees are
written with just enough digits to read back to the identical radian value.
"""
from __future__ import annotations

import csv
import decimal
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from lanesim.augment import MAX_STEERING
from lanesim.dynamics import CAMERA_DT
from lanesim.errors import DataError, DomainError
from lanesim.geometry import CylImage, ProjectionSpec, read_png, write_png
from lanesim.pose import Pose2D

MANIFEST_COLUMNS = ("frame_id", "timestamp", "speed", "steering_deg", "blinker_l", "blinker_r")
TRUTH_COLUMNS = ("frame_id", "x", "y", "heading")

_CTX = decimal.Context(prec=60)
_PI = decimal.Decimal("3.14159265358979323846264338327950288419716939937510582097494")


def _deg_to_rad(text: str) -> float:
    """Degrees text to radians, rounded once (no double rounding)."""
    return float(_CTX.divide(_CTX.multiply(decimal.Decimal(text), _PI), 180))


def _rad_to_deg_text(value: float) -> str:
    """Shortest degree string that reads back to exactly ``value``."""
    deg = math.degrees(value)
    text = repr(deg)
    if _deg_to_rad(text) == value:
        return text
    exact = _CTX.divide(_CTX.multiply(decimal.Decimal(value), 180), _PI)
    for digits in range(17, 40):
        text = format(exact, f".{digits}g")
        if _deg_to_rad(text) == value:
            return text
    raise DataError(f"cannot represent steering angle {value!r} in degrees")


class DirectoryFrames:
    """Frames stored as ``frames/NNNNNN.png`` under a log directory."""

    def __init__(self, root, spec: ProjectionSpec):
        self.root = Path(root)
        self.spec = spec

    def path(self, frame_id: int) -> Path:
        return self.root / "frames" / f"{int(frame_id):06d}.png"

    def __call__(self, frame_id: int) -> CylImage:
        return read_png(self.path(frame_id), self.spec)


@dataclass(eq=False)
class DriveLog:
    """Time-indexed recording; per-frame columns are numpy arrays."""

    frame_ids: np.ndarray
    timestamps: np.ndarray
    speed: np.ndarray
    steering: np.ndarray
    blinker_left: np.ndarray
    blinker_right: np.ndarray
    spec: ProjectionSpec = field(default_factory=ProjectionSpec)
    frames: Callable[[int], CylImage] | None = None
    start_pose: Pose2D = field(default_factory=Pose2D)
    dt: float = CAMERA_DT
    truth_poses: np.ndarray | None = None
    track: dict | None = None
    name: str = "log"

    def __post_init__(self):
        self.frame_ids = np.asarray(self.frame_ids, dtype=np.int64)
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.speed = np.asarray(self.speed, dtype=float)
        self.steering = np.asarray(self.steering, dtype=float)
        self.blinker_left = np.asarray(self.blinker_left, dtype=bool)
        self.blinker_right = np.asarray(self.blinker_right, dtype=bool)
        n = len(self.frame_ids)
        for f in ("timestamps", "speed", "steering", "blinker_left", "blinker_right"):
            if len(getattr(self, f)) != n:
                raise DataError(f"column {f} has {len(getattr(self, f))} rows, expected {n}")
        if self.truth_poses is not None:
            self.truth_poses = np.asarray(self.truth_poses, dtype=float).reshape(n, 3)
        validate_log(self)

    def __len__(self) -> int:
        return len(self.frame_ids)

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    def image(self, k: int) -> CylImage:
        """Frame at position ``k``."""
        if self.frames is None:
            raise DataError(f"log {self.name!r} carries no frames")
        return self.frames(int(self.frame_ids[k]))

    def subset(self, indices) -> "DriveLog":
        idx = np.asarray(indices, dtype=np.intp)
        return replace(
            self,
            frame_ids=self.frame_ids[idx],
            timestamps=self.timestamps[idx],
            speed=self.speed[idx],
            steering=self.steering[idx],
            blinker_left=self.blinker_left[idx],
            blinker_right=self.blinker_right[idx],
            truth_poses=None if self.truth_poses is None else self.truth_poses[idx],
        )


def validate_log(log: DriveLog) -> None:
    if len(log) == 0:
        raise DataError("drive log is empty")
    if not np.all(np.isfinite(log.timestamps)) or not np.all(np.isfinite(log.speed)):
        raise DataError("non-finite timestamp or speed")
    if np.any(np.diff(log.timestamps) <= 0.0):
        k = int(np.argmax(np.diff(log.timestamps) <= 0.0))
        raise DataError(f"timestamps not strictly increasing at frame index {k + 1}")
    if np.any(log.speed < 0.0):
        raise DataError("negative speed in drive log")
    if not np.all(np.isfinite(log.steering)) or np.any(np.abs(log.steering) > MAX_STEERING + 1e-9):
        raise DataError("steering angle outside the mechanical range")
    if len(np.unique(log.frame_ids)) != len(log):
        raise DataError("duplicate frame ids")


class _RenderCache:
    """Picklable lazy renderer keyed by frame id."""

    def __init__(self, track_dict: dict, poses: dict, spec: ProjectionSpec, supersample: int):
        self.track_dict = track_dict
        self.poses = poses
        self.spec = spec
        self.supersample = supersample
        self._truth = None
        self._cache = None

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_truth"] = None
        state["_cache"] = None
        return state

    def __call__(self, frame_id: int) -> CylImage:
        if self._cache is None:
            from lanesim.synthworld.render import render
            from lanesim.synthworld.track import TrackSpec, make_track

            self._truth = make_track(TrackSpec.from_dict(self.track_dict))

            @lru_cache(maxsize=4096)
            def cached(fid):
                return render(self._truth, Pose2D(*self.poses[fid]), self.spec, self.supersample)

            self._cache = cached
        return self._cache(int(frame_id))


def rendered_frames(track_dict: dict, frame_ids, poses, spec: ProjectionSpec, supersample: int = 3):
    mapping = {int(f): tuple(map(float, p)) for f, p in zip(frame_ids, poses)}
    return _RenderCache(track_dict, mapping, spec, supersample)


def save_drive_log(log: DriveLog, path, write_frames: bool = True) -> Path:
    """Write ``log`` in the directory format; frames are materialized."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for i in range(len(log)):
            writer.writerow([
                int(log.frame_ids[i]),
                repr(float(log.timestamps[i])),
                repr(float(log.speed[i])),
                _rad_to_deg_text(float(log.steering[i])),
                int(log.blinker_left[i]),
                int(log.blinker_right[i]),
            ])
    meta = {
        "name": log.name,
        "dt": log.dt,
        "projection": log.spec.to_dict(),
        "start_pose": list(log.start_pose.as_tuple()),
        "track": log.track,
    }
    if isinstance(log.frames, _RenderCache):
        meta["render_supersample"] = log.frames.supersample
    (root / "log.json").write_text(json.dumps(meta, indent=2))
    if log.truth_poses is not None:
        with open(root / "truth.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRUTH_COLUMNS)
            for fid, (x, y, h) in zip(log.frame_ids, log.truth_poses):
                writer.writerow([int(fid), repr(float(x)), repr(float(y)), repr(float(h))])
    if write_frames and log.frames is not None:
        for k in range(len(log)):
            write_png(root / "frames" / f"{int(log.frame_ids[k]):06d}.png", log.image(k))
    return root


def load_drive_log(path, check_frames: bool = True) -> DriveLog:
    """Read and validate a log directory."""
    root = Path(path)
    manifest = root / "manifest.csv"
    if not manifest.is_file():
        raise DataError(f"{manifest} not found")
    meta = {}
    if (root / "log.json").is_file():
        meta = json.loads((root / "log.json").read_text())
    spec = ProjectionSpec.from_dict(meta["projection"]) if "projection" in meta else ProjectionSpec()

    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_COLUMNS:
            raise DataError(f"manifest header must be {','.join(MANIFEST_COLUMNS)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(MANIFEST_COLUMNS):
                raise DataError(f"{manifest}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields")
            try:
                rows.append((
                    int(row[0]), float(row[1]), float(row[2]), _deg_to_rad(row[3].strip()),
                    _parse_flag(row[4]), _parse_flag(row[5]),
                ))
            except (ValueError, decimal.InvalidOperation) as exc:
                raise DataError(f"{manifest}:{lineno}: bad value ({exc!r})") from None
    if not rows:
        raise DataError(f"{manifest} lists no frames")
    cols = list(zip(*rows))

    frames = None
    frame_ids = np.array(cols[0], dtype=np.int64)
    if (root / "frames").is_dir():
        frames = DirectoryFrames(root, spec)
        if check_frames:
            for fid in frame_ids:
                if not frames.path(fid).is_file():
                    raise DataError(f"missing frame file {frames.path(fid)}")

    truth = None
    if (root / "truth.csv").is_file():
        with open(root / "truth.csv", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            by_id = {int(r[0]): (float(r[1]), float(r[2]), float(r[3])) for r in reader}
        try:
            truth = np.array([by_id[int(f)] for f in frame_ids])
        except KeyError as exc:
            raise DataError(f"truth.csv lacks frame {exc}") from None

    if frames is None and truth is not None and meta.get("track"):
        # synthetic log saved without images: re-render on demand
        frames = rendered_frames(meta["track"], frame_ids, truth, spec, int(meta.get("render_supersample", 3)))

    start = meta.get("start_pose", (0.0, 0.0, 0.0))
    return DriveLog(
        frame_ids=frame_ids,
        timestamps=np.array(cols[1]),
        speed=np.array(cols[2]),
        steering=np.array(cols[3]),
        blinker_left=np.array(cols[4]),
        blinker_right=np.array(cols[5]),
        spec=spec,
        frames=frames,
        start_pose=Pose2D(*start),
        dt=float(meta.get("dt", CAMERA_DT)),
        truth_poses=truth,
        track=meta.get("track"),
        name=meta.get("name", root.name),
    )


def _parse_flag(text: str) -> bool:
    text = text.strip().lower()
    if text in ("1", "true"):
        return True
    if text in ("0", "false", ""):
        return False
    raise ValueError(f"bad blinker flag {text!r}")


def log_digest(path) -> str:
    """SHA-256 over a log's manifest and metadata (frames excluded)."""
    h = hashlib.sha256()
    for name in ("manifest.csv", "log.json", "truth.csv"):
        p = Path(path) / name
        if p.is_file():
            h.update(name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# --- filtering -------------------------------------------------------------

def filter_frames(log: DriveLog, min_speed: float = 2.0, blinker_margin: float = 2.0) -> DriveLog:
    """Drop frames near blinker activity or below ``min_speed``.

    A frame is dropped when either blinker is on, when it lies within
    ``blinker_margin`` seconds of a frame with a blinker on, or when its
    speed is below ``min_speed``.
    """
    if min_speed < 0.0 or blinker_margin < 0.0:
        raise DomainError("margins must be non-negative")
    t = log.timestamps
    active = log.blinker_left | log.blinker_right
    near = np.zeros(len(log), dtype=bool)
    if active.any():
        t_on = t[active]
        # nearest active timestamp on either side
        pos = np.searchsorted(t_on, t)
        left = np.where(pos > 0, t - t_on[np.maximum(pos - 1, 0)], np.inf)
        right = np.where(pos < len(t_on), t_on[np.minimum(pos, len(t_on) - 1)] - t, np.inf)
        near = np.minimum(np.abs(left), np.abs(right)) <= blinker_margin + 1e-9
    keep = ~near & ~active & (log.speed >= min_speed)
    return log.subset(np.flatnonzero(keep))


# --- steering-distribution resampling -------------------------------------

@dataclass(frozen=True)
class SelectionPolicy:
    """Resampling of a steering distribution.

    Frames with ``|angle| <= small_angle_threshold`` survive independently
    with probability ``keep_fraction_small``; frames with
    ``|angle| >= large_angle_threshold`` are replicated
    ``round(oversample_factor_large)`` times. Angles are steering-wheel
    radians.
    """

    small_angle_threshold: float = math.radians(5.0)
    keep_fraction_small: float = 1.0
    oversample_factor_large: float = 1.0
    large_angle_threshold: float = math.radians(45.0)
    seed: int = 0

    def __post_init__(self):
        if not (self.small_angle_threshold > 0.0 and self.large_angle_threshold > 0.0):
            raise DomainError("thresholds must be positive")
        if not 0.0 <= self.keep_fraction_small <= 1.0:
            raise DomainError("keep_fraction_small must lie in [0, 1]")
        if not self.oversample_factor_large >= 1.0:
            raise DomainError("oversample_factor_large must be >= 1")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


POLICIES = {
    "original": SelectionPolicy(),
    "selection1": SelectionPolicy(keep_fraction_small=0.5),
    "selection2": SelectionPolicy(keep_fraction_small=0.15),
    "oversampled": SelectionPolicy(keep_fraction_small=0.15, oversample_factor_large=4.0),
}


def _angles(frames) -> np.ndarray:
    if isinstance(frames, DriveLog):
        return frames.steering
    return np.asarray(frames, dtype=float)


def select(frames, policy: SelectionPolicy) -> np.ndarray:
    """Multiset of frame positions (sorted, with repeats) kept by ``policy``."""
    angles = _angles(frames)
    rng = np.random.default_rng(policy.seed)
    mag = np.abs(angles)
    small = mag <= policy.small_angle_threshold
    large = (mag >= policy.large_angle_threshold) & ~small
    draws = rng.random(len(angles))
    counts = np.ones(len(angles), dtype=np.intp)
    counts[small & (draws >= policy.keep_fraction_small)] = 0
    counts[large] = int(round(policy.oversample_factor_large))
    return np.repeat(np.arange(len(angles)), counts)


HIST_EDGES = np.radians(np.arange(-540.0, 541.0, 10.0))


@dataclass(frozen=True)
class DistributionStats:
    count: int
    std: float
    small_count: int
    histogram: np.ndarray
    edges: np.ndarray


def distribution_stats(frames, indices=None, small_threshold: float = math.radians(5.0)) -> DistributionStats:
    """Population std, small-angle count and a fixed 10-degree histogram.

    Out-of-range angles fall into the outermost bins.
    """
    angles = _angles(frames)
    if indices is not None:
        angles = angles[np.asarray(indices, dtype=np.intp)]
    if len(angles) == 0:
        raise DomainError("no angles to summarize")
    clipped = np.clip(angles, HIST_EDGES[0], HIST_EDGES[-1])
    hist, _ = np.histogram(clipped, bins=HIST_EDGES)
    return DistributionStats(
        count=int(len(angles)),
        std=float(np.std(angles - angles[0])),  # shift keeps constant input exactly 0
        small_count=int(np.count_nonzero(np.abs(angles) <= small_threshold)),
        histogram=hist,
        edges=HIST_EDGES,
    )
