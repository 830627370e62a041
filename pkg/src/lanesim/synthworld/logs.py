"""Synthetic drive-log generation with a lane-following human model."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lanesim.augment import MAX_STEERING, MIN_SPEED, ControlGains
from lanesim.control.law import control_law
from lanesim.data import DriveLog, rendered_frames
from lanesim.dynamics import CAMERA_DT, VehicleParams, VehicleState, step
from lanesim.errors import DomainError, GenerationError
from lanesim.geometry import ProjectionSpec
from lanesim.synthworld.suites import SpeedProfile
from lanesim.synthworld.track import GroundTruth, TrackSpec, make_track


@dataclass(frozen=True)
class SteeringNoise:
    """AR(1) steering-wheel noise: stationary std ``std`` (rad), lag-one
    correlation ``correlation``."""

    std: float = 0.0
    correlation: float = 0.9


def generate_log(
    truth: GroundTruth | TrackSpec,
    speed=None,
    gains: ControlGains = ControlGains(),
    params: VehicleParams = VehicleParams(),
    noise: SteeringNoise = SteeringNoise(),
    seed: int = 0,
    duration: float = 60.0,
    spec: ProjectionSpec = ProjectionSpec(),
    dt: float = CAMERA_DT,
    supersample: int = 3,
    end_margin: float = 30.0,
    name: str | None = None,
) -> DriveLog:
    """Drive the track with the control law (plus noise) and record a log.

    Frames are rendered lazily from the recorded poses. On open tracks the
    recording stops ``end_margin`` meters before the end.
    """
    if isinstance(truth, TrackSpec):
        truth = make_track(truth)
    if speed is None:
        speed = SpeedProfile(truth)
    rng = np.random.default_rng(seed)
    n_max = int(round(duration / dt))
    rho = noise.correlation
    innov = noise.std * math.sqrt(max(0.0, 1.0 - rho * rho))

    state = VehicleState(truth.spec.start)
    poses, angles, speeds = [], [], []
    n_k = rng.normal(0.0, noise.std) if noise.std > 0.0 else 0.0
    for k in range(n_max):
        pose = state.pose
        q = truth.query(pose)
        if abs(q.e) > truth.spec.lane_width:
            raise GenerationError(f"human model left the lane at frame {k} (e = {q.e:.2f} m)")
        if not truth.closed and q.s > truth.length - end_margin:
            break
        v = speed(q.s)
        if not v > MIN_SPEED:
            raise DomainError(f"speed profile gives {v} m/s at s = {q.s:.1f} m")
        delta = control_law(q.curvature, q.e, q.theta, v, gains, params)
        if noise.std > 0.0:
            if k > 0:
                n_k = rho * n_k + innov * rng.normal()
            delta = min(MAX_STEERING, max(-MAX_STEERING, delta + n_k))
        poses.append(pose.as_tuple())
        angles.append(delta)
        speeds.append(v)
        state = step(state, delta, v, dt, params)

    n = len(angles)
    if n == 0:
        raise GenerationError("track too short for a single frame")
    ids = np.arange(n)
    track_dict = truth.spec.to_dict()
    return DriveLog(
        frame_ids=ids,
        timestamps=ids * dt,
        speed=np.array(speeds),
        steering=np.array(angles),
        blinker_left=np.zeros(n, dtype=bool),
        blinker_right=np.zeros(n, dtype=bool),
        spec=spec,
        frames=rendered_frames(track_dict, ids, poses, spec, supersample),
        start_pose=truth.spec.start,
        dt=dt,
        truth_poses=np.array(poses),
        track=track_dict,
        name=name or truth.spec.name,
    )
