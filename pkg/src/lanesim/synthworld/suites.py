"""Track families and speed profiles used for synthetic scenario suites."""
from __future__ import annotations

import math

import numpy as np

from lanesim.synthworld.track import Cone, GroundTruth, Segment, TrackSpec


def straight_track(length: float = 1500.0, marking_right: str = "dashed") -> TrackSpec:
    return TrackSpec((Segment("straight", length=length),), marking_right=marking_right, name="straight")


def sharp_turn_track(n_bends: int = 12, radius: float = 8.0, gap: float = 12.0) -> TrackSpec:
    """Chain of 90-degree S-bends of the given radius (16 m diameter turns
    by default). Heading stays within [-90, 90] degrees so the road never
    crosses itself."""
    segs = [Segment("straight", length=gap)]
    pattern = (1.0, -1.0, -1.0, 1.0)
    for i in range(n_bends):
        sign = pattern[i % 4]
        segs.append(Segment("arc", radius=radius, angle=sign * math.pi / 2, masked=True))
        if i % 2 == 1:
            segs.append(Segment("straight", length=gap))
    segs.append(Segment("straight", length=60.0))
    return TrackSpec(tuple(segs), name="sharp_turns")


def mixed_track(length: float = 6000.0, seed: int = 0) -> TrackSpec:
    """Urban-like random mix of straights and curves (radius 8 to 150 m).

    The heading is kept within +-80 degrees of the start so the road
    advances monotonically and never self-intersects.
    """
    rng = np.random.default_rng(seed)
    limit = math.radians(80.0)
    radii = (8.0, 8.0, 12.0, 20.0, 35.0, 60.0, 150.0)
    segs = []
    heading = 0.0
    total = 0.0
    while total < length:
        straight = float(rng.uniform(20.0, 120.0))
        segs.append(Segment("straight", length=straight))
        total += straight
        radius = float(rng.choice(radii))
        angle = math.radians(float(rng.uniform(25.0, 80.0)))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        if abs(heading + sign * angle) > limit:
            sign = -sign
        if abs(heading + sign * angle) > limit:
            angle = limit - abs(heading)
            sign = -math.copysign(1.0, heading)
        angle = sign * angle
        segs.append(Segment("arc", radius=radius, angle=angle))
        heading += angle
        total += radius * abs(angle)
    segs.append(Segment("straight", length=150.0))
    return TrackSpec(tuple(segs), marking_right="dashed", name="mixed")


def stadium_track(straight: float = 100.0, radius: float = 8.0) -> TrackSpec:
    """Closed stadium loop: two 180-degree turns of 16 m diameter with masked
    lines, one plain straight, and a straight carrying a cone chicane."""
    dev = math.radians(15.0)
    chicane_r = 30.0
    chicane = [
        Segment("arc", radius=chicane_r, angle=dev),
        Segment("arc", radius=chicane_r, angle=-dev),
        Segment("arc", radius=chicane_r, angle=-dev),
        Segment("arc", radius=chicane_r, angle=dev),
    ]
    chicane_len = sum(s.arclength for s in chicane)
    # lateral drift of the chicane is undone by its mirror half; keep the
    # straights equal in length along x so the loop closes
    advance = 4.0 * chicane_r * math.sin(dev)
    lead = (straight - advance) / 2.0
    segs = (
        Segment("straight", length=lead),
        *chicane,
        Segment("straight", length=lead),
        Segment("arc", radius=radius, angle=math.pi, masked=True),
        Segment("straight", length=straight),
        Segment("arc", radius=radius, angle=math.pi, masked=True),
    )
    half_road = 1.75
    cones = []
    s0 = lead
    for i in range(9):
        s = s0 + i * chicane_len / 8.0
        cones.append(Cone(s, half_road + 0.3))
        cones.append(Cone(s, -half_road - 0.3))
    return TrackSpec(segs, marking_right="dashed", cones=tuple(cones), name="test_track")


def gentle_track() -> TrackSpec:
    """Open road with 30 to 50 m curves, every curve visible well ahead.

    Suited to calibration sweeps: a camera-only follower tracks it closely,
    so sweep rankings reflect the calibration rather than blind spots.
    """
    segs = (
        Segment("straight", length=40.0),
        Segment("arc", radius=40.0, angle=math.radians(60.0)),
        Segment("straight", length=30.0),
        Segment("arc", radius=30.0, angle=math.radians(-70.0)),
        Segment("straight", length=40.0),
        Segment("arc", radius=50.0, angle=math.radians(50.0)),
        Segment("straight", length=200.0),
    )
    return TrackSpec(segs, marking_right="dashed", name="gentle")


PRESETS = {
    "straight": straight_track,
    "sharp": sharp_turn_track,
    "mixed": mixed_track,
    "test_track": stadium_track,
    "gentle": gentle_track,
}


def preset_track(name: str) -> TrackSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown track preset {name!r}; choose from {sorted(PRESETS)}") from None


class SpeedProfile:
    """Curvature-limited target speed along the track.

    Speed is capped by ``v_max`` and by lateral acceleration ``a_lat``,
    then smoothed by longitudinal acceleration/deceleration limits.
    """

    def __init__(
        self,
        truth: GroundTruth,
        v_max: float = 13.9,
        a_lat: float = 3.0,
        a_long: float = 1.5,
        v_min: float = 3.0,
        ds: float = 0.5,
    ):
        n = int(math.ceil(truth.length / ds)) + 1
        self.s = np.linspace(0.0, truth.length, n)
        step = self.s[1] - self.s[0] if n > 1 else ds
        kappa = np.abs(np.array([truth.curvature_at(float(s)) for s in self.s]))
        # curvature just ahead matters too: take the max over a 1-step window
        kappa = np.maximum(kappa, np.concatenate([kappa[1:], kappa[-1:]]))
        with np.errstate(divide="ignore"):
            v = np.minimum(v_max, np.sqrt(a_lat / np.maximum(kappa, 1e-12)))
        v = np.maximum(v, v_min)
        for i in range(n - 2, -1, -1):
            v[i] = min(v[i], math.sqrt(v[i + 1] ** 2 + 2.0 * a_long * step))
        for i in range(1, n):
            v[i] = min(v[i], math.sqrt(v[i - 1] ** 2 + 2.0 * a_long * step))
        self.v = v
        self.closed = truth.closed
        self.length = truth.length

    def __call__(self, s: float) -> float:
        if self.closed:
            s = s % self.length
        return float(np.interp(s, self.s, self.v))


class ConstantSpeed:
    def __init__(self, v: float):
        self.v = float(v)

    def __call__(self, s: float) -> float:
        return self.v
