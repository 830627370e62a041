"""Synthetic flat-ground world: tracks, renderer and log generator."""
from lanesim.synthworld.logs import SteeringNoise, generate_log
from lanesim.synthworld.render import render, render_fisheye, shade_rays
from lanesim.synthworld.suites import (
    PRESETS,
    ConstantSpeed,
    SpeedProfile,
    gentle_track,
    mixed_track,
    preset_track,
    sharp_turn_track,
    straight_track,
    stadium_track,
)
from lanesim.synthworld.track import (
    Cone,
    GroundTruth,
    Segment,
    TrackQuery,
    TrackSpec,
    make_track,
)

__all__ = [
    "Cone",
    "ConstantSpeed",
    "GroundTruth",
    "PRESETS",
    "Segment",
    "SpeedProfile",
    "SteeringNoise",
    "TrackQuery",
    "TrackSpec",
    "generate_log",
    "gentle_track",
    "make_track",
    "mixed_track",
    "preset_track",
    "render",
    "render_fisheye",
    "shade_rays",
    "sharp_turn_track",
    "straight_track",
    "stadium_track",
]
