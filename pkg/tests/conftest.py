from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lanesim.geometry import CylImage, ProjectionSpec
from lanesim.synthworld import (
    SteeringNoise,
    generate_log,
    gentle_track,
    make_track,
    mixed_track,
    sharp_turn_track,
    straight_track,
)

settings.register_profile(
    "lanesim", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lanesim")


@pytest.fixture(scope="session")
def spec() -> ProjectionSpec:
    return ProjectionSpec()


@pytest.fixture
def noise_image(spec) -> CylImage:
    rng = np.random.default_rng(7)
    return CylImage(rng.integers(0, 256, (spec.height, spec.width, 3), dtype=np.uint8), spec)


@pytest.fixture(scope="session")
def mixed_truth():
    return make_track(mixed_track(1500.0, seed=2))


@pytest.fixture(scope="session")
def sharp_truth():
    return make_track(sharp_turn_track(n_bends=8))


@pytest.fixture(scope="session")
def straight_truth():
    return make_track(straight_track(600.0))


@pytest.fixture(scope="session")
def mixed_log(mixed_truth):
    return generate_log(
        mixed_truth,
        noise=SteeringNoise(math.radians(3.0), 0.9),
        duration=20.0,
        seed=11,
        supersample=2,
        name="mixed_short",
    )


@pytest.fixture(scope="session")
def sharp_log(sharp_truth):
    return generate_log(sharp_truth, duration=30.0, supersample=2, name="sharp_short")


@pytest.fixture(scope="session")
def straight_log(straight_truth):
    return generate_log(straight_truth, duration=20.0, supersample=2, name="straight_short")


@pytest.fixture(scope="session")
def gentle_log():
    # noise-free: the human path is the centerline, so MAD measures tracking
    return generate_log(make_track(gentle_track()), duration=20.0, supersample=2, name="gentle_short")
