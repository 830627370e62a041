from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lanesim.errors import DomainError, EnvelopeError
from lanesim.geometry import (
    OUT_OF_FIELD,
    CylImage,
    FisheyeIntrinsics,
    ProjectionSpec,
    apply_offset,
    col_to_azimuth,
    compose_offset_warp,
    fisheye_project,
    fisheye_to_cyl,
    fisheye_unproject,
    lateral_warp,
    lateral_warp_map,
    pixel_to_ray,
    ray_to_pixel,
    read_png,
    reproject,
    rotation_from_ypr,
    write_png,
    yaw_shift,
    yaw_shift_map,
)
from lanesim.pose import PoseOffset
from lanesim.synthworld import render, render_fisheye

SPEC = ProjectionSpec()


def measured_shift(src: np.ndarray, dst: np.ndarray, max_lag: int = 60, margin: int = 70) -> float:
    """Sub-pixel column displacement of ``dst`` relative to ``src``.

    Correlates zero-mean interior columns at integer lags, then refines
    between the peak and its larger neighbour.
    """
    a = src.astype(float).mean(axis=-1)
    b = dst.astype(float).mean(axis=-1)
    a -= a.mean()
    b -= b.mean()
    w = a.shape[1]
    cols = np.arange(margin, w - margin)
    lags = np.arange(-max_lag, max_lag + 1)
    corr = np.array([np.sum(b[:, cols] * a[:, cols - lag]) for lag in lags])
    m = int(np.argmax(corr))
    n = m + 1 if corr[min(m + 1, len(lags) - 1)] >= corr[max(m - 1, 0)] else m - 1
    cm, cn = max(corr[m], 0.0), max(corr[n], 0.0)
    return float(lags[m] + (lags[n] - lags[m]) * cn / (cm + cn))


# --- projection --------------------------------------------------------------


def test_forward_axis_round_trip():
    center = (SPEC.width / 2 - 0.5, SPEC.horizon_row - 0.5)
    np.testing.assert_allclose(pixel_to_ray(SPEC, center), [1.0, 0.0, 0.0], atol=1e-12)
    col, row = ray_to_pixel(SPEC, [1.0, 0.0, 0.0])
    assert col == pytest.approx(center[0], abs=1e-9)
    assert row == pytest.approx(center[1], abs=1e-9)


def test_left_edge_is_half_fov_to_the_left():
    ray = pixel_to_ray(SPEC, (-0.5, SPEC.horizon_row - 0.5))
    assert math.atan2(ray[1], ray[0]) == pytest.approx(math.radians(45.0), abs=1e-12)


def test_one_vertical_scale_below_horizon_is_minus_45_degrees():
    row = SPEC.horizon_row - 0.5 + SPEC.vertical_scale
    spec = SPEC.with_fields(height=200)
    ray = pixel_to_ray(spec, (10.0, row))
    elev = math.atan2(ray[2], math.hypot(ray[0], ray[1]))
    assert elev == pytest.approx(-math.pi / 4, abs=1e-12)


@pytest.mark.parametrize("px", [(-0.6, 10.0), (SPEC.width - 0.4, 10.0), (5.0, -0.51), (5.0, SPEC.height)])
def test_out_of_bounds_pixel_raises(px):
    with pytest.raises(DomainError):
        pixel_to_ray(SPEC, px)


def test_ray_just_outside_fov_is_out_of_field():
    eps = 1e-9
    az = SPEC.hfov / 2 + eps
    assert ray_to_pixel(SPEC, [math.cos(az), math.sin(az), 0.0]) is OUT_OF_FIELD
    assert ray_to_pixel(SPEC, [math.cos(az), -math.sin(az), 0.0]) is OUT_OF_FIELD
    assert ray_to_pixel(SPEC, [0.0, 0.0, 1.0]) is OUT_OF_FIELD


@given(
    st.floats(-0.5, SPEC.width - 0.5),
    st.floats(-0.5, SPEC.height - 0.5),
)
def test_pixel_ray_round_trip(col, row):
    back = ray_to_pixel(SPEC, pixel_to_ray(SPEC, (col, row)))
    assert back is not OUT_OF_FIELD
    assert abs(back[0] - col) <= 1e-6 and abs(back[1] - row) <= 1e-6


@given(st.integers(0, SPEC.width - 1), st.integers(0, SPEC.width - 1))
def test_azimuth_is_linear_in_column(c1, c2):
    diff = col_to_azimuth(SPEC, c1) - col_to_azimuth(SPEC, c2)
    assert diff == pytest.approx((c2 - c1) * SPEC.hfov / SPEC.width, abs=1e-12)


def test_all_pixels_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = (rng.uniform(-0.5, SPEC.width - 0.5), rng.uniform(-0.5, SPEC.height - 0.5))
        back = ray_to_pixel(SPEC, pixel_to_ray(SPEC, p))
        assert np.allclose(back, p, atol=1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [dict(hfov=math.pi), dict(hfov=0.0), dict(horizon_row=70.0), dict(camera_height=0.0), dict(width=0)],
)
def test_projection_spec_rejects_invalid_fields(kwargs):
    with pytest.raises(DomainError):
        ProjectionSpec(**kwargs)


def test_projection_spec_dict_round_trip():
    spec = ProjectionSpec.preset("fov135")
    assert ProjectionSpec.from_dict(spec.to_dict()) == spec
    assert ProjectionSpec.from_dict({"hfov_deg": 90.0}) == SPEC
    assert spec.rad_per_col == pytest.approx(SPEC.rad_per_col)


# --- yaw shift ---------------------------------------------------------------


def test_yaw_zero_is_identity(noise_image):
    assert yaw_shift(noise_image, 0.0) == noise_image


def test_yaw_of_one_column_shifts_content_one_column(noise_image):
    out = yaw_shift(noise_image, SPEC.hfov / SPEC.width)
    np.testing.assert_array_equal(out.pixels[:, 1:], noise_image.pixels[:, :-1])
    np.testing.assert_array_equal(out.pixels[:, 0], noise_image.pixels[:, 0])


_SCENE = {}


def render_scene() -> np.ndarray:
    """A smooth synthetic panorama (sinusoids in azimuth and row)."""
    if "px" not in _SCENE:
        cols = np.arange(SPEC.width)[None, :, None]
        rows = np.arange(SPEC.height)[:, None, None]
        phase = np.array([0.0, 1.3, 2.1])[None, None, :]
        px = 128 + 60 * np.sin(0.11 * cols + phase) + 40 * np.cos(0.17 * rows + 0.05 * cols + phase)
        _SCENE["px"] = np.clip(np.rint(px), 0, 255).astype(np.uint8)
    return _SCENE["px"]


@given(st.floats(-math.radians(20.0), math.radians(20.0)))
def test_yaw_inverse_composition_recovers_interior(dtheta):
    img = CylImage(render_scene(), SPEC)
    back = yaw_shift(yaw_shift(img, dtheta), -dtheta)
    edge = int(math.ceil(abs(dtheta) * SPEC.cols_per_rad)) + 2
    err = np.abs(back.pixels.astype(int) - img.pixels.astype(int))[:, edge:-edge]
    assert err.max() <= 2


@given(st.floats(-math.radians(15.0), math.radians(15.0)))
def test_yaw_shift_is_a_column_translation(dtheta):
    rng = np.random.default_rng(9)
    img = CylImage(rng.integers(0, 256, (SPEC.height, SPEC.width, 3), dtype=np.uint8), SPEC)
    out = yaw_shift(img, dtheta)
    expected = dtheta * SPEC.width / SPEC.hfov
    assert abs(measured_shift(img.pixels, out.pixels) - expected) <= 0.5


def test_yaw_map_rows_are_unchanged():
    m = yaw_shift_map(SPEC, math.radians(7.0))
    np.testing.assert_array_equal(m.src_row, np.arange(SPEC.height)[:, None] * np.ones((1, SPEC.width)))
    # turning left vacates the leftmost columns
    vacated = int(math.floor(math.radians(7.0) * SPEC.cols_per_rad))
    assert not m.in_field[:, :vacated].any()
    assert m.in_field[:, vacated + 1 :].all()


# --- lateral warp ------------------------------------------------------------


def test_lateral_zero_is_identity(noise_image):
    assert lateral_warp(noise_image, 0.0) == noise_image


@given(st.floats(-2.0, 2.0))
def test_rows_above_horizon_are_bit_identical(de):
    rng = np.random.default_rng(1)
    img = CylImage(rng.integers(0, 256, (SPEC.height, SPEC.width, 3), dtype=np.uint8), SPEC)
    out = lateral_warp(img, de)
    top = int(math.floor(SPEC.horizon_row - 0.5)) + 1
    np.testing.assert_array_equal(out.pixels[:top], img.pixels[:top])


def test_ground_point_ten_meters_ahead():
    # odd width and a tuned horizon put an integer pixel on the ground 10 m ahead
    width, hfov = 201, math.pi / 2
    vs = width / hfov
    row = 30
    horizon = row + 0.5 - 0.05 * vs
    spec = ProjectionSpec(width=width, height=66, hfov=hfov, horizon_row=horizon, camera_height=0.5)
    center = (width - 1) // 2
    m = lateral_warp_map(spec, 1.0)
    src_az = col_to_azimuth(spec, m.src_col[row, center])
    assert math.degrees(src_az) == pytest.approx(math.degrees(math.atan2(1.0, 10.0)), abs=1e-9)
    assert math.degrees(src_az) == pytest.approx(5.71, abs=0.01)
    shift = center - m.src_col[row, center]
    assert shift == pytest.approx(math.atan2(1.0, 10.0) * width / hfov, abs=1e-9)
    # the source row sees the same point at its longer range
    tan_el = -0.5 / math.hypot(10.0, 1.0)
    assert m.src_row[row, center] == pytest.approx(horizon - 0.5 - tan_el * vs, abs=1e-9)


def test_lateral_direction_matches_render(spec, straight_truth):
    pose = straight_truth.pose_at(50.0)
    base = render(straight_truth, pose, spec, 2)
    left = render(straight_truth, pose.moved(left=0.6), spec, 2)
    right = render(straight_truth, pose.moved(left=-0.6), spec, 2)
    warped = lateral_warp(base, 0.6)
    ground = slice(30, None)
    err_left = np.abs(warped.pixels[ground].astype(float) - left.pixels[ground]).mean()
    err_right = np.abs(warped.pixels[ground].astype(float) - right.pixels[ground]).mean()
    assert err_left < err_right


# --- composed warp -----------------------------------------------------------


def test_zero_offset_map_is_identity():
    m = compose_offset_warp(SPEC, PoseOffset(0.0, 0.0))
    cols, rows = np.meshgrid(np.arange(SPEC.width), np.arange(SPEC.height))
    np.testing.assert_array_equal(m.src_col, cols)
    np.testing.assert_array_equal(m.src_row, rows)


@given(st.floats(-math.radians(19.9), math.radians(19.9)))
def test_pure_rotation_map_equals_yaw_map(dtheta):
    dtheta = round(dtheta / 1e-5) * 1e-5
    a = compose_offset_warp(SPEC, PoseOffset(0.0, dtheta))
    b = yaw_shift_map(SPEC, dtheta)
    np.testing.assert_allclose(a.src_col, b.src_col, atol=1e-9)
    np.testing.assert_allclose(a.src_row, b.src_row, atol=1e-9)


def test_envelope_violation_raises():
    with pytest.raises(EnvelopeError):
        compose_offset_warp(SPEC, PoseOffset(2.5, 0.0))
    with pytest.raises(EnvelopeError):
        compose_offset_warp(SPEC, PoseOffset(0.0, math.radians(21.0)))


def test_composed_matches_sequential(spec, mixed_truth):
    rng = np.random.default_rng(4)
    for _ in range(10):
        pose = mixed_truth.pose_at(rng.uniform(0.0, mixed_truth.length - 50.0))
        img = render(mixed_truth, pose, spec, 2)
        off = PoseOffset(rng.uniform(-1.0, 1.0), math.radians(rng.uniform(-10.0, 10.0)))
        once = apply_offset(img, off)
        twice = yaw_shift(lateral_warp(img, off.de), off.dtheta)
        edge = int(math.ceil(abs(off.dtheta) * spec.cols_per_rad)) + 1
        diff = np.abs(once.pixels.astype(float) - twice.pixels)[:, edge : spec.width - edge]
        assert diff.mean() <= 2.0


def test_map_is_cached_by_quantized_offset():
    a = compose_offset_warp(SPEC, PoseOffset(0.31, 0.02))
    b = compose_offset_warp(SPEC, PoseOffset(0.31 + 1e-6, 0.02))
    assert a is b


def test_reproject_to_wider_spec_keeps_center(spec, mixed_truth):
    pose = mixed_truth.pose_at(100.0)
    wide = ProjectionSpec.preset("fov135")
    img = render(mixed_truth, pose, spec, 2)
    direct = render(mixed_truth, pose, wide, 2)
    out = reproject(img, wide)
    assert out.spec == wide
    # the center of the wide view is covered by the narrow source
    c0 = wide.width // 2 - 40
    rows = slice(int(wide.horizon_row) + 3, wide.height - 5)
    err = np.abs(out.pixels[rows, c0 : c0 + 80].astype(float) - direct.pixels[rows, c0 : c0 + 80])
    assert err.mean() <= 6.0


# --- images ------------------------------------------------------------------


def test_png_round_trip(tmp_path, noise_image):
    path = tmp_path / "f.png"
    write_png(path, noise_image)
    assert read_png(path, noise_image.spec) == noise_image


def test_cyl_image_shape_checked():
    with pytest.raises(DomainError):
        CylImage(np.zeros((10, 10, 3), dtype=np.uint8), SPEC)


# --- fisheye -----------------------------------------------------------------

SMALL_FISHEYE = FisheyeIntrinsics(
    focal=480 / math.radians(190.0), principal_point=(239.5, 149.5), resolution=(480, 300)
)


def test_optical_axis_hits_principal_point():
    u, v, inside = fisheye_project(SMALL_FISHEYE, np.array([1.0, 0.0, 0.0]))
    assert (float(u), float(v)) == SMALL_FISHEYE.principal_point
    assert bool(inside)


@given(st.floats(0.0, math.radians(95.0)), st.floats(-math.pi, math.pi))
def test_fisheye_radius_is_focal_times_angle(theta, phi):
    ray = np.array([math.cos(theta), math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi)])
    u, v, _ = fisheye_project(SMALL_FISHEYE, ray)
    r = math.hypot(float(u) - SMALL_FISHEYE.principal_point[0], float(v) - SMALL_FISHEYE.principal_point[1])
    assert r == pytest.approx(SMALL_FISHEYE.focal * theta, abs=1e-9)
    back = fisheye_unproject(SMALL_FISHEYE, u, v)
    np.testing.assert_allclose(back, ray, atol=1e-9)


@pytest.mark.parametrize(
    "kwargs",
    [dict(focal=0.0), dict(principal_point=(5000.0, 10.0)), dict(max_fov=7.0)],
)
def test_fisheye_intrinsics_validation(kwargs):
    with pytest.raises(DomainError):
        FisheyeIntrinsics(**kwargs)


def test_fisheye_requires_enough_fov(spec):
    narrow = FisheyeIntrinsics(max_fov=math.radians(60.0))
    raw = np.zeros((800, 1280, 3), dtype=np.uint8)
    with pytest.raises(DomainError):
        fisheye_to_cyl(raw, narrow, None, spec)


def test_fisheye_mount_yaw_becomes_column_shift(spec, mixed_truth):
    pose = mixed_truth.pose_at(80.0)
    psi = math.radians(6.0)
    mount = rotation_from_ypr(yaw=psi)
    raw_level = render_fisheye(mixed_truth, pose, SMALL_FISHEYE)
    raw_yawed = render_fisheye(mixed_truth, pose, SMALL_FISHEYE, mount)
    level = fisheye_to_cyl(raw_level, SMALL_FISHEYE, None, spec)
    # ignoring the mount: content shifts by psi * width / hfov columns
    naive = fisheye_to_cyl(raw_yawed, SMALL_FISHEYE, None, spec)
    assert measured_shift(level.pixels, naive.pixels, max_lag=30, margin=40) == pytest.approx(
        psi * spec.cols_per_rad, abs=0.5
    )
    # with the calibrated extrinsic the view is mount-independent
    calibrated = fisheye_to_cyl(raw_yawed, SMALL_FISHEYE, mount, spec)
    err = np.abs(calibrated.pixels.astype(float) - level.pixels)[:, 10:-10]
    assert err.mean() <= 3.0


def test_fisheye_outside_max_fov_is_black(spec):
    intr = FisheyeIntrinsics(
        focal=480 / math.radians(190.0), principal_point=(239.5, 149.5), resolution=(480, 300),
        max_fov=math.radians(90.0),
    )
    raw = np.full((300, 480, 3), 200, dtype=np.uint8)
    out = fisheye_to_cyl(raw, intr, None, spec)
    # the bottom corners look about 49 degrees off axis, beyond the 45 degree half-fov
    assert (out.pixels[-1, 0] == 0).all()
    assert (out.pixels[int(spec.horizon_row), spec.width // 2] == 200).all()


def test_warp_marks_invented_pixels(spec, noise_image):
    dtheta = 10.0 * spec.hfov / spec.width
    out = compose_offset_warp(spec, PoseOffset(0.0, dtheta)).apply(noise_image)
    assert out.valid is not None
    assert not out.valid[:, :10].any()
    assert out.valid[:, 11:].all()
    # equality compares pixels only
    assert out == CylImage(out.pixels, spec)


def test_warp_propagates_source_validity(spec, noise_image):
    valid = np.ones(spec.shape, dtype=bool)
    valid[:, -20:] = False
    src = CylImage(noise_image.pixels, spec, valid)
    out = yaw_shift_map(spec, 0.0).apply(src)
    np.testing.assert_array_equal(out.valid, valid)


def test_valid_mask_shape_is_checked(spec, noise_image):
    with pytest.raises(DomainError):
        CylImage(noise_image.pixels, spec, np.ones((3, 3), dtype=bool))
