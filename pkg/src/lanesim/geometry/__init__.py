"""Camera models and cylindrical image resampling."""
from lanesim.geometry.fisheye import (
    FisheyeIntrinsics,
    fisheye_project,
    fisheye_to_cyl,
    fisheye_unproject,
)
from lanesim.geometry.image import (
    CylImage,
    area_downsample,
    bilinear_sample,
    read_png,
    to_uint8,
    write_png,
)
from lanesim.geometry.projection import (
    OUT_OF_FIELD,
    ProjectionSpec,
    azimuth_to_col,
    col_to_azimuth,
    pixel_grid,
    pixel_to_ray,
    pixels_to_rays,
    ray_to_pixel,
    rays_to_pixels,
    rotation_from_ypr,
    row_to_tan_elevation,
    tan_elevation_to_row,
    yaw_rotation,
)
from lanesim.geometry.warp import (
    DEFAULT_ENVELOPE,
    WarpEnvelope,
    WarpMap,
    apply_offset,
    compose_offset_warp,
    identity_map,
    lateral_warp,
    lateral_warp_map,
    reproject,
    yaw_shift,
    yaw_shift_map,
)

__all__ = [
    "CylImage",
    "DEFAULT_ENVELOPE",
    "FisheyeIntrinsics",
    "OUT_OF_FIELD",
    "ProjectionSpec",
    "WarpEnvelope",
    "WarpMap",
    "apply_offset",
    "area_downsample",
    "azimuth_to_col",
    "bilinear_sample",
    "col_to_azimuth",
    "compose_offset_warp",
    "fisheye_project",
    "fisheye_to_cyl",
    "fisheye_unproject",
    "identity_map",
    "lateral_warp",
    "lateral_warp_map",
    "pixel_grid",
    "pixel_to_ray",
    "pixels_to_rays",
    "ray_to_pixel",
    "rays_to_pixels",
    "read_png",
    "reproject",
    "rotation_from_ypr",
    "row_to_tan_elevation",
    "tan_elevation_to_row",
    "to_uint8",
    "write_png",
    "yaw_rotation",
    "yaw_shift",
    "yaw_shift_map",
]
