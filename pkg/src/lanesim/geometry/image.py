"""Image container, bilinear sampling and PNG I/O."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from lanesim.errors import DomainError
from lanesim.geometry.projection import ProjectionSpec


@dataclass(frozen=True, eq=False)
class CylImage:
    """RGB image (H, W, 3) of dtype uint8 in the geometry of ``spec``.

    ``valid`` optionally marks pixels that carry real content; warps set it
    False where pixels were invented by edge replication. Equality ignores it.
    """

    pixels: np.ndarray
    spec: ProjectionSpec
    valid: np.ndarray | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            px = to_uint8(px)
        if px.shape != (self.spec.height, self.spec.width, 3):
            raise DomainError(
                f"pixels of shape {px.shape} do not match spec {self.spec.width}x{self.spec.height}"
            )
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.valid is not None:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != px.shape[:2]:
                raise DomainError(f"valid mask of shape {valid.shape} does not match {px.shape[:2]}")
            valid.setflags(write=False)
            object.__setattr__(self, "valid", valid)

    def __eq__(self, other):
        if not isinstance(other, CylImage):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


def to_uint8(values) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def bilinear_sample(pixels: np.ndarray, cols, rows) -> np.ndarray:
    """Bilinear lookup with edge replication; returns float64 (..., C)."""
    img = np.asarray(pixels, dtype=np.float64)
    h, w = img.shape[:2]
    c = np.clip(np.nan_to_num(np.asarray(cols, dtype=float), nan=0.0), 0.0, w - 1.0)
    r = np.clip(np.nan_to_num(np.asarray(rows, dtype=float), nan=0.0), 0.0, h - 1.0)
    c0 = np.minimum(np.floor(c).astype(np.intp), w - 2) if w > 1 else np.zeros(c.shape, np.intp)
    r0 = np.minimum(np.floor(r).astype(np.intp), h - 2) if h > 1 else np.zeros(r.shape, np.intp)
    c1 = np.minimum(c0 + 1, w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    fc = (c - c0)[..., None]
    fr = (r - r0)[..., None]
    top = img[r0, c0] * (1.0 - fc) + img[r0, c1] * fc
    bottom = img[r1, c0] * (1.0 - fc) + img[r1, c1] * fc
    return top * (1.0 - fr) + bottom * fr


def area_downsample(pixels: np.ndarray, factor: int) -> np.ndarray:
    """Block-mean downscale by an integer factor (area interpolation)."""
    if factor == 1:
        return np.asarray(pixels, dtype=float)
    h, w = pixels.shape[:2]
    if h % factor or w % factor:
        raise DomainError(f"{w}x{h} is not divisible by {factor}")
    blocks = np.asarray(pixels, dtype=float).reshape(h // factor, factor, w // factor, factor, -1)
    return blocks.mean(axis=(1, 3))


def read_png(path, spec: ProjectionSpec) -> CylImage:
    with Image.open(path) as im:
        return CylImage(np.asarray(im.convert("RGB")), spec)


def write_png(path, image) -> None:
    pixels = image.pixels if isinstance(image, CylImage) else to_uint8(image)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(pixels)).save(path, format="PNG")
