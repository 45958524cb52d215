"""Training-style augmentation: resized crop, flips, rotation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from uwfkit.geometry import Homography, warp_image
from uwfkit.raster import Raster, resample_array

AREA_SCALE_RANGE = (0.3, 3.5)
MAX_ROTATION_DEG = 45.0


@dataclass(frozen=True)
class AugmentParams:
    area_scale: float
    hflip: bool
    vflip: bool
    angle_deg: float


def sample_augment_params(rng: np.random.Generator) -> AugmentParams:
    return AugmentParams(
        area_scale=float(rng.uniform(*AREA_SCALE_RANGE)),
        hflip=bool(rng.random() < 0.5),
        vflip=bool(rng.random() < 0.5),
        angle_deg=float(rng.uniform(0.0, MAX_ROTATION_DEG)),
    )


def resized_crop(img: Raster, area_scale: float, rng: np.random.Generator) -> Raster:
    """Square-aspect crop of `area_scale` x the image area, clamped, resized back."""
    side = math.sqrt(area_scale)
    cw = min(img.width, max(1, round(img.width * side)))
    ch = min(img.height, max(1, round(img.height * side)))
    x0 = int(rng.integers(0, img.width - cw + 1))
    y0 = int(rng.integers(0, img.height - ch + 1))
    window = img.data[y0:y0 + ch, x0:x0 + cw]
    return Raster(resample_array(window, img.width, img.height))


def rotate(img: Raster, angle_deg: float) -> Raster:
    cx = (img.width - 1) / 2.0
    cy = (img.height - 1) / 2.0
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    h = Homography([
        [c, -s, cx - c * cx + s * cy],
        [s, c, cy - s * cx - c * cy],
        [0.0, 0.0, 1.0],
    ])
    return warp_image(img, h, img.width, img.height)


def apply_augment(img: Raster, p: AugmentParams, rng: np.random.Generator) -> Raster:
    out = resized_crop(img, p.area_scale, rng)
    data = out.data
    if p.hflip:
        data = data[:, ::-1]
    if p.vflip:
        data = data[::-1, :]
    return rotate(Raster(data), p.angle_deg)


def augment_random(img: Raster, seed: int) -> Raster:
    """Deterministic per seed; output size always equals input size."""
    rng = np.random.default_rng(seed)
    return apply_augment(img, sample_augment_params(rng), rng)
