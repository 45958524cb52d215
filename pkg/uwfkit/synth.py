"""
Synthetic RI/FA-like pairs with a known homography.

The fixed frame is a procedural vessel tree (bright on dark); the moving
frame is the same tree seen through a sampled transform, polarity-inverted,
contrast-remapped and noisy. Everything is a function of the seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from uwfkit.config import PipelineConfig
from uwfkit.geometry import Homography, warp_image
from uwfkit.raster import Raster

logger = logging.getLogger(__name__)

REFERENCE_SIZE = 1024
BACKGROUND = 0.1
VESSEL_GAIN = 0.8
FWHM_TO_SIGMA = 1.0 / 2.3548


@dataclass(frozen=True)
class SynthParams:
    size: int = REFERENCE_SIZE
    scale_range: tuple[float, float] = (0.85, 1.25)
    max_rotation: float = 0.5
    max_translation: float = 50.0  # at 1024 px, scaled with size
    max_projective: float = 1e-5  # at 1024 px, scaled with size
    noise_sigma: float = 0.02
    trees: int = 4
    width_range: tuple[float, float] = (5.0, 8.0)
    min_width: float = 2.0
    max_depth: int = 4
    max_steps: int = 60
    branch_prob: float = 0.12

    def __post_init__(self):
        if self.size < 64:
            raise ValueError(f"size must be >= 64, got {self.size}")
        if not 0 < self.scale_range[0] <= self.scale_range[1]:
            raise ValueError(f"bad scale range {self.scale_range}")
        if not 0 <= self.noise_sigma <= 0.02:
            raise ValueError("noise sigma must be in [0, 0.02]")


@dataclass(frozen=True, eq=False)
class SynthPair:
    fixed: Raster
    moving: Raster
    true_h: Homography  # moving -> fixed
    scale: float
    rotation: float


def harness_config(cfg: PipelineConfig) -> PipelineConfig:
    """Polarities matching synthetic frames: bright vessels fixed, dark vessels moving."""
    vessel = cfg.vesselness.model_copy(update={"ri_polarity": "bright", "fa_polarity": "dark"})
    return cfg.model_copy(update={"vesselness": vessel})


# ── Vessel tree ────────────────────────────────────────────────

def draw_segment(canvas: np.ndarray, x0: float, y0: float, x1: float, y1: float, width: float) -> None:
    """Max-composite a Gaussian-profile segment (FWHM = width) into canvas."""
    h, w = canvas.shape
    sigma = width * FWHM_TO_SIGMA
    pad = 3.0 * sigma + 1.0
    xmin = max(int(math.floor(min(x0, x1) - pad)), 0)
    xmax = min(int(math.ceil(max(x0, x1) + pad)), w - 1)
    ymin = max(int(math.floor(min(y0, y1) - pad)), 0)
    ymax = min(int(math.ceil(max(y0, y1) + pad)), h - 1)
    if xmin > xmax or ymin > ymax:
        return

    ys, xs = np.mgrid[ymin:ymax + 1, xmin:xmax + 1].astype(np.float64)
    dx, dy = x1 - x0, y1 - y0
    length2 = dx * dx + dy * dy
    if length2 > 0:
        t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / length2, 0.0, 1.0)
    else:
        t = np.zeros_like(xs)
    d2 = (xs - x0 - t * dx) ** 2 + (ys - y0 - t * dy) ** 2
    window = canvas[ymin:ymax + 1, xmin:xmax + 1]
    np.maximum(window, np.exp(-d2 / (2.0 * sigma * sigma)), out=window)


def draw_vessel_tree(rng: np.random.Generator, p: SynthParams) -> np.ndarray:
    """Branching random-walk polylines radiating from a disc near the centre."""
    size = p.size
    unit = size / REFERENCE_SIZE
    canvas = np.zeros((size, size))
    cx = size * rng.uniform(0.4, 0.6)
    cy = size * rng.uniform(0.4, 0.6)

    stack = []
    base_heading = rng.uniform(-math.pi, math.pi)
    for k in range(p.trees):
        heading = base_heading + 2.0 * math.pi * k / p.trees + rng.normal(0.0, 0.2)
        stack.append((cx, cy, heading, rng.uniform(*p.width_range), 0))

    segments = 0
    while stack:
        x, y, heading, width, depth = stack.pop()
        for _ in range(p.max_steps):
            step = rng.uniform(10.0, 20.0) * unit
            heading += rng.normal(0.0, 0.2)
            nx = x + step * math.cos(heading)
            ny = y + step * math.sin(heading)
            draw_segment(canvas, x, y, nx, ny, width)
            segments += 1
            x, y = nx, ny
            if not (0.0 <= x < size and 0.0 <= y < size):
                break
            width *= 0.985
            if width < p.min_width:
                break
            if depth < p.max_depth and rng.random() < p.branch_prob:
                side = 1.0 if rng.random() < 0.5 else -1.0
                stack.append((x, y, heading + side * rng.uniform(0.4, 0.9), max(width * 0.7, p.min_width), depth + 1))

    logger.debug("Vessel tree: %d segments", segments)
    return canvas


# ── Transform ──────────────────────────────────────────────────

def sample_transform(rng: np.random.Generator, p: SynthParams) -> tuple[Homography, float, float]:
    """Centred similarity + translation + a mild projective term, moving -> fixed."""
    unit = p.size / REFERENCE_SIZE
    scale = rng.uniform(*p.scale_range)
    rotation = rng.uniform(-p.max_rotation, p.max_rotation)
    tx, ty = rng.uniform(-p.max_translation, p.max_translation, size=2) * unit
    px, py = rng.uniform(-p.max_projective, p.max_projective, size=2) / unit

    c = (p.size - 1) / 2.0
    cos_r, sin_r = math.cos(rotation), math.sin(rotation)
    centre = np.array([[1.0, 0.0, -c], [0.0, 1.0, -c], [0.0, 0.0, 1.0]])
    linear = np.array([
        [scale * cos_r, -scale * sin_r, 0.0],
        [scale * sin_r, scale * cos_r, 0.0],
        [px, py, 1.0],
    ])
    back = np.array([[1.0, 0.0, c + tx], [0.0, 1.0, c + ty], [0.0, 0.0, 1.0]])
    return Homography(back @ linear @ centre), scale, rotation


def synth_pair(seed: int, params: SynthParams | None = None) -> SynthPair:
    p = params or SynthParams()
    rng = np.random.default_rng(seed)
    vessels = draw_vessel_tree(rng, p)
    true_h, scale, rotation = sample_transform(rng, p)

    fixed = BACKGROUND + VESSEL_GAIN * vessels
    # moving(q) = fixed(H q); warp_image samples its source at h^-1 q
    seen = warp_image(Raster(vessels), true_h.inverse(), p.size, p.size).data
    moving = 1.0 - (BACKGROUND + VESSEL_GAIN * seen)

    gamma = rng.uniform(0.7, 1.4)
    offset = rng.uniform(0.0, 0.1)
    gain = rng.uniform(0.7, 0.9)
    moving = offset + gain * np.power(np.clip(moving, 0.0, 1.0), gamma)
    moving = moving + rng.normal(0.0, p.noise_sigma, size=moving.shape)

    return SynthPair(
        fixed=Raster(fixed),
        moving=Raster(np.clip(moving, 0.0, 1.0)),
        true_h=true_h,
        scale=scale,
        rotation=rotation,
    )
