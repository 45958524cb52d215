"""
Raster I/O and resampling.

Provides:
  - Raster / BinaryMask value types (float64 planes in [0,1], boolean planes)
  - PNG and binary PGM/PPM decode/encode (8-bit only, via Pillow)
  - Rec.601 grayscale, half-pixel bilinear resize
  - The inscribed-ellipse peripheral crop applied before registration
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from uwfkit.errors import CorruptFile, ImageIoError, UnsupportedFormat

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

PNG_SUFFIXES = {".png"}
NETPBM_SUFFIXES = {".pgm", ".ppm", ".pnm"}

# Pillow modes that already are (or losslessly become) 8-bit L / RGB
_GRAY_MODES = {"L", "LA", "1"}
_COLOR_MODES = {"RGB", "RGBA", "P", "PA", "RGBX", "CMYK"}


@dataclass(frozen=True, eq=False)
class Raster:
    """Row-major float image, shape (h, w) or (h, w, 3). Immutable."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ValueError(f"Raster needs shape (h, w) or (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("Raster dimensions must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Raster values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.bits, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"BinaryMask needs a 2-D array, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def __and__(self, other: BinaryMask) -> BinaryMask:
        return BinaryMask(self.bits & other.bits)


# ── Decode / encode ─────────────────────────────────────────────

def decode_image(path: str | Path) -> Raster:
    """Read an 8-bit PNG or binary PGM/PPM into a Raster with values v/255."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            magic = f.read(2)
    except OSError as e:
        raise ImageIoError(f"{path}: {e}") from e

    try:
        with Image.open(path) as img:
            if img.format not in ("PNG", "PPM"):
                raise UnsupportedFormat(f"{path}: format {img.format} not supported")
            if img.format == "PPM" and magic not in (b"P5", b"P6"):
                raise UnsupportedFormat(f"{path}: only binary P5/P6 netpbm is supported")
            img.load()
            mode = img.mode
            if mode in _GRAY_MODES:
                arr = np.asarray(img.convert("L"), dtype=np.float64)
            elif mode in _COLOR_MODES:
                arr = np.asarray(img.convert("RGB"), dtype=np.float64)
            else:
                # I;16, I, F: more than 8 bits per sample
                raise UnsupportedFormat(f"{path}: {mode} images (>8 bit) are not supported")
    except UnidentifiedImageError as e:
        raise CorruptFile(f"{path}: unrecognised header") from e
    except (OSError, ValueError, SyntaxError) as e:
        raise CorruptFile(f"{path}: {e}") from e

    logger.debug("Decoded %s (%dx%d, mode %s)", path, arr.shape[1], arr.shape[0], mode)
    return Raster(arr / 255.0)


def quantize(r: Raster) -> np.ndarray:
    """round-half-up of v*255, clipped to the 8-bit range."""
    return np.floor(np.clip(r.data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_image(r: Raster, path: str | Path) -> None:
    """Write PNG or PGM/PPM, chosen by the file extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in PNG_SUFFIXES:
        fmt = "PNG"
    elif suffix in NETPBM_SUFFIXES:
        fmt = "PPM"
        if suffix == ".pgm" and r.channels == 3:
            r = to_grayscale(r)
    else:
        raise UnsupportedFormat(f"{path}: cannot infer output format from '{suffix}'")

    img = Image.fromarray(quantize(r))
    try:
        img.save(path, format=fmt)
    except OSError as e:
        raise ImageIoError(f"{path}: {e}") from e


# ── Colour / resampling ────────────────────────────────────────

def to_grayscale(r: Raster) -> Raster:
    if r.channels == 1:
        return r
    return Raster(r.data @ LUMA_WEIGHTS)


def _linear_axis(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_in == n_out:
        return arr
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0

    shape = [1] * arr.ndim
    shape[axis] = n_out
    frac = frac.reshape(shape)
    a = np.take(arr, i0, axis=axis)
    b = np.take(arr, i1, axis=axis)
    return a + (b - a) * frac


def resample_array(arr: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize of a bare (h, w[, c]) array, half-pixel centred."""
    out = _linear_axis(arr, width, axis=1)
    return _linear_axis(out, height, axis=0)


def resize_bilinear(r: Raster, w: int, h: int) -> Raster:
    if w < 1 or h < 1:
        raise ValueError(f"target size must be >= 1, got {w}x{h}")
    if (w, h) == (r.width, r.height):
        return r
    return Raster(resample_array(r.data, w, h))


# ── Peripheral crop ─────────────────────────────────────────────

def ellipse_mask(width: int, height: int, margin_frac: float) -> BinaryMask:
    """Centred axis-aligned ellipse with semi-axes (0.5 - margin) * size."""
    if not 0.0 <= margin_frac < 0.5:
        raise ValueError(f"margin_frac must be in [0, 0.5), got {margin_frac}")
    a = (0.5 - margin_frac) * width
    b = (0.5 - margin_frac) * height
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    xs = (np.arange(width) - cx) / a
    ys = (np.arange(height) - cy) / b
    return BinaryMask(ys[:, None] ** 2 + xs[None, :] ** 2 <= 1.0)


def peripheral_crop(r: Raster, margin_frac: float, fill: float | None = 0.0) -> tuple[Raster, BinaryMask]:
    """
    Replace everything outside the inscribed ellipse with `fill` and return
    the ellipse mask. fill=None uses the median of the kept pixels.
    """
    mask = ellipse_mask(r.width, r.height, margin_frac)
    keep = mask.bits if r.channels == 1 else mask.bits[:, :, None]
    if fill is None:
        fill = float(np.median(r.data[mask.bits])) if mask.count() else 0.0
    return Raster(np.where(keep, r.data, fill)), mask
