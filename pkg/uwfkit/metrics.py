"""
Fidelity metrics for a generated frame against its ground truth.

Calculates:
  - MAE (0-255 scale) and PSNR (dB, +inf for identical inputs)
  - SSIM (11x11 Gaussian window, sigma 1.5) and 5-scale MS-SSIM
  - Gradient Variance: tile variances of Sobel gradients, compared
"""

from __future__ import annotations

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, field_serializer, field_validator
from scipy import ndimage as ndi

from uwfkit.errors import DimensionMismatch, EmptyInput, ImageTooSmall, PatchSizeInvalid
from uwfkit.raster import BinaryMask, Raster

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
assert abs(sum(MS_SSIM_WEIGHTS) - 1.0) < 1e-3, "MS-SSIM exponents must sum to ~1"
MS_SSIM_MIN_SIDE = SSIM_WINDOW * 2 ** (len(MS_SSIM_WEIGHTS) - 1)  # 176

GV_PATCH = 8


class MetricReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    mae: float
    psnr: float
    ssim: float
    ms_ssim: float
    gv: float

    @field_validator("psnr", mode="before")
    @classmethod
    def _parse_inf(cls, v):
        if isinstance(v, str) and v.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        return v

    @field_serializer("psnr")
    def _dump_inf(self, v: float):
        return "inf" if math.isinf(v) else v


def _check_pair(pred: Raster, target: Raster) -> tuple[np.ndarray, np.ndarray]:
    if pred.shape != target.shape or pred.channels != target.channels:
        raise DimensionMismatch(
            f"pred {pred.data.shape} and target {target.data.shape} differ in size"
        )
    if pred.channels != 1:
        raise ValueError("metrics expect single-channel rasters")
    return pred.data, target.data


def _mask_bits(mask: BinaryMask | None, shape: tuple[int, int]) -> np.ndarray | None:
    if mask is None:
        return None
    if mask.shape != shape:
        raise DimensionMismatch(f"mask {mask.shape} does not match image {shape}")
    if mask.count() == 0:
        raise EmptyInput("metric mask is empty")
    return mask.bits


def _mse(x: np.ndarray, y: np.ndarray, bits: np.ndarray | None) -> float:
    sq = (x - y) ** 2
    return float(sq[bits].mean() if bits is not None else sq.mean())


def mae(pred: Raster, target: Raster, mask: BinaryMask | None = None) -> float:
    x, y = _check_pair(pred, target)
    bits = _mask_bits(mask, pred.shape)
    diff = np.abs(x - y)
    return float((diff[bits].mean() if bits is not None else diff.mean()) * 255.0)


def psnr(pred: Raster, target: Raster, mask: BinaryMask | None = None) -> float:
    x, y = _check_pair(pred, target)
    mse = _mse(x, y, _mask_bits(mask, pred.shape))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


# ── SSIM / MS-SSIM ─────────────────────────────────────────────

def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian taps; the 2-D window is their outer product."""
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    return g / g.sum()


def _window_mean(arr: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Weighted window mean at every fully-inside window centre."""
    half = taps.size // 2
    out = ndi.correlate1d(arr, taps, axis=0, mode="reflect")
    out = ndi.correlate1d(out, taps, axis=1, mode="reflect")
    return out[half:-half, half:-half]


def _ssim_terms(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(luminance map, contrast-structure map) over valid window centres."""
    taps = gaussian_window()
    mu_x = _window_mean(x, taps)
    mu_y = _window_mean(y, taps)
    sxx = _window_mean(x * x, taps) - mu_x**2
    syy = _window_mean(y * y, taps) - mu_y**2
    sxy = _window_mean(x * y, taps) - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + SSIM_C1) / (mu_x**2 + mu_y**2 + SSIM_C1)
    cs = (2.0 * sxy + SSIM_C2) / (sxx + syy + SSIM_C2)
    return lum, cs


def ssim(pred: Raster, target: Raster, mask: BinaryMask | None = None) -> float:
    x, y = _check_pair(pred, target)
    if min(pred.shape) < SSIM_WINDOW:
        raise ImageTooSmall(f"SSIM needs >= {SSIM_WINDOW}x{SSIM_WINDOW}, got {pred.shape}")
    bits = _mask_bits(mask, pred.shape)
    lum, cs = _ssim_terms(x, y)
    smap = lum * cs
    if bits is None:
        return float(smap.mean())
    half = SSIM_WINDOW // 2
    centres = bits[half:-half, half:-half]
    if not centres.any():
        raise EmptyInput("no SSIM window centre inside the mask")
    return float(smap[centres].mean())


def mean_pool2(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[0] // 2, arr.shape[1] // 2
    return arr[: 2 * h, : 2 * w].reshape(h, 2, w, 2).mean(axis=(1, 3))


def ms_ssim(pred: Raster, target: Raster, mask: BinaryMask | None = None) -> float:
    """
    Contrast-structure at every scale, luminance at the coarsest only.
    Negative per-scale terms are clamped to zero before exponentiation.
    """
    x, y = _check_pair(pred, target)
    if min(pred.shape) < MS_SSIM_MIN_SIDE:
        raise ImageTooSmall(f"MS-SSIM needs >= {MS_SSIM_MIN_SIDE} px per side, got {pred.shape}")
    bits = _mask_bits(mask, pred.shape)
    if bits is not None:
        x = np.where(bits, x, 0.0)
        y = np.where(bits, y, 0.0)

    result = 1.0
    last = len(MS_SSIM_WEIGHTS) - 1
    for j, weight in enumerate(MS_SSIM_WEIGHTS):
        lum, cs = _ssim_terms(x, y)
        term = float((lum * cs).mean()) if j == last else float(cs.mean())
        result *= max(term, 0.0) ** weight
        if j < last:
            x, y = mean_pool2(x), mean_pool2(y)
    return result


# ── Gradient Variance ──────────────────────────────────────────

def _tile_variances(g: np.ndarray, patch: int) -> np.ndarray:
    h, w = g.shape
    return g.reshape(h // patch, patch, w // patch, patch).var(axis=(1, 3))


def gradient_variance(
    pred: Raster, target: Raster, patch: int = GV_PATCH, mask: BinaryMask | None = None,
) -> float:
    x, y = _check_pair(pred, target)
    h, w = pred.shape
    if patch < 1 or h % patch or w % patch:
        raise PatchSizeInvalid(f"patch {patch} does not tile a {w}x{h} image")
    bits = _mask_bits(mask, pred.shape)
    if bits is not None:
        x = np.where(bits, x, 0.0)
        y = np.where(bits, y, 0.0)

    total = 0.0
    for axis in (1, 0):
        vp = _tile_variances(ndi.sobel(x, axis=axis, mode="reflect"), patch)
        vt = _tile_variances(ndi.sobel(y, axis=axis, mode="reflect"), patch)
        total += float(np.mean((vp - vt) ** 2))
    return 0.5 * total


def compute_all(
    pred: Raster, target: Raster, mask: BinaryMask | None = None, gv_patch: int = GV_PATCH,
) -> MetricReport:
    report = MetricReport(
        mae=mae(pred, target, mask),
        psnr=psnr(pred, target, mask),
        ssim=ssim(pred, target, mask),
        ms_ssim=ms_ssim(pred, target, mask),
        gv=gradient_variance(pred, target, gv_patch, mask),
    )
    logger.debug("Metrics: %s", report)
    return report
