"""
AKAZE-style features on vessel maps.

Calculates:
  - Nonlinear scale space (Perona-Malik conductivity, Fast Explicit Diffusion)
  - Keypoints: sigma-normalised Hessian determinant extrema, subpixel refined,
    oriented by the dominant gradient sector
  - 486-bit M-LDB binary descriptors (3 grids x 3 channels)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy import ndimage as ndi

from uwfkit.errors import ImageTooSmall
from uwfkit.filters import gaussian, gradient, hessian
from uwfkit.raster import BinaryMask, Raster, resample_array

logger = logging.getLogger(__name__)

BASE_SIGMA = 1.6
TAU_MAX = 0.25  # explicit 2-D scheme stability bound
FED_CYCLE_TIME = 1.0  # level pixels^2 per conductivity refresh
CONTRAST_PERCENTILE = 70.0
MIN_IMAGE_SIDE = 64
DEFAULT_THRESHOLD = 1e-3
MAX_KEYPOINTS = 2000
EDGE_CLEARANCE = 3.0  # in units of keypoint sigma

ORIENTATION_RADIUS = 6  # in units of sigma
ORIENTATION_WEIGHT_SIGMA = 2.5
SECTOR_WIDTH = math.pi / 3.0
SECTOR_STEP = 0.15

PATCH_SIZE = 20.0  # in units of sigma
PATCH_SAMPLES = 24  # divisible by 2, 3 and 4
DESCRIPTOR_GRIDS = (2, 3, 4)
DESCRIPTOR_BITS = sum(g * g * (g * g - 1) // 2 for g in DESCRIPTOR_GRIDS) * 3  # 486

_RING = np.ones((3, 3), dtype=bool)
_RING[1, 1] = False


# ── Scale space ────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ScaleLevel:
    image: np.ndarray = field(repr=False)
    sigma: float  # full-resolution pixels
    octave: int
    sublevel: int
    ratio: float  # full-resolution pixels per level pixel

    @property
    def sigma_px(self) -> float:
        return self.sigma / self.ratio

    @property
    def time(self) -> float:
        return 0.5 * self.sigma**2


@dataclass(frozen=True, eq=False)
class ScaleSpace:
    levels: tuple[ScaleLevel, ...]
    width: int
    height: int
    contrast: float


def level_sigmas(octaves: int, sublevels: int, base: float = BASE_SIGMA) -> list[tuple[float, int, int]]:
    """sigma_i = base * 2^(o + s/S) for every (octave, sublevel)."""
    return [
        (base * 2.0 ** (o + s / sublevels), o, s)
        for o in range(octaves)
        for s in range(sublevels)
    ]


def contrast_factor(base: np.ndarray, percentile: float = CONTRAST_PERCENTILE) -> float:
    """Percentile of the nonzero gradient magnitudes of the (smoothed) base image."""
    gx, gy = gradient(gaussian(base, 1.0))
    mag = np.hypot(gx, gy)
    nonzero = mag[mag > 0]
    if nonzero.size == 0:
        return 1.0
    return float(np.percentile(nonzero, percentile))


def fed_tau_sequence(total_time: float, tau_max: float = TAU_MAX) -> np.ndarray:
    """FED step sizes for one cycle; they sum to `total_time`."""
    if total_time <= 0:
        return np.zeros(0)
    n = math.ceil(math.sqrt(3.0 * total_time / tau_max + 0.25) - 0.5 - 1e-8)
    scale = 3.0 * total_time / (tau_max * (n * n + n))
    i = np.arange(n)
    cos2 = np.cos(math.pi * (2 * i + 1) / (4 * n + 2)) ** 2
    return scale * tau_max / (2.0 * cos2)


def conductivity(L: np.ndarray, k: float) -> np.ndarray:
    gx, gy = gradient(gaussian(L, 1.0))
    return 1.0 / (1.0 + (gx**2 + gy**2) / (k * k))


def face_conductivity(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conductivity on the vertical and horizontal pixel faces (neighbour means)."""
    return 0.5 * (g[:, 1:] + g[:, :-1]), 0.5 * (g[1:, :] + g[:-1, :])


def nld_step(L: np.ndarray, faces: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """div(g grad L) on a 4-neighbour stencil with zero-flux borders."""
    fx = faces[0] * np.diff(L, axis=1)
    fy = faces[1] * np.diff(L, axis=0)
    div = np.zeros_like(L)
    div[:, :-1] += fx
    div[:, 1:] -= fx
    div[:-1, :] += fy
    div[1:, :] -= fy
    return div


def fed_evolve(L: np.ndarray, total_time: float, k: float, max_cycle_time: float = FED_CYCLE_TIME) -> np.ndarray:
    """
    Advance L by `total_time` in FED cycles of at most `max_cycle_time`,
    refreshing the conductivity at the start of every cycle.
    """
    if total_time <= 0:
        return L
    cycles = max(1, math.ceil(total_time / max_cycle_time - 1e-9))
    taus = fed_tau_sequence(total_time / cycles)
    for _ in range(cycles):
        faces = face_conductivity(conductivity(L, k))
        for tau in taus:
            L = L + tau * nld_step(L, faces)
    return L


def halfsample(L: np.ndarray) -> np.ndarray:
    h, w = L.shape
    return resample_array(L, max(1, w // 2), max(1, h // 2))


def build_scale_space(
    img: Raster,
    octaves: int = 4,
    sublevels: int = 4,
    base_sigma: float = BASE_SIGMA,
) -> ScaleSpace:
    if img.channels != 1:
        raise ValueError("build_scale_space expects a single-channel raster")
    if min(img.width, img.height) < MIN_IMAGE_SIDE:
        raise ImageTooSmall(f"{img.width}x{img.height} is below {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")
    if octaves < 1 or sublevels < 1:
        raise ValueError("octaves and sublevels must be >= 1")

    L = gaussian(img.data, base_sigma)
    k = contrast_factor(L)
    levels: list[ScaleLevel] = []

    for sigma, o, s in level_sigmas(octaves, sublevels, base_sigma):
        if levels:
            prev = levels[-1]
            if o > prev.octave:
                L = halfsample(L)
            ratio = img.width / L.shape[1]
            # evolution time is in full-resolution units; convert to level pixels
            L = fed_evolve(L, (0.5 * sigma**2 - prev.time) / ratio**2, k)
        ratio = img.width / L.shape[1]
        levels.append(ScaleLevel(image=L, sigma=sigma, octave=o, sublevel=s, ratio=ratio))

    logger.debug("Scale space: %d levels, contrast k=%.5f", len(levels), k)
    return ScaleSpace(levels=tuple(levels), width=img.width, height=img.height, contrast=k)


# ── Keypoints ──────────────────────────────────────────────────

@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    sigma: float
    response: float
    orientation: float
    level: int


@dataclass(frozen=True, eq=False)
class KeypointSet:
    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    response: np.ndarray
    orientation: np.ndarray
    level: np.ndarray

    @classmethod
    def empty(cls) -> KeypointSet:
        z = np.zeros(0)
        return cls(z, z, z, z, z, np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return int(self.x.size)

    def __iter__(self) -> Iterator[Keypoint]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> Keypoint:
        return Keypoint(
            x=float(self.x[i]), y=float(self.y[i]), sigma=float(self.sigma[i]),
            response=float(self.response[i]), orientation=float(self.orientation[i]),
            level=int(self.level[i]),
        )

    def subset(self, idx: np.ndarray) -> KeypointSet:
        return KeypointSet(
            self.x[idx], self.y[idx], self.sigma[idx],
            self.response[idx], self.orientation[idx], self.level[idx],
        )

    def points(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def to_json(self) -> list[dict]:
        return [
            {"x": k.x, "y": k.y, "sigma": k.sigma, "response": k.response, "orientation": k.orientation}
            for k in self
        ]


def determinant_response(level: ScaleLevel) -> np.ndarray:
    lxx, lxy, lyy = hessian(level.image)
    return (lxx * lyy - lxy**2) * level.sigma_px**4


def _sample_at(arr: np.ndarray, ss: ScaleSpace, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Bilinear read of a level map at full-resolution positions."""
    h, w = arr.shape
    lx = (fx + 0.5) * (w / ss.width) - 0.5
    ly = (fy + 0.5) * (h / ss.height) - 0.5
    return ndi.map_coordinates(arr, np.array([ly, lx]), order=1, mode="nearest")


def _subpixel(D: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadratic-fit offsets; `ok` is False when the fit is singular or moves > 1 px."""
    c = D[ys, xs]
    r, l = D[ys, xs + 1], D[ys, xs - 1]
    d, u = D[ys + 1, xs], D[ys - 1, xs]
    dx = (r - l) / 2.0
    dy = (d - u) / 2.0
    dxx = r + l - 2.0 * c
    dyy = d + u - 2.0 * c
    dxy = (D[ys + 1, xs + 1] - D[ys + 1, xs - 1] - D[ys - 1, xs + 1] + D[ys - 1, xs - 1]) / 4.0
    det = dxx * dyy - dxy**2
    safe = np.where(det != 0, det, 1.0)
    ox = -(dyy * dx - dxy * dy) / safe
    oy = -(dxx * dy - dxy * dx) / safe
    ok = (det != 0) & (np.hypot(ox, oy) <= 1.0)
    return ox, oy, ok


def _orientations(level: ScaleLevel, grads: tuple[np.ndarray, np.ndarray],
                  lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
    """Direction of the 60-degree sector with the largest summed gradient."""
    r = ORIENTATION_RADIUS
    ii, jj = np.mgrid[-r:r + 1, -r:r + 1]
    inside = ii**2 + jj**2 < r * r
    ii, jj = ii[inside].astype(float), jj[inside].astype(float)
    weights = np.exp(-(ii**2 + jj**2) / (2.0 * ORIENTATION_WEIGHT_SIGMA**2))
    starts = np.arange(0.0, 2.0 * math.pi, SECTOR_STEP)

    s = level.sigma_px
    out = np.zeros(lx.size)
    for lo in range(0, lx.size, 256):
        px = lx[lo:lo + 256, None] + jj[None, :] * s
        py = ly[lo:lo + 256, None] + ii[None, :] * s
        coords = np.array([py.ravel(), px.ravel()])
        gx = ndi.map_coordinates(grads[0], coords, order=1, mode="nearest").reshape(px.shape) * weights
        gy = ndi.map_coordinates(grads[1], coords, order=1, mode="nearest").reshape(px.shape) * weights
        ang = np.mod(np.arctan2(gy, gx), 2.0 * math.pi)
        in_sector = np.mod(ang[:, :, None] - starts[None, None, :], 2.0 * math.pi) < SECTOR_WIDTH
        sx = np.einsum("kp,kps->ks", gx, in_sector)
        sy = np.einsum("kp,kps->ks", gy, in_sector)
        best = np.argmax(sx**2 + sy**2, axis=1)
        rows = np.arange(best.size)
        out[lo:lo + 256] = np.arctan2(sy[rows, best], sx[rows, best])
    out[out <= -math.pi] = math.pi
    return out


def detect_keypoints(
    ss: ScaleSpace,
    threshold: float = DEFAULT_THRESHOLD,
    valid: BinaryMask | None = None,
    max_keypoints: int = MAX_KEYPOINTS,
) -> KeypointSet:
    """
    Scale-space maxima of the normalised Hessian determinant.

    With a validity mask, a keypoint must also lie EDGE_CLEARANCE of its own
    sigmas inside the mask (the image border counts as mask edge): closer
    in, the response comes from structures the edge cut off, and those do
    not move with the scene.
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    if valid is not None and valid.shape != (ss.height, ss.width):
        raise ValueError("validity mask does not match the scale-space size")

    clearance = None
    if valid is not None:
        clearance = ndi.distance_transform_edt(np.pad(valid.bits, 1))[1:-1, 1:-1]

    responses = [determinant_response(lv) for lv in ss.levels]
    neighbour_max = [ndi.maximum_filter(D, size=3, mode="nearest") for D in responses]
    found: list[tuple[np.ndarray, ...]] = []

    for i, (level, D) in enumerate(zip(ss.levels, responses)):
        h, w = D.shape
        if h < 3 or w < 3:
            continue
        cand = D > threshold
        cand &= D > ndi.maximum_filter(D, footprint=_RING, mode="nearest")
        for j in (i - 1, i + 1):
            # same octave; the neighbouring octave is read at subpixel positions below
            if 0 <= j < len(responses) and responses[j].shape == D.shape:
                cand &= D > neighbour_max[j]
        cand[0, :] = cand[-1, :] = False
        cand[:, 0] = cand[:, -1] = False
        ys, xs = np.nonzero(cand)
        if ys.size == 0:
            continue

        ox, oy, ok = _subpixel(D, ys, xs)
        ys, xs, ox, oy = ys[ok], xs[ok], ox[ok], oy[ok]
        lx = xs + ox
        ly = ys + oy
        fx = (lx + 0.5) * (ss.width / w) - 0.5
        fy = (ly + 0.5) * (ss.height / h) - 0.5
        inb = (fx >= 0) & (fx <= ss.width - 1) & (fy >= 0) & (fy <= ss.height - 1)
        for j in (i - 1, i + 1):
            if 0 <= j < len(responses) and responses[j].shape != D.shape:
                inb &= D[ys, xs] > _sample_at(neighbour_max[j], ss, fx, fy)
        if clearance is not None:
            rx = np.clip(np.rint(fx).astype(int), 0, ss.width - 1)
            ry = np.clip(np.rint(fy).astype(int), 0, ss.height - 1)
            inb &= clearance[ry, rx] >= EDGE_CLEARANCE * level.sigma
        if not inb.any():
            continue
        found.append((
            fx[inb], fy[inb], lx[inb], ly[inb], D[ys[inb], xs[inb]],
            np.full(int(inb.sum()), i),
        ))

    if not found:
        return KeypointSet.empty()

    fx, fy, lx, ly, resp, lvl = (np.concatenate(parts) for parts in zip(*found))
    order = np.lexsort((fx, fy, -resp))[:max_keypoints]
    fx, fy, lx, ly, resp, lvl = fx[order], fy[order], lx[order], ly[order], resp[order], lvl[order]

    orientation = np.zeros(fx.size)
    for i in np.unique(lvl):
        sel = lvl == i
        level = ss.levels[i]
        orientation[sel] = _orientations(level, gradient(level.image), lx[sel], ly[sel])

    sigma = np.array([ss.levels[i].sigma for i in lvl])
    logger.debug("Detected %d keypoints (threshold %.2g)", fx.size, threshold)
    return KeypointSet(fx, fy, sigma, resp, orientation, lvl.astype(int))


# ── Descriptors ────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """Row i is the 486-bit descriptor of keypoints[i]."""

    bits: np.ndarray
    keypoints: KeypointSet

    def __len__(self) -> int:
        return int(self.bits.shape[0])


def _nearest_level(ss: ScaleSpace, sigma: float) -> int:
    return int(np.argmin([abs(lv.sigma - sigma) for lv in ss.levels]))


def _grid_bits(cells: np.ndarray, g: int) -> np.ndarray:
    """cells: (K, 24, 24, 3) samples -> (K, C(g^2, 2) * 3) comparison bits."""
    k = cells.shape[0]
    step = PATCH_SAMPLES // g
    means = cells.reshape(k, g, step, g, step, 3).mean(axis=(2, 4)).reshape(k, g * g, 3)
    i, j = np.triu_indices(g * g, 1)
    return (means[:, i, :] > means[:, j, :]).reshape(k, -1)


def describe_keypoints(ss: ScaleSpace, kps: KeypointSet) -> DescriptorSet:
    """
    M-LDB descriptors sampled on a 20 sigma x 20 sigma patch rotated by the
    keypoint orientation. Keypoints whose patch leaves the level are dropped.
    """
    if len(kps) == 0:
        return DescriptorSet(np.zeros((0, DESCRIPTOR_BITS), dtype=bool), kps)

    offsets = ((np.arange(PATCH_SAMPLES) + 0.5) / PATCH_SAMPLES - 0.5) * PATCH_SIZE
    vv, uu = np.meshgrid(offsets, offsets, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()

    bits = np.zeros((len(kps), DESCRIPTOR_BITS), dtype=bool)
    keep = np.zeros(len(kps), dtype=bool)
    levels = np.array([_nearest_level(ss, s) for s in kps.sigma])

    for li in np.unique(levels):
        level = ss.levels[li]
        h, w = level.image.shape
        sel = np.flatnonzero(levels == li)
        s = level.sigma_px
        cx = (kps.x[sel] + 0.5) / level.ratio - 0.5
        cy = (kps.y[sel] + 0.5) / (ss.height / h) - 0.5
        cos_t = np.cos(kps.orientation[sel])[:, None]
        sin_t = np.sin(kps.orientation[sel])[:, None]
        px = cx[:, None] + (cos_t * uu - sin_t * vv) * s
        py = cy[:, None] + (sin_t * uu + cos_t * vv) * s

        inside = (px.min(axis=1) >= 0) & (px.max(axis=1) <= w - 1)
        inside &= (py.min(axis=1) >= 0) & (py.max(axis=1) <= h - 1)
        if not inside.any():
            continue
        sel, px, py = sel[inside], px[inside], py[inside]
        cos_t, sin_t = cos_t[inside], sin_t[inside]

        gx, gy = gradient(level.image)
        coords = np.array([py.ravel(), px.ravel()])
        shape = px.shape
        intensity = ndi.map_coordinates(level.image, coords, order=1).reshape(shape)
        sx = ndi.map_coordinates(gx, coords, order=1).reshape(shape)
        sy = ndi.map_coordinates(gy, coords, order=1).reshape(shape)
        dx = sx * cos_t + sy * sin_t
        dy = -sx * sin_t + sy * cos_t

        cells = np.stack([intensity, dx, dy], axis=-1).reshape(
            sel.size, PATCH_SAMPLES, PATCH_SAMPLES, 3,
        )
        bits[sel] = np.concatenate([_grid_bits(cells, g) for g in DESCRIPTOR_GRIDS], axis=1)
        keep[sel] = True

    dropped = int((~keep).sum())
    if dropped:
        logger.debug("Dropped %d keypoints whose patch leaves the image", dropped)
    idx = np.flatnonzero(keep)
    return DescriptorSet(bits[idx], kps.subset(idx))


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between boolean descriptor rows."""
    fa = a.astype(np.float32)
    fb = b.astype(np.float32)
    d = fa @ (1.0 - fb).T + (1.0 - fa) @ fb.T
    return np.rint(d).astype(np.int32)
