"""
Homography estimation and the registration quality gates.

Provides:
  - Hamming ratio-test matching with cross-check
  - Hartley-normalised DLT and seeded RANSAC (symmetric transfer error)
  - Polar scale/rotation split and the validity restriction
  - Inverse-mapping warp, dice coefficient, working-to-native rescaling
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy import ndimage as ndi

from uwfkit.errors import (
    DegenerateConfiguration,
    DimensionMismatch,
    NoConsensus,
    SingularHomography,
    SingularUpperBlock,
    TooFewMatches,
)
from uwfkit.features import DescriptorSet, KeypointSet, hamming_matrix
from uwfkit.raster import BinaryMask, Raster

logger = logging.getLogger(__name__)

SCALE_MIN = 0.8
SCALE_MAX = 1.3
ROTATION_MAX = 2.0
BOUND_TOL = 1e-12
MIN_INLIERS = 8
REFIT_ROUNDS = 10
MIN_REFIT_SUPPORT = 4


def _project(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ m.T
    with np.errstate(divide="ignore", invalid="ignore"):
        return hom[:, :2] / hom[:, 2:3]


# ── Homography ─────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective transform, stored with m[2, 2] = 1."""

    m: np.ndarray

    def __post_init__(self):
        arr = np.array(self.m, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(arr)):
            raise SingularHomography("homography has non-finite entries")
        if abs(arr[2, 2]) < 1e-12 * max(1.0, np.abs(arr).max()):
            raise SingularHomography("m[2][2] is zero; cannot normalise")
        arr = arr / arr[2, 2]
        if abs(np.linalg.det(arr)) <= 1e-12 * max(1.0, np.abs(arr).max()) ** 3:
            raise SingularHomography("determinant is zero")
        arr.setflags(write=False)
        object.__setattr__(self, "m", arr)

    @classmethod
    def identity(cls) -> Homography:
        return cls(np.eye(3))

    def inverse(self) -> Homography:
        return Homography(np.linalg.inv(self.m))

    def __matmul__(self, other: Homography) -> Homography:
        return Homography(self.m @ other.m)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Map (N, 2) points; points sent to infinity come back as inf/nan."""
        return _project(self.m, pts)

    def to_list(self) -> list[list[float]]:
        return self.m.tolist()


def similarity(scale: float, rotation: float, tx: float = 0.0, ty: float = 0.0) -> Homography:
    c, s = math.cos(rotation), math.sin(rotation)
    return Homography([[scale * c, -scale * s, tx], [scale * s, scale * c, ty], [0.0, 0.0, 1.0]])


def corner_error(estimate: Homography, truth: Homography, width: int, height: int) -> float:
    """Mean reprojection distance of the four image corners."""
    corners = np.array([[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]], dtype=float)
    return float(np.linalg.norm(estimate.apply(corners) - truth.apply(corners), axis=1).mean())


def pixel_scale(from_size: tuple[int, int], to_size: tuple[int, int]) -> np.ndarray:
    """Pixel-centre scaling x' = (x + 0.5) * s - 0.5 between sizes (w, h)."""
    sx = to_size[0] / from_size[0]
    sy = to_size[1] / from_size[1]
    return np.array([[sx, 0.0, 0.5 * sx - 0.5], [0.0, sy, 0.5 * sy - 0.5], [0.0, 0.0, 1.0]])


def rescale_homography(
    h: Homography,
    from_size: tuple[int, int],
    to_size: tuple[int, int],
    moving_size: tuple[int, int] | None = None,
) -> Homography:
    """
    S_fixed . H . S_moving^-1: carry an H fitted at `from_size` to native sizes.
    `moving_size` defaults to `to_size` (plain conjugation).
    """
    s_fixed = pixel_scale(from_size, to_size)
    s_moving = pixel_scale(from_size, moving_size or to_size)
    return Homography(s_fixed @ h.m @ np.linalg.inv(s_moving))


# ── Matching ───────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class MatchSet:
    moving_idx: np.ndarray
    fixed_idx: np.ndarray
    distance: np.ndarray

    @classmethod
    def empty(cls) -> MatchSet:
        z = np.zeros(0, dtype=int)
        return cls(z, z, z)

    def __len__(self) -> int:
        return int(self.moving_idx.size)


def match_descriptors(a: DescriptorSet, b: DescriptorSet, ratio: float = 0.8) -> MatchSet:
    """Nearest neighbours of `a` (moving) in `b` (fixed): ratio test plus cross-check."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    if len(a) == 0 or len(b) == 0:
        return MatchSet.empty()

    d = hamming_matrix(a.bits, b.bits)
    nn = np.argmin(d, axis=1)
    rows = np.arange(d.shape[0])
    d1 = d[rows, nn]
    if d.shape[1] > 1:
        d2 = np.partition(d, 1, axis=1)[:, 1].astype(float)
    else:
        d2 = np.full(d.shape[0], np.inf)

    keep = d1 < ratio * d2
    keep &= np.argmin(d, axis=0)[nn] == rows
    idx = np.flatnonzero(keep)
    logger.debug("Matched %d of %d descriptors", idx.size, d.shape[0])
    return MatchSet(idx, nn[idx], d1[idx])


# ── DLT / RANSAC ───────────────────────────────────────────────

def _normalizer(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    mean_dist = np.linalg.norm(pts - centroid, axis=1).mean()
    if mean_dist < 1e-12:
        raise DegenerateConfiguration("points are coincident")
    s = math.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _is_degenerate(pts: np.ndarray, tol: float = 1e-9) -> bool:
    """Collinear set, or (for a minimal sample) any collinear triple."""
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[0] < 1e-12 or sv[1] <= tol * sv[0]:
        return True
    if len(pts) == 4:
        span = sv[0] ** 2
        for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
            u = pts[j] - pts[i]
            v = pts[k] - pts[i]
            if abs(u[0] * v[1] - u[1] * v[0]) <= tol * span:
                return True
    return False


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Least-squares H with dst ~ H src from >= 4 correspondences."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same number of points")
    if len(src) < 4:
        raise DegenerateConfiguration(f"need >= 4 correspondences, got {len(src)}")
    if _is_degenerate(src) or _is_degenerate(dst):
        raise DegenerateConfiguration("collinear or coincident points")

    t_src = _normalizer(src)
    t_dst = _normalizer(dst)
    ps = src @ t_src[:2, :2].T + t_src[:2, 2]
    pd = dst @ t_dst[:2, :2].T + t_dst[:2, 2]

    n = len(ps)
    x, y = ps[:, 0], ps[:, 1]
    u, v = pd[:, 0], pd[:, 1]
    zeros, ones = np.zeros(n), np.ones(n)
    A = np.empty((2 * n, 9))
    A[0::2] = np.column_stack([-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u])
    A[1::2] = np.column_stack([zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v])
    _, _, vt = np.linalg.svd(A)
    hn = vt[-1].reshape(3, 3)

    m = np.linalg.inv(t_dst) @ hn @ t_src
    try:
        return Homography(m)
    except SingularHomography as e:
        raise DegenerateConfiguration(str(e)) from e


def transfer_error(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Symmetric transfer error: mean of forward and backward reprojection distances."""
    fwd = np.linalg.norm(h.apply(src) - dst, axis=1)
    bwd = np.linalg.norm(_project(np.linalg.inv(h.m), dst) - src, axis=1)
    err = 0.5 * (fwd + bwd)
    return np.where(np.isfinite(err), err, np.inf)


@dataclass(frozen=True)
class Validity:
    passed: bool
    reason: str | None = None

    @classmethod
    def ok(cls) -> Validity:
        return cls(True)

    @classmethod
    def fail(cls, reason: str) -> Validity:
        return cls(False, reason)

    def __bool__(self) -> bool:
        return self.passed


@dataclass
class RegistrationResult:
    homography: Homography
    inlier_count: int
    total_matches: int
    scale: float = math.nan
    rotation: float = math.nan
    validity: Validity | None = None
    dice: float | None = None
    iterations: int = 0
    inliers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool), repr=False)


def _required_iterations(w: float, conf: float, sample: int = 4) -> float:
    p = w**sample
    if p >= 1.0:
        return 0.0
    if p <= 0.0:
        return math.inf
    return math.log(1.0 - conf) / math.log1p(-p)


def _better(count: int, m: np.ndarray, best_count: int, best_m: np.ndarray | None) -> bool:
    if best_m is None or count > best_count:
        return True
    return count == best_count and tuple(m.ravel()) < tuple(best_m.ravel())


def refit_on_inliers(
    h: Homography,
    inliers: np.ndarray,
    src: np.ndarray,
    dst: np.ndarray,
    thresh_px: float,
    max_rounds: int = REFIT_ROUNDS,
) -> tuple[Homography, np.ndarray]:
    """
    Least-squares DLT on the consensus set, repeated until the set stops
    changing. The returned mask is always the inlier set of the returned model.
    """
    for _ in range(max_rounds):
        try:
            refit = dlt_homography(src[inliers], dst[inliers])
        except (DegenerateConfiguration, SingularHomography):
            logger.debug("Refit on %d inliers degenerate, keeping previous model", int(inliers.sum()))
            break
        refit_inl = transfer_error(refit, src, dst) < thresh_px
        if refit_inl.sum() < MIN_REFIT_SUPPORT:
            break
        stable = np.array_equal(refit_inl, inliers)
        h, inliers = refit, refit_inl
        if stable:
            break
    return h, inliers


def ransac_homography(
    matches: MatchSet,
    moving: KeypointSet,
    fixed: KeypointSet,
    thresh_px: float = 3.0,
    conf: float = 0.995,
    max_iter: int = 2000,
    seed: int = 0,
    min_inliers: int = MIN_INLIERS,
) -> RegistrationResult:
    """
    Robust moving -> fixed homography.

    Iteration i draws its sample from a generator seeded with (seed, i), and
    ties between equally supported models go to the lexicographically smaller
    matrix, so the result does not depend on how iterations are scheduled.
    """
    n = len(matches)
    if n < 4:
        raise TooFewMatches(f"{n} matches, need >= 4")
    src = moving.points()[matches.moving_idx]
    dst = fixed.points()[matches.fixed_idx]

    best_count, best_h, best_inl = -1, None, None
    needed: float = max_iter
    it = 0
    while it < min(needed, max_iter):
        rng = np.random.default_rng([seed, it])
        sample = rng.choice(n, size=4, replace=False)
        it += 1
        try:
            h = dlt_homography(src[sample], dst[sample])
        except (DegenerateConfiguration, SingularHomography):
            continue
        inl = transfer_error(h, src, dst) < thresh_px
        count = int(inl.sum())
        if _better(count, h.m, best_count, None if best_h is None else best_h.m):
            best_count, best_h, best_inl = count, h, inl
            needed = _required_iterations(count / n, conf)

    if best_h is None or best_count < min_inliers:
        raise NoConsensus(f"best consensus {max(best_count, 0)} < {min_inliers} inliers")

    best_h, best_inl = refit_on_inliers(best_h, best_inl, src, dst, thresh_px)
    if int(best_inl.sum()) < min_inliers:
        raise NoConsensus(f"refit consensus {int(best_inl.sum())} < {min_inliers} inliers")

    logger.debug("RANSAC: %d/%d inliers after %d iterations", int(best_inl.sum()), n, it)
    return RegistrationResult(
        homography=best_h,
        inlier_count=int(best_inl.sum()),
        total_matches=n,
        iterations=it,
        inliers=best_inl,
    )


# ── Validity restriction ───────────────────────────────────────

def similarity_decompose(h: Homography) -> tuple[float, float]:
    """(sqrt|det A|, polar rotation angle) of the upper-left 2x2 block A."""
    a = h.m[:2, :2]
    det = float(np.linalg.det(a))
    if abs(det) < 1e-12:
        raise SingularUpperBlock(f"det of linear part is {det:g}")
    r, _ = linalg.polar(a)
    return math.sqrt(abs(det)), math.atan2(r[1, 0], r[0, 0])


def validity_check(
    h: Homography,
    scale_min: float = SCALE_MIN,
    scale_max: float = SCALE_MAX,
    rotation_max: float = ROTATION_MAX,
) -> Validity:
    """Scale bounds are inclusive, the rotation bound is strict."""
    try:
        scale, rotation = similarity_decompose(h)
    except SingularUpperBlock:
        return Validity.fail("singular upper block")
    if np.linalg.det(h.m[:2, :2]) < 0:
        return Validity.fail("reflection")
    if scale < scale_min - BOUND_TOL:
        return Validity.fail(f"scale {scale:.2f} < {scale_min:g}")
    if scale > scale_max + BOUND_TOL:
        return Validity.fail(f"scale {scale:.2f} > {scale_max:g}")
    if abs(rotation) >= rotation_max:
        return Validity.fail(f"|rotation| {abs(rotation):.2f} ≥ {rotation_max:g}")
    return Validity.ok()


# ── Warping / dice ─────────────────────────────────────────────

def _source_coords(h: Homography, out_w: int, out_h: int) -> tuple[np.ndarray, np.ndarray]:
    inv = np.linalg.inv(h.m)
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    den = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / den
        sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / den
    behind = ~(den > 0) | ~np.isfinite(sx) | ~np.isfinite(sy)
    sx[behind] = -2.0
    sy[behind] = -2.0
    return sx, sy


def warp_image(src: Raster | BinaryMask, h: Homography, out_w: int, out_h: int) -> Raster | BinaryMask:
    """Sample src at h^-1 p for every output pixel p; outside -> 0 / False."""
    sx, sy = _source_coords(h, out_w, out_h)

    if isinstance(src, BinaryMask):
        ix = np.floor(sx + 0.5).astype(np.intp)
        iy = np.floor(sy + 0.5).astype(np.intp)
        inside = (ix >= 0) & (ix < src.width) & (iy >= 0) & (iy < src.height)
        out = np.zeros((out_h, out_w), dtype=bool)
        out[inside] = src.bits[iy[inside], ix[inside]]
        return BinaryMask(out)

    coords = np.array([sy, sx])
    if src.channels == 1:
        data = ndi.map_coordinates(src.data, coords, order=1, mode="constant", cval=0.0)
    else:
        data = np.stack(
            [ndi.map_coordinates(src.data[:, :, c], coords, order=1, mode="constant", cval=0.0)
             for c in range(3)],
            axis=-1,
        )
    return Raster(data)


def dice_coefficient(a: BinaryMask, b: BinaryMask, valid: BinaryMask) -> float:
    if not (a.shape == b.shape == valid.shape):
        raise DimensionMismatch(f"masks {a.shape}, {b.shape}, {valid.shape} differ")
    sa = a.bits & valid.bits
    sb = b.bits & valid.bits
    total = int(sa.sum()) + int(sb.sum())
    if total == 0:
        return 0.0
    return 2.0 * int((sa & sb).sum()) / total
