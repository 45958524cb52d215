import math

import numpy as np
import pytest

from uwfkit.errors import (
    DegenerateConfiguration,
    DimensionMismatch,
    NoConsensus,
    SingularHomography,
    TooFewMatches,
)
from uwfkit.features import DescriptorSet, KeypointSet
from uwfkit.geometry import (
    Homography,
    MatchSet,
    corner_error,
    dice_coefficient,
    dlt_homography,
    match_descriptors,
    ransac_homography,
    refit_on_inliers,
    rescale_homography,
    similarity,
    similarity_decompose,
    transfer_error,
    validity_check,
    warp_image,
)
from uwfkit.raster import BinaryMask, Raster

PROJECTIVE = Homography([[1.1, 0.05, 3.0], [-0.04, 0.95, -2.0], [1e-4, -2e-4, 1.0]])


def keypoints(pts: np.ndarray) -> KeypointSet:
    n = len(pts)
    return KeypointSet(pts[:, 0], pts[:, 1], np.ones(n), np.ones(n), np.zeros(n), np.zeros(n, dtype=int))


def correspondences(src: np.ndarray, dst: np.ndarray):
    n = len(src)
    matches = MatchSet(np.arange(n), np.arange(n), np.zeros(n, dtype=int))
    return matches, keypoints(src), keypoints(dst)


def descriptors(bits: np.ndarray) -> DescriptorSet:
    return DescriptorSet(bits, keypoints(np.zeros((len(bits), 2))))


def blob(size=128, sigma=20.0):
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    c = (size - 1) / 2
    return Raster(np.exp(-((xs - c) ** 2 + (ys - c) ** 2) / (2 * sigma**2)))


def about_centre(h: Homography, size: int) -> Homography:
    c = (size - 1) / 2
    t = Homography([[1, 0, c], [0, 1, c], [0, 0, 1]])
    return t @ h @ t.inverse()


# ── Homography ─────────────────────────────────────────────────

def test_homography_is_normalised():
    h = Homography(np.eye(3) * 4.0)
    assert h.m[2, 2] == 1.0
    assert np.allclose(h.m, np.eye(3))
    with pytest.raises(SingularHomography):
        Homography([[1, 0, 0], [0, 1, 0], [0, 0, 0]])
    with pytest.raises(SingularHomography):
        Homography(np.zeros((3, 3)) + [[0, 0, 0], [0, 0, 0], [0, 0, 1]])


def test_inverse_composes_to_identity():
    assert np.allclose((PROJECTIVE @ PROJECTIVE.inverse()).m, np.eye(3))


# ── DLT ────────────────────────────────────────────────────────

def test_dlt_identity_on_unit_square():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert np.allclose(dlt_homography(sq, sq).m, np.eye(3), atol=1e-10)


def test_dlt_translation():
    sq = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float)
    h = dlt_homography(sq, sq + [5, 7])
    assert np.allclose(h.m, [[1, 0, 5], [0, 1, 7], [0, 0, 1]], atol=1e-9)


def test_dlt_recovers_projective_map(rng):
    src = rng.uniform(0, 100, size=(6, 2))
    h = dlt_homography(src, PROJECTIVE.apply(src))
    assert np.allclose(h.m, PROJECTIVE.m, atol=1e-7)


def test_dlt_rejects_collinear_points():
    line = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], dtype=float)
    with pytest.raises(DegenerateConfiguration):
        dlt_homography(line, line)


# ── RANSAC ─────────────────────────────────────────────────────

def test_ransac_exact_correspondences(rng):
    src = rng.uniform(0, 500, size=(50, 2))
    result = ransac_homography(*correspondences(src, PROJECTIVE.apply(src)))
    assert result.inlier_count == 50
    assert result.total_matches == 50
    assert np.allclose(result.homography.m, PROJECTIVE.m, atol=1e-6)


def test_ransac_with_outliers_and_noise():
    truth = about_centre(similarity(1.1, 0.2, 20.0, -15.0), 1024)
    good = 0
    for trial in range(100):
        rng = np.random.default_rng(trial)
        src = rng.uniform(100, 900, size=(200, 2))
        dst = truth.apply(src)
        n_in = 120
        dst[:n_in] += rng.normal(0.0, 0.5, size=(n_in, 2))
        dst[n_in:] = rng.uniform(0, 1024, size=(200 - n_in, 2))
        result = ransac_homography(*correspondences(src, dst), seed=trial)
        if corner_error(result.homography, truth, 1024, 1024) < 2.0:
            good += 1
    assert good >= 90


def test_ransac_is_deterministic_per_seed(rng):
    src = rng.uniform(0, 500, size=(60, 2))
    dst = PROJECTIVE.apply(src)
    dst[40:] = rng.uniform(0, 500, size=(20, 2))
    a = ransac_homography(*correspondences(src, dst), seed=3)
    b = ransac_homography(*correspondences(src, dst), seed=3)
    assert np.array_equal(a.homography.m, b.homography.m)
    assert np.array_equal(a.inliers, b.inliers)


def test_ransac_needs_enough_matches(rng):
    src = rng.uniform(0, 100, size=(3, 2))
    with pytest.raises(TooFewMatches):
        ransac_homography(*correspondences(src, src))
    src = rng.uniform(0, 100, size=(5, 2))
    with pytest.raises(NoConsensus):
        ransac_homography(*correspondences(src, src), min_inliers=8)


def test_ransac_with_no_usable_sample():
    # every 4-subset holds a collinear triple
    src = np.array([[0, 0], [1, 1], [2, 2], [3, 3], [5, 0]], dtype=float)
    with pytest.raises(NoConsensus):
        ransac_homography(*correspondences(src, src), min_inliers=4, max_iter=200)


def test_refit_improves_on_a_rough_model():
    rng = np.random.default_rng(4)
    truth = about_centre(similarity(1.05, 0.1, 5.0, -3.0), 512)
    src = rng.uniform(50, 450, size=(130, 2))
    dst = truth.apply(src)
    dst[:100] += rng.normal(0.0, 0.5, size=(100, 2))
    dst[100:] = rng.uniform(0, 512, size=(30, 2))

    rough = similarity(1.0, 0.0, 1.5, 0.0) @ truth
    inliers = transfer_error(rough, src, dst) < 3.0
    h, refit_inl = refit_on_inliers(rough, inliers, src, dst, 3.0)

    assert corner_error(h, truth, 512, 512) < 1.0
    assert corner_error(h, truth, 512, 512) < corner_error(rough, truth, 512, 512)
    assert np.array_equal(refit_inl, transfer_error(h, src, dst) < 3.0)
    assert refit_inl[:100].sum() >= 95


def test_ransac_inliers_belong_to_the_returned_model(rng):
    src = rng.uniform(0, 500, size=(80, 2))
    dst = PROJECTIVE.apply(src) + rng.normal(0.0, 0.8, size=(80, 2))
    dst[60:] = rng.uniform(0, 500, size=(20, 2))
    result = ransac_homography(*correspondences(src, dst), seed=1)
    assert np.array_equal(result.inliers, transfer_error(result.homography, src, dst) < 3.0)
    assert result.inlier_count == int(result.inliers.sum())


# ── Matching ───────────────────────────────────────────────────

def test_identical_descriptor_sets_match_themselves(rng):
    bits = rng.random((100, 486)) < 0.5
    m = match_descriptors(descriptors(bits), descriptors(bits))
    assert len(m) == 100
    assert np.array_equal(m.moving_idx, m.fixed_idx)
    assert np.all(m.distance == 0)


def test_ambiguous_match_is_dropped():
    a = np.zeros((1, 486), dtype=bool)
    b = np.zeros((2, 486), dtype=bool)
    b[0, :10] = True
    b[1, 10:20] = True
    assert len(match_descriptors(descriptors(a), descriptors(b), ratio=0.99)) == 0


def test_planted_matches_are_recovered(rng):
    fixed = rng.random((150, 486)) < 0.5
    moving = fixed[:100].copy()
    for row in moving:
        flip = rng.choice(486, size=30, replace=False)
        row[flip] = ~row[flip]
    m = match_descriptors(descriptors(moving), descriptors(fixed))
    assert int(np.sum(m.moving_idx == m.fixed_idx)) >= 95


def test_empty_sets_give_no_matches(rng):
    empty = descriptors(np.zeros((0, 486), dtype=bool))
    assert len(match_descriptors(empty, descriptors(rng.random((3, 486)) < 0.5))) == 0


# ── Decomposition / validity ───────────────────────────────────

def test_similarity_decompose_examples():
    assert similarity_decompose(Homography.identity()) == pytest.approx((1.0, 0.0))
    s, r = similarity_decompose(similarity(1.0, 0.3))
    assert s == pytest.approx(1.0, abs=1e-12)
    assert r == pytest.approx(0.3, abs=1e-12)
    rot = np.array([[math.cos(0.4), -math.sin(0.4)], [math.sin(0.4), math.cos(0.4)]])
    a = 1.2 * rot @ np.array([[1.0, 0.1], [0.0, 1.0]])
    m = np.eye(3)
    m[:2, :2] = a
    assert similarity_decompose(Homography(m))[0] == pytest.approx(1.2, abs=1e-9)


def test_similarity_decompose_roundtrips(rng):
    for _ in range(200):
        s = rng.uniform(0.5, 2.0)
        r = rng.uniform(-math.pi + 1e-6, math.pi)
        got_s, got_r = similarity_decompose(similarity(s, r, *rng.uniform(-50, 50, 2)))
        assert got_s == pytest.approx(s, abs=1e-9)
        assert abs(math.remainder(got_r - r, 2 * math.pi)) < 1e-9


@pytest.mark.parametrize(
    "scale, rotation, passed",
    [
        (1.0, 0.0, True),
        (0.8, 0.0, True),
        (1.3, 0.0, True),
        (0.5, 0.0, False),
        (1.5, 0.0, False),
        (1.0, 1.99, True),
        (1.0, 2.0, False),
        (1.0, -2.5, False),
    ],
)
def test_validity_bounds(scale, rotation, passed):
    assert validity_check(similarity(scale, rotation)).passed is passed


def test_rotation_bound_is_strict_without_slack():
    assert validity_check(similarity(1.0, 2.0 - 5e-13)).passed
    h = similarity(1.0, 0.3)
    rotation = similarity_decompose(h)[1]
    assert not validity_check(h, rotation_max=rotation).passed
    assert validity_check(h, rotation_max=math.nextafter(rotation, 1.0)).passed


def test_validity_reasons():
    assert validity_check(similarity(0.5, 0.0)).reason == "scale 0.50 < 0.8"
    assert validity_check(similarity(1.0, 2.5)).reason.startswith("|rotation| 2.50")
    assert validity_check(Homography([[-1, 0, 0], [0, 1, 0], [0, 0, 1]])).reason == "reflection"
    assert validity_check(Homography([[1, 0, 0], [0, 0, 1], [0, 1, 1]])).reason == "singular upper block"


def test_validity_matches_bounds_on_random_similarities(rng):
    for _ in range(1000):
        s = rng.uniform(0.5, 1.6)
        r = rng.uniform(-math.pi + 1e-6, math.pi)
        expected = 0.8 <= s <= 1.3 and abs(r) < 2.0
        assert validity_check(similarity(s, r, 10.0, -4.0)).passed is expected


@pytest.mark.parametrize("lam", [0.5, -3.0, 1e3])
def test_validity_ignores_projective_scale(lam):
    m = similarity(1.1, 0.7, 5.0, 5.0).m
    assert validity_check(Homography(lam * m)).passed


# ── Warping / dice ─────────────────────────────────────────────

def test_identity_warp(rng):
    img = Raster(rng.random((20, 30)))
    mask = BinaryMask(rng.random((20, 30)) < 0.5)
    assert np.allclose(warp_image(img, Homography.identity(), 30, 20).data, img.data, atol=1e-7)
    assert np.array_equal(warp_image(mask, Homography.identity(), 30, 20).bits, mask.bits)


def test_translation_moves_mask_pixels():
    bits = np.zeros((32, 32), dtype=bool)
    bits[5, 5] = True
    out = warp_image(BinaryMask(bits), similarity(1.0, 0.0, 10.0, 0.0), 32, 32)
    assert out.bits[5, 15]
    assert out.count() == 1


def test_outside_samples_are_zero():
    out = warp_image(Raster(np.ones((16, 16))), similarity(1.0, 0.0, 100.0, 0.0), 16, 16)
    assert np.all(out.data == 0.0)


def test_warp_roundtrip_and_composition():
    img = blob()
    h1 = about_centre(similarity(1.02, 0.05, 2.0, -1.0), 128)
    h2 = about_centre(similarity(0.99, -0.03, -1.5, 0.5), 128)
    inner = (slice(10, -10), slice(10, -10))

    back = warp_image(warp_image(img, h1, 128, 128), h1.inverse(), 128, 128)
    assert np.mean(np.abs(back.data[inner] - img.data[inner])) < 0.02

    twice = warp_image(warp_image(img, h1, 128, 128), h2, 128, 128)
    once = warp_image(img, h2 @ h1, 128, 128)
    assert np.mean(np.abs(twice.data[inner] - once.data[inner])) < 0.02


def test_dice_examples():
    valid = BinaryMask(np.ones((20, 20), dtype=bool))
    a = np.zeros(400, dtype=bool)
    b = np.zeros(400, dtype=bool)
    a[:100] = True
    b[50:150] = True
    a, b = BinaryMask(a.reshape(20, 20)), BinaryMask(b.reshape(20, 20))
    assert dice_coefficient(a, b, valid) == pytest.approx(0.5)
    assert dice_coefficient(b, a, valid) == dice_coefficient(a, b, valid)
    assert dice_coefficient(a, a, valid) == 1.0
    empty = BinaryMask(np.zeros((20, 20), dtype=bool))
    assert dice_coefficient(empty, empty, valid) == 0.0
    with pytest.raises(DimensionMismatch):
        dice_coefficient(a, BinaryMask(np.zeros((10, 10), dtype=bool)), valid)


def test_dice_only_counts_valid_pixels():
    a = BinaryMask(np.array([[True, True], [False, False]]))
    b = BinaryMask(np.array([[True, False], [False, False]]))
    valid = BinaryMask(np.array([[True, False], [True, True]]))
    assert dice_coefficient(a, b, valid) == 1.0


# ── Rescaling ──────────────────────────────────────────────────

def test_rescale_translation_to_native():
    h = similarity(1.0, 0.0, 1.0, -2.0)
    native = rescale_homography(h, (256, 256), (1024, 1024))
    assert np.allclose(native.m, [[1, 0, 4], [0, 1, -8], [0, 0, 1]])


def test_rescale_with_different_moving_size():
    native = rescale_homography(Homography.identity(), (256, 256), (1024, 1024), moving_size=(512, 512))
    assert np.allclose(native.apply(np.array([[1.5, 1.5]])), [[3.5, 3.5]])
