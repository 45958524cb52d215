import math

import numpy as np
import pytest
from scipy import ndimage as ndi

from tests.conftest import gaussian_blobs
from uwfkit.errors import ImageTooSmall
from uwfkit.features import (
    DESCRIPTOR_BITS,
    FED_CYCLE_TIME,
    KeypointSet,
    build_scale_space,
    describe_keypoints,
    detect_keypoints,
    fed_evolve,
    fed_tau_sequence,
    hamming_matrix,
    level_sigmas,
)
from uwfkit.filters import gaussian, gradient
from uwfkit.geometry import Homography, similarity, warp_image
from uwfkit.raster import BinaryMask, Raster


def test_level_sigmas():
    sigmas = [s for s, _, _ in level_sigmas(2, 2)]
    assert sigmas == pytest.approx([1.6, 1.6 * math.sqrt(2), 3.2, 3.2 * math.sqrt(2)])


@pytest.mark.parametrize("t", [0.1, 1.0, 7.3, 40.0])
def test_fed_steps_sum_to_the_requested_time(t):
    taus = fed_tau_sequence(t)
    assert np.all(taus > 0)
    assert taus.sum() == pytest.approx(t, rel=1e-9)


def test_too_small_image():
    with pytest.raises(ImageTooSmall):
        build_scale_space(Raster(np.zeros((63, 64))))


def test_constant_image_stays_constant_and_has_no_keypoints():
    ss = build_scale_space(Raster(np.full((64, 64), 0.3)), octaves=2, sublevels=2)
    for level in ss.levels:
        assert np.ptp(level.image) == 0.0
    assert len(detect_keypoints(ss)) == 0


def test_nonlinear_diffusion_preserves_edges_better_than_gaussian():
    img = np.zeros((128, 128))
    img[:, 64:] = 1.0
    ss = build_scale_space(Raster(img), octaves=1, sublevels=4)
    last = ss.levels[-1]
    nonlinear = np.abs(gradient(last.image)[0][64]).max()
    linear = np.abs(gradient(gaussian(img, last.sigma))[0][64]).max()
    assert nonlinear >= linear


def test_disc_yields_top_keypoint_at_its_centre():
    ys, xs = np.mgrid[0:256, 0:256]
    img = (((xs - 100) ** 2 + (ys - 100) ** 2) <= 16).astype(float)
    kps = detect_keypoints(build_scale_space(Raster(img)))
    assert len(kps) >= 1
    top = kps[0]
    assert math.hypot(top.x - 100, top.y - 100) < 2.0


def test_keypoints_sorted_by_response(blob_image):
    kps = detect_keypoints(build_scale_space(blob_image))
    assert np.all(np.diff(kps.response) <= 0)


def test_keypoints_follow_a_quarter_turn(blob_image):
    w = blob_image.width
    base = detect_keypoints(build_scale_space(blob_image))
    turned = detect_keypoints(build_scale_space(Raster(np.rot90(blob_image.data))))
    assert len(base) == len(turned)
    expected = np.column_stack([base.y, w - 1 - base.x])
    for x, y in turned.points():
        assert np.min(np.hypot(expected[:, 0] - x, expected[:, 1] - y)) < 1.0


def test_threshold_is_monotone(blob_image):
    ss = build_scale_space(blob_image)
    counts = [len(detect_keypoints(ss, threshold=t)) for t in (1e-4, 1e-3, 1e-2)]
    assert counts[0] >= counts[1] >= counts[2]


def test_descriptor_width_and_determinism(blob_image):
    ss = build_scale_space(blob_image)
    kps = detect_keypoints(ss)
    a = describe_keypoints(ss, kps)
    b = describe_keypoints(build_scale_space(blob_image), detect_keypoints(build_scale_space(blob_image)))
    assert DESCRIPTOR_BITS == 486
    assert len(a) >= 1
    assert a.bits.shape == (len(a), 486)
    assert len(a.keypoints) == len(a)
    assert np.array_equal(a.bits, b.bits)


@pytest.mark.parametrize("gain", [2.0, 4.0])
def test_descriptors_ignore_contrast_gain(gain):
    img = gaussian_blobs(256, [(90, 100, 3.0), (160, 150, 4.0)])
    ss = build_scale_space(Raster(img))
    kps = detect_keypoints(ss)
    a = describe_keypoints(ss, kps)
    b = describe_keypoints(build_scale_space(Raster(gain * img)), kps)
    assert np.array_equal(a.bits, b.bits)


def test_empty_keypoints_give_empty_descriptors(blob_image):
    ss = build_scale_space(blob_image)
    out = describe_keypoints(ss, detect_keypoints(ss, threshold=1e6))
    assert out.bits.shape == (0, 486)


def test_hamming_matrix():
    a = np.array([[True, False, True, True]])
    b = np.array([[True, False, True, True], [False, True, False, False], [True, True, True, True]])
    assert hamming_matrix(a, b).tolist() == [[0, 4, 1]]


def step_image(size=96):
    img = np.zeros((size, size))
    img[:, size // 2:] = 1.0
    return img


def test_fed_evolve_conserves_mass_across_cycles():
    img = step_image() + gaussian_blobs(96, [(30, 40, 4.0)])
    out = fed_evolve(img, 6.0, k=0.05)
    assert out.sum() == pytest.approx(img.sum(), rel=1e-9)
    assert np.ptp(fed_evolve(np.full((32, 32), 0.7), 6.0, k=0.05)) == pytest.approx(0.0, abs=1e-12)


def test_fed_refreshes_conductivity_on_long_steps():
    img = step_image()
    short = 0.5 * FED_CYCLE_TIME
    assert np.array_equal(fed_evolve(img, short, 0.05), fed_evolve(img, short, 0.05, max_cycle_time=np.inf))
    refreshed = fed_evolve(img, 8.0, 0.05)
    frozen = fed_evolve(img, 8.0, 0.05, max_cycle_time=np.inf)
    assert not np.allclose(refreshed, frozen)


def test_keypoints_keep_clear_of_the_mask_edge():
    img = gaussian_blobs(256, [(100, 128, 4.0), (50, 128, 4.0)])
    ss = build_scale_space(Raster(img))
    bits = np.zeros((256, 256), dtype=bool)
    bits[:, :102] = True  # cuts through the blob at x=100
    free = detect_keypoints(ss)
    clipped = detect_keypoints(ss, valid=BinaryMask(bits))
    assert np.min(np.hypot(free.x - 100, free.y - 128)) < 2.0
    assert len(clipped) >= 1
    assert np.all(np.hypot(clipped.x - 100, clipped.y - 128) > 5.0)
    assert np.min(np.hypot(clipped.x - 50, clipped.y - 128)) < 2.0


def test_one_blob_gives_one_keypoint_across_octaves():
    img = gaussian_blobs(256, [(128.3, 127.6, 5.0)])
    kps = detect_keypoints(build_scale_space(Raster(img)))
    near = np.hypot(kps.x - 128.3, kps.y - 127.6) < 3.0
    assert near.sum() == 1
    assert np.hypot(kps.x[near] - 128.3, kps.y[near] - 127.6)[0] < 0.5


def test_descriptor_follows_a_thirty_degree_turn():
    rng = np.random.default_rng(8)
    size = 256
    ys, xs = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2
    disc = np.hypot(xs - c, ys - c) < 120
    img = Raster(ndi.gaussian_filter(rng.random((size, size)), 4.0) * disc)
    turn = math.radians(30)
    t = Homography([[1, 0, c], [0, 1, c], [0, 0, 1]])
    turned = warp_image(img, t @ similarity(1.0, turn) @ t.inverse(), size, size)

    ss_a, ss_b = build_scale_space(img), build_scale_space(turned)
    sigma = ss_a.levels[4].sigma
    for theta in (0.0, 0.7, -1.9, 2.8):
        a = describe_keypoints(ss_a, keypoint_at(c, c, sigma, theta))
        b = describe_keypoints(ss_b, keypoint_at(c, c, sigma, theta + turn))
        assert hamming_matrix(a.bits, b.bits)[0, 0] <= 60


def keypoint_at(x: float, y: float, sigma: float, orientation: float) -> KeypointSet:
    one = np.ones(1)
    return KeypointSet(x * one, y * one, sigma * one, one, orientation * one, np.zeros(1, dtype=int))
