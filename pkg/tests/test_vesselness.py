import numpy as np
import pytest
from scipy import ndimage as ndi

from uwfkit.errors import DegenerateHistogram, EmptyScaleList
from uwfkit.filters import hessian, symmetric_eigenvalues
from uwfkit.raster import BinaryMask, Raster
from uwfkit.vesselness import VesselParams, binarize_mask, frangi_vesselness, otsu_threshold


def line_image(bright=True, size=64, width=2.0):
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    profile = np.exp(-((xs - size / 2) ** 2) / (2 * width**2))
    return Raster(profile if bright else 1.0 - profile)


def test_hessian_of_quadratic():
    ys, xs = np.mgrid[0:10, 0:10].astype(float)
    lxx, lxy, lyy = hessian(3 * xs**2 + 2 * xs * ys - ys**2)
    assert np.allclose(lxx[2:-2, 2:-2], 6.0)
    assert np.allclose(lxy[2:-2, 2:-2], 2.0)
    assert np.allclose(lyy[2:-2, 2:-2], -2.0)


def test_eigenvalues_are_ordered_by_magnitude():
    l1, l2 = symmetric_eigenvalues(np.array([1.0, -5.0]), np.array([0.0, 0.0]), np.array([-3.0, 2.0]))
    assert l1.tolist() == [1.0, 2.0]
    assert l2.tolist() == [-3.0, -5.0]


def test_empty_scale_list():
    with pytest.raises(EmptyScaleList):
        VesselParams(scales=())


def test_constant_image_has_no_response():
    out = frangi_vesselness(Raster(np.full((32, 32), 0.4)), VesselParams(scales=(1.0, 2.0)))
    assert np.all(out.data == 0.0)


@pytest.mark.parametrize("bright", [True, False])
def test_polarity_selects_vessel_contrast(bright):
    img = line_image(bright)
    same = frangi_vesselness(img, VesselParams(scales=(1.0, 2.0, 4.0), polarity="bright" if bright else "dark"))
    other = frangi_vesselness(img, VesselParams(scales=(1.0, 2.0, 4.0), polarity="dark" if bright else "bright"))
    assert same.data.max() == pytest.approx(1.0)
    assert same.data[32, 32] > 0.5
    assert other.data[32, 32] == 0.0
    assert np.all((same.data >= 0) & (same.data <= 1))


def test_otsu_on_two_separated_modes():
    values = np.concatenate([np.full(100, 0.1), np.full(100, 0.9)])
    t = otsu_threshold(values)
    assert 0.1 < t < 0.9
    assert t == pytest.approx(0.5, abs=0.01)


def test_hysteresis_keeps_only_seeded_components():
    v = np.zeros((10, 20))
    v[2, 1:6] = [0.3, 0.3, 1.0, 0.3, 0.3]  # weak run attached to a strong pixel
    v[7, 10:15] = 0.3  # weak run on its own
    out = binarize_mask(Raster(v), BinaryMask(np.ones_like(v, dtype=bool)), high=0.5)
    assert out.bits[2, 1:6].all()
    assert not out.bits[7].any()


def test_binarize_edge_cases():
    v = Raster(np.full((8, 8), 0.2))
    with pytest.raises(DegenerateHistogram):
        binarize_mask(v, BinaryMask(np.zeros((8, 8), dtype=bool)))
    assert binarize_mask(v, BinaryMask(np.ones((8, 8), dtype=bool))).count() == 0


def smooth_noise(rng, size=48):
    return Raster(ndi.gaussian_filter(rng.random((size, size)), 2.0))


def test_response_follows_quarter_turns(rng):
    img = smooth_noise(rng)
    p = VesselParams(scales=(1.0, 2.0, 4.0), polarity="bright")
    turned = frangi_vesselness(Raster(np.rot90(img.data)), p)
    assert np.max(np.abs(turned.data - np.rot90(frangi_vesselness(img, p).data))) < 1e-4


def test_response_ignores_intensity_offset(rng):
    img = smooth_noise(rng)
    p = VesselParams(scales=(1.0, 2.0), polarity="dark")
    shifted = frangi_vesselness(Raster(img.data + 0.3), p)
    assert np.max(np.abs(shifted.data - frangi_vesselness(img, p).data)) < 1e-6


def test_thin_line_peaks_on_its_centre_row():
    img = np.zeros((64, 64))
    img[31:34, :] = 1.0
    bright = frangi_vesselness(Raster(img), VesselParams(polarity="bright"))
    cols = range(8, 56)
    on_line = sum(int(np.argmax(bright.data[:, x]) == 32) for x in cols)
    assert on_line >= 0.95 * len(cols)

    dark = frangi_vesselness(Raster(img), VesselParams(polarity="dark"))
    assert np.all(dark.data[32, 8:56] <= 0.05)


def test_bimodal_response_keeps_the_bright_half():
    v = np.full((16, 16), 0.1)
    v[:, 8:] = 0.9
    out = binarize_mask(Raster(v), BinaryMask(np.ones_like(v, dtype=bool)))
    assert np.array_equal(out.bits, v == 0.9)


def test_binarize_is_monotone_under_a_fixed_threshold(rng):
    valid = BinaryMask(np.ones((32, 32), dtype=bool))
    d = smooth_noise(rng, 32).data
    v = 0.8 * (d - d.min()) / (d.max() - d.min())
    for offset in (0.02, 0.1, 0.15):
        before = binarize_mask(Raster(v), valid, high=0.5)
        after = binarize_mask(Raster(v + offset), valid, high=0.5)
        assert not np.any(before.bits & ~after.bits)
