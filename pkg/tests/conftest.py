import numpy as np
import pytest

from uwfkit.config import PipelineConfig
from uwfkit.raster import Raster, encode_image
from uwfkit.synth import SynthParams, harness_config, synth_pair


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def gaussian_blobs(size: int, blobs: list[tuple[float, float, float]], amplitude: float = 1.0) -> np.ndarray:
    """Sum of isotropic Gaussian blobs (cx, cy, sigma) on a black square."""
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    out = np.zeros((size, size))
    for cx, cy, s in blobs:
        out += amplitude * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * s * s))
    return out


@pytest.fixture
def blob_image():
    return Raster(gaussian_blobs(256, [(70, 90, 3.0), (170, 60, 5.0), (120, 180, 8.0)]))


@pytest.fixture
def small_cfg():
    """Pipeline at 256 px; both polarities bright so an image registers onto itself."""
    cfg = PipelineConfig(working_resolution=256)
    vessel = cfg.vesselness.model_copy(update={"ri_polarity": "bright", "fa_polarity": "bright"})
    return cfg.model_copy(update={"vesselness": vessel})


@pytest.fixture
def synth_cfg():
    return harness_config(PipelineConfig(working_resolution=512))


@pytest.fixture
def vessel_png(tmp_path):
    """A 256 px synthetic vessel frame written to disk."""
    path = tmp_path / "vessels.png"
    encode_image(synth_pair(3, SynthParams(size=256)).fixed, path)
    return path
