"""End-to-end checks on the synthetic harness at full working resolution."""

import numpy as np
import pytest

from uwfkit.config import PipelineConfig
from uwfkit.errors import UwfkitError
from uwfkit.geometry import corner_error, dice_coefficient, similarity, warp_image
from uwfkit.manifest import PairRecord, dump_manifest
from uwfkit.raster import encode_image
from uwfkit.registration import prepare_image, register_prepared, run_batch
from uwfkit.synth import SynthParams, harness_config, synth_pair


@pytest.fixture(scope="module")
def cfg():
    return harness_config(PipelineConfig())


def test_known_transforms_are_recovered(cfg):
    good = 0
    for seed in range(100):
        pair = synth_pair(seed)
        fa = prepare_image(pair.moving, cfg.vesselness.fa_polarity, cfg)
        ri = prepare_image(pair.fixed, cfg.vesselness.ri_polarity, cfg)
        try:
            result = register_prepared(fa, ri, cfg)
        except UwfkitError:
            continue
        if corner_error(result.homography, pair.true_h, 1024, 1024) < 2.0:
            good += 1
    assert good >= 95


@pytest.mark.slow
def test_dice_separates_aligned_from_misaligned(cfg):
    aligned, misaligned = 0, 0
    shift = similarity(1.0, 0.0, 120.0, 0.0)
    for seed in range(50):
        pair = synth_pair(1000 + seed)
        fa = prepare_image(pair.moving, cfg.vesselness.fa_polarity, cfg)
        ri = prepare_image(pair.fixed, cfg.vesselness.ri_polarity, cfg)
        for h, bucket in ((pair.true_h, "aligned"), (shift @ pair.true_h, "misaligned")):
            warped = warp_image(fa.vessels, h, 1024, 1024)
            overlap = ri.inner & warp_image(fa.inner, h, 1024, 1024)
            dice = dice_coefficient(warped, ri.vessels, overlap)
            if bucket == "aligned" and dice >= 0.8:
                aligned += 1
            if bucket == "misaligned" and dice < 0.5:
                misaligned += 1
    assert aligned >= 45
    assert misaligned >= 45


@pytest.mark.slow
def test_batch_is_independent_of_workers_and_order(tmp_path):
    cfg = harness_config(PipelineConfig(working_resolution=512))
    records = []
    for k in range(8):
        pair = synth_pair(200 + k, SynthParams(size=512))
        ri, fa = tmp_path / f"ri_{k}.png", tmp_path / f"fa_{k}.png"
        encode_image(pair.fixed, ri)
        encode_image(pair.moving, fa)
        records.append(PairRecord(patient_id=f"s{k}", ri_path=str(ri), fa_path=str(fa)))
    shuffled = [records[i] for i in np.random.default_rng(0).permutation(len(records))]
    serial = dump_manifest(run_batch(records, cfg, workers=1))
    parallel = dump_manifest(run_batch(shuffled, cfg, workers=8))
    assert serial == parallel
