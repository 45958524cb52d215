"""
RI/FA pair registration with quality gating.

Per pair:
  decode -> grayscale -> working resolution -> peripheral crop
  -> vesselness (per-modality polarity) -> binary vessel map
  -> AKAZE-style features -> match -> RANSAC (FA moving, RI fixed)
  -> scale/rotation validity -> warp FA vessel map -> dice vs RI -> gate
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from tqdm import tqdm

from uwfkit.config import PipelineConfig
from uwfkit.errors import UwfkitError
from uwfkit.features import DescriptorSet, build_scale_space, describe_keypoints, detect_keypoints
from uwfkit.geometry import (
    Homography,
    RegistrationResult,
    dice_coefficient,
    match_descriptors,
    ransac_homography,
    rescale_homography,
    similarity_decompose,
    validity_check,
    warp_image,
)
from uwfkit.manifest import PairRecord, RegistrationRecord, sort_records
from uwfkit.raster import (
    BinaryMask,
    Raster,
    decode_image,
    ellipse_mask,
    encode_image,
    peripheral_crop,
    resize_bilinear,
    to_grayscale,
)
from uwfkit.vesselness import Polarity, binarize_mask, frangi_vesselness

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PreparedImage:
    """One modality at working resolution, ready for matching."""

    native_size: tuple[int, int]
    crop: BinaryMask
    inner: BinaryMask  # crop shrunk past the filter support; features live here
    vesselness: Raster
    vessels: BinaryMask
    descriptors: DescriptorSet


def inner_mask(size: int, cfg: PipelineConfig) -> BinaryMask:
    shrink = cfg.vesselness.edge_shrink_sigmas * max(cfg.vesselness.scales) / size
    return ellipse_mask(size, size, min(cfg.crop_margin + shrink, 0.49))


def prepare_image(img: Raster, polarity: Polarity, cfg: PipelineConfig) -> PreparedImage:
    size = cfg.working_resolution
    gray = resize_bilinear(to_grayscale(img), size, size)
    # a flat median fill keeps the crop step out of the Hessian norm that sets c
    cropped, crop = peripheral_crop(gray, cfg.crop_margin, fill=None)
    inner = inner_mask(size, cfg) & crop

    response = frangi_vesselness(cropped, cfg.vesselness.params(polarity))
    # the crop edge is the strongest "vessel" in the frame; drop it and renormalise
    data = np.where(inner.bits, response.data, 0.0)
    peak = data.max()
    vesselness = Raster(data / peak if peak > 0 else data)
    vessels = binarize_mask(vesselness, inner)

    ss = build_scale_space(vesselness, cfg.features.octaves, cfg.features.sublevels)
    kps = detect_keypoints(ss, cfg.features.threshold, inner, cfg.features.max_keypoints)
    descriptors = describe_keypoints(ss, kps)
    logger.debug("%s image: %d vessel px, %d keypoints, %d described",
                 polarity, vessels.count(), len(kps), len(descriptors))
    return PreparedImage(
        native_size=(img.width, img.height),
        crop=crop,
        inner=inner,
        vesselness=vesselness,
        vessels=vessels,
        descriptors=descriptors,
    )


def register_prepared(fa: PreparedImage, ri: PreparedImage, cfg: PipelineConfig) -> RegistrationResult:
    """Estimate FA -> RI, then apply the validity restriction and the dice measurement."""
    m = cfg.matching
    matches = match_descriptors(fa.descriptors, ri.descriptors, m.ratio)
    result = ransac_homography(
        matches, fa.descriptors.keypoints, ri.descriptors.keypoints,
        thresh_px=m.thresh_at(cfg.working_resolution), conf=m.ransac_conf, max_iter=m.ransac_max_iter,
        seed=cfg.seed, min_inliers=m.min_inliers,
    )
    result.scale, result.rotation = similarity_decompose(result.homography)
    g = cfg.gate
    result.validity = validity_check(result.homography, g.scale_min, g.scale_max, g.rotation_max)
    if result.validity:
        size = cfg.working_resolution
        warped = warp_image(fa.vessels, result.homography, size, size)
        overlap = ri.inner & warp_image(fa.inner, result.homography, size, size)
        result.dice = dice_coefficient(warped, ri.vessels, overlap)
    return result


def gate_reason(record: PairRecord, dice_min: float) -> str | None:
    """Primary rejection reason for a registered record, None when it passes."""
    reg = record.registration
    if reg is None or reg.validity is None:
        return record.rejection_reason or "not registered"
    if reg.validity == "fail":
        return reg.validity_reason or "validity"
    if reg.dice is None or reg.dice < dice_min:
        return f"dice {reg.dice or 0.0:.3f} < {dice_min:g}"
    return None


def dump_keypoints(fa: PreparedImage, ri: PreparedImage, path: str | Path) -> None:
    """Described keypoints of both modalities, working-resolution pixels."""
    payload = {"fa": fa.descriptors.keypoints.to_json(), "ri": ri.descriptors.keypoints.to_json()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    logger.debug("Wrote %d + %d keypoints to %s", len(payload["fa"]), len(payload["ri"]), path)


def register_images(
    ri: Raster,
    fa: Raster,
    cfg: PipelineConfig,
    record: PairRecord,
    keypoints_path: str | Path | None = None,
) -> PairRecord:
    fa_prep = prepare_image(fa, cfg.vesselness.fa_polarity, cfg)
    ri_prep = prepare_image(ri, cfg.vesselness.ri_polarity, cfg)
    if keypoints_path is not None:
        dump_keypoints(fa_prep, ri_prep, keypoints_path)
    result = register_prepared(fa_prep, ri_prep, cfg)

    size = (cfg.working_resolution, cfg.working_resolution)
    native = None
    if ri_prep.native_size != size or fa_prep.native_size != size:
        native = rescale_homography(
            result.homography, size, ri_prep.native_size, fa_prep.native_size,
        ).to_list()

    record = record.model_copy(update={
        "registration": RegistrationRecord.from_result(
            result,
            keypoints_fa=len(fa_prep.descriptors),
            keypoints_ri=len(ri_prep.descriptors),
            working_size=size,
        ),
        "homography_native": native,
    })
    reason = gate_reason(record, cfg.gate.dice_min)
    return record.reject(reason) if reason else record.accept()


def registered_fa_name(record: PairRecord) -> str:
    # one FA frame may be registered onto several RI frames
    return f"{Path(record.fa_path).stem}__{Path(record.ri_path).stem}.png"


def write_registered_fa(record: PairRecord, fa: Raster, ri_size: tuple[int, int], out_dir: str | Path) -> PairRecord:
    """Warp the native FA frame onto the RI frame and record where it went."""
    m = record.homography_native or record.registration.homography
    warped = warp_image(to_grayscale(fa), Homography(m), *ri_size)
    path = Path(out_dir) / registered_fa_name(record)
    path.parent.mkdir(parents=True, exist_ok=True)
    encode_image(warped, path)
    return record.model_copy(update={"registered_fa_path": str(path)})


def register_pair(
    ri_path: str | Path,
    fa_path: str | Path,
    cfg: PipelineConfig,
    record: PairRecord | None = None,
    registered_dir: str | Path | None = None,
    keypoints_path: str | Path | None = None,
) -> PairRecord:
    """
    Register one pair. Module errors become a rejected record; this never
    raises a UwfkitError. With `registered_dir`, an accepted pair also gets
    its FA frame resampled into RI geometry there; `keypoints_path` receives
    a JSON dump of the described keypoints.
    """
    record = record or PairRecord(patient_id="single", ri_path=str(ri_path), fa_path=str(fa_path))
    started = time.perf_counter()
    try:
        ri, fa = decode_image(ri_path), decode_image(fa_path)
        record = register_images(ri, fa, cfg, record, keypoints_path)
        if registered_dir is not None and record.status == "accepted":
            record = write_registered_fa(record, fa, (ri.width, ri.height), registered_dir)
    except UwfkitError as e:
        logger.warning("Pair %s rejected: %s (%s)", fa_path, e.reason, e)
        record = record.reject(e.reason)
    logger.info(
        "Registered %s -> %s: %s%s in %.2fs",
        fa_path, ri_path, record.status,
        f" ({record.rejection_reason})" if record.rejection_reason else "",
        time.perf_counter() - started,
    )
    return record


def qc_gate(records: list[PairRecord], dice_min: float = 0.5) -> tuple[list[PairRecord], list[PairRecord]]:
    """Re-apply the validity and dice gates; (accepted, rejected)."""
    accepted: list[PairRecord] = []
    rejected: list[PairRecord] = []
    for r in records:
        reason = gate_reason(r, dice_min)
        if reason is None:
            accepted.append(r.accept())
        else:
            rejected.append(r.reject(reason))
    logger.info("QC gate (dice >= %g): %d accepted, %d rejected", dice_min, len(accepted), len(rejected))
    return accepted, rejected


def _register_record(job: tuple[PairRecord, PipelineConfig, str | None]) -> PairRecord:
    record, cfg, registered_dir = job
    try:
        return register_pair(record.ri_path, record.fa_path, cfg, record, registered_dir)
    except Exception as e:  # keep the batch alive
        logger.exception("Unexpected failure on %s", record.fa_path)
        return record.reject(f"internal error: {type(e).__name__}")


def run_batch(
    records: list[PairRecord],
    cfg: PipelineConfig,
    workers: int | None = None,
    registered_dir: str | Path | None = None,
) -> list[PairRecord]:
    """Register every record; output order and content do not depend on `workers`."""
    out_dir = None if registered_dir is None else str(registered_dir)
    jobs = [(r, cfg, out_dir) for r in sort_records(records)]
    workers = workers or cfg.workers
    progress = dict(total=len(jobs), desc="register", unit="pair", disable=None)

    if workers <= 1 or len(jobs) <= 1:
        results = [_register_record(job) for job in tqdm(jobs, **progress)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(_register_record, jobs), **progress))

    accepted = sum(r.status == "accepted" for r in results)
    logger.info("Batch: %d pairs, %d accepted, %d rejected", len(results), accepted, len(results) - accepted)
    return sort_records(results)
