"""
Generated-frame evaluation and per-phase aggregation.

Aggregates follow the usual fidelity table: mean (±SD) per phase per metric,
with +inf PSNR values excluded and counted.
"""

from __future__ import annotations

import logging
import math
import statistics
from pathlib import Path
from typing import Iterable

from pydantic import BaseModel

from uwfkit.config import PipelineConfig
from uwfkit.errors import DimensionMismatch, EmptyInput, MetricOutOfRange, UwfkitError
from uwfkit.manifest import PHASES, PairRecord, Phase
from uwfkit.metrics import MetricReport, compute_all
from uwfkit.raster import Raster, decode_image, ellipse_mask, resize_bilinear, to_grayscale

logger = logging.getLogger(__name__)

METRIC_NAMES = ("mae", "psnr", "ssim", "ms_ssim", "gv")


def evaluate_images(pred: Raster, target: Raster, cfg: PipelineConfig) -> MetricReport:
    pred = to_grayscale(pred)
    target = to_grayscale(target)
    if cfg.evaluation.resize:
        size = cfg.working_resolution
        pred = resize_bilinear(pred, size, size)
        target = resize_bilinear(target, size, size)
    elif pred.shape != target.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs target {target.shape} and resizing is disabled")

    mask = None
    if cfg.evaluation.crop_mask:
        mask = ellipse_mask(pred.width, pred.height, cfg.crop_margin)
    return compute_all(pred, target, mask, cfg.evaluation.gv_patch)


def evaluate_pair(pred_path: str | Path, target_path: str | Path, cfg: PipelineConfig) -> MetricReport:
    report = evaluate_images(decode_image(pred_path), decode_image(target_path), cfg)
    logger.info("Evaluated %s against %s: PSNR %.2f dB, SSIM %.4f", pred_path, target_path, report.psnr, report.ssim)
    return report


def evaluation_target(record: PairRecord) -> str:
    """The registered FA when one was written, else the raw FA frame."""
    if record.registered_fa_path:
        return record.registered_fa_path
    logger.debug("No registered FA for %s; scoring against the raw frame", record.fa_path)
    return record.fa_path


def evaluate_manifest(records: Iterable[PairRecord], cfg: PipelineConfig) -> list[PairRecord]:
    """
    Attach metrics for every record with a generated frame, scored against
    the FA frame registered onto the RI input. Failures leave metrics unset.
    """
    out: list[PairRecord] = []
    for r in records:
        if r.generated_path:
            try:
                r = r.model_copy(update={"metrics": evaluate_pair(r.generated_path, evaluation_target(r), cfg)})
            except UwfkitError as e:
                logger.warning("Evaluation of %s failed: %s", r.generated_path, e)
        out.append(r)
    return out


# ── Aggregation ────────────────────────────────────────────────

class MetricStats(BaseModel):
    mean: float | None
    sd: float | None
    n: int
    sd_undefined: bool = False  # N == 1, SD reported as 0


class PhaseSummary(BaseModel):
    phase: Phase
    n: int
    psnr_inf_skipped: int = 0
    metrics: dict[str, MetricStats]


class AggregateReport(BaseModel):
    phases: list[PhaseSummary]
    missing_phases: list[Phase]
    total: int


def _stats(values: list[float]) -> MetricStats:
    if not values:
        return MetricStats(mean=None, sd=None, n=0)
    if len(values) == 1:
        return MetricStats(mean=values[0], sd=0.0, n=1, sd_undefined=True)
    return MetricStats(mean=statistics.mean(values), sd=statistics.stdev(values), n=len(values))


def _check_ranges(summary: PhaseSummary) -> None:
    ssim_mean = summary.metrics["ssim"].mean
    ms_mean = summary.metrics["ms_ssim"].mean
    if ssim_mean is not None and not -1.0 <= ssim_mean <= 1.0:
        raise MetricOutOfRange(f"{summary.phase}: SSIM mean {ssim_mean} outside [-1, 1]")
    if ms_mean is not None and not 0.0 <= ms_mean <= 1.0:
        raise MetricOutOfRange(f"{summary.phase}: MS-SSIM mean {ms_mean} outside [0, 1]")


def aggregate_report(reports: list[tuple[Phase, MetricReport]]) -> AggregateReport:
    if not reports:
        raise EmptyInput("no metric reports to aggregate")

    by_phase: dict[str, list[MetricReport]] = {p: [] for p in PHASES}
    for phase, report in reports:
        by_phase[phase].append(report)

    phases: list[PhaseSummary] = []
    for phase in PHASES:
        group = by_phase[phase]
        if not group:
            continue
        finite_psnr = [r.psnr for r in group if math.isfinite(r.psnr)]
        skipped = len(group) - len(finite_psnr)
        if skipped:
            logger.warning("%s: %d identical-pair PSNR values (+inf) skipped", phase, skipped)
        metrics = {name: _stats([getattr(r, name) for r in group]) for name in METRIC_NAMES if name != "psnr"}
        metrics["psnr"] = _stats(finite_psnr)
        summary = PhaseSummary(
            phase=phase,
            n=len(group),
            psnr_inf_skipped=skipped,
            metrics={name: metrics[name] for name in METRIC_NAMES},
        )
        _check_ranges(summary)
        phases.append(summary)

    return AggregateReport(
        phases=phases,
        missing_phases=[p for p in PHASES if not by_phase[p]],
        total=len(reports),
    )


def manifest_reports(records: Iterable[PairRecord]) -> list[tuple[Phase, MetricReport]]:
    """(phase, metrics) for records that carry metrics and were not rejected."""
    return [(r.phase, r.metrics) for r in records if r.metrics is not None and r.status != "rejected"]
