"""
PairRecord and the JSON Lines manifest.

One record per RI/FA pair. Manifests are always written sorted by
(patient_id, visit_id, eye, fa_path, ri_path), then by content, so that a
batch run is byte-reproducible whatever order the records arrived in.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from uwfkit.errors import ManifestError
from uwfkit.geometry import RegistrationResult
from uwfkit.metrics import MetricReport

logger = logging.getLogger(__name__)

Phase = Literal["early", "mid", "late", "unknown"]
Eye = Literal["left", "right"]
Status = Literal["pending", "accepted", "rejected"]
Split = Literal["train", "val", "test"]

PHASES: tuple[Phase, ...] = ("early", "mid", "late", "unknown")
SPLITS: tuple[Split, ...] = ("train", "val", "test")


class RegistrationRecord(BaseModel):
    """Serialised RegistrationResult plus per-stage diagnostics."""

    homography: list[list[float]] | None = None
    inlier_count: int = 0
    total_matches: int = 0
    scale: float | None = None
    rotation: float | None = None
    validity: Literal["pass", "fail"] | None = None
    validity_reason: str | None = None
    dice: float | None = None
    iterations: int = 0
    keypoints_fa: int = 0
    keypoints_ri: int = 0
    working_size: tuple[int, int] | None = None

    @classmethod
    def from_result(cls, result: RegistrationResult, **diagnostics) -> RegistrationRecord:
        validity = None
        reason = None
        if result.validity is not None:
            validity = "pass" if result.validity.passed else "fail"
            reason = result.validity.reason
        return cls(
            homography=result.homography.to_list(),
            inlier_count=result.inlier_count,
            total_matches=result.total_matches,
            scale=result.scale,
            rotation=result.rotation,
            validity=validity,
            validity_reason=reason,
            dice=result.dice,
            iterations=result.iterations,
            **diagnostics,
        )


class PairRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    patient_id: str = Field(min_length=1)
    eye: Eye | None = None
    visit_id: str = ""
    ri_path: str
    fa_path: str
    injection_elapsed_s: float | None = None
    phase: Phase = "unknown"
    registration: RegistrationRecord | None = None
    homography_native: list[list[float]] | None = None
    registered_fa_path: str | None = None  # FA resampled into RI geometry
    metrics: MetricReport | None = None
    generated_path: str | None = None
    status: Status = "pending"
    rejection_reason: str | None = None
    split: Split | None = None

    @property
    def sort_key(self) -> tuple[str, str, str, str, str]:
        # one FA frame may pair with several RI frames of the same visit
        return (self.patient_id, self.visit_id, self.eye or "", self.fa_path, self.ri_path)

    def accept(self) -> PairRecord:
        return self.model_copy(update={"status": "accepted", "rejection_reason": None})

    def reject(self, reason: str) -> PairRecord:
        return self.model_copy(update={"status": "rejected", "rejection_reason": reason})


def sort_records(records: Iterable[PairRecord]) -> list[PairRecord]:
    return sorted(records, key=lambda r: (r.sort_key, r.model_dump_json()))


def read_manifest(path: str | Path) -> list[PairRecord]:
    path = Path(path)
    records: list[PairRecord] = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ManifestError(f"{path}: {e}") from e
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(PairRecord.model_validate_json(line))
        except ValidationError as e:
            raise ManifestError(f"{path}:{lineno}: {e.errors()[0]['msg']}") from e
    logger.debug("Read %d records from %s", len(records), path)
    return records


def dump_manifest(records: Iterable[PairRecord]) -> str:
    return "".join(r.model_dump_json() + "\n" for r in sort_records(records))


def write_manifest(records: Iterable[PairRecord], path: str | Path) -> None:
    path = Path(path)
    text = dump_manifest(records)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ManifestError(f"{path}: {e}") from e
    logger.info("Wrote %d records to %s", text.count("\n"), path)
