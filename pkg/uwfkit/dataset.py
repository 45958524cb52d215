"""
Dataset bookkeeping: FA phase bins, RI/FA pairing, patient-level split.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections import defaultdict
from typing import Iterable, Literal

from pydantic import BaseModel, Field

from uwfkit.errors import EmptyRecordList, NegativeElapsed
from uwfkit.manifest import PHASES, SPLITS, Eye, PairRecord, Phase, sort_records

logger = logging.getLogger(__name__)

EARLY_START_S = 25.0
EARLY_END_S = 60.0
MID_END_S = 300.0


def phase_bin(elapsed: float | None) -> Phase:
    """
    [25, 60] s early, (60, 300] s mid, > 300 s late.
    Pre-venous frames (< 25 s) and missing timestamps are unknown.
    """
    if elapsed is None:
        return "unknown"
    if math.isnan(elapsed):
        return "unknown"
    if elapsed < 0:
        raise NegativeElapsed(f"elapsed time {elapsed} s is negative")
    if elapsed < EARLY_START_S:
        return "unknown"
    if elapsed <= EARLY_END_S:
        return "early"
    if elapsed <= MID_END_S:
        return "mid"
    return "late"


def assign_phases(records: Iterable[PairRecord]) -> list[PairRecord]:
    return [r.model_copy(update={"phase": phase_bin(r.injection_elapsed_s)}) for r in records]


def phase_counts(records: Iterable[PairRecord], accepted_only: bool = True) -> dict[str, int]:
    counts = {p: 0 for p in PHASES}
    for r in records:
        if accepted_only and r.status != "accepted":
            continue
        counts[r.phase] += 1
    return counts


# ── Pairing ────────────────────────────────────────────────────

class FrameRecord(BaseModel):
    patient_id: str = Field(min_length=1)
    eye: Eye | None = None
    visit_id: str = ""
    modality: Literal["ri", "fa"]
    path: str
    injection_elapsed_s: float | None = None


def pair_frames(frames: Iterable[FrameRecord]) -> list[PairRecord]:
    """Every FA frame with every RI frame of the same patient, eye and visit."""
    ri_by_key: dict[tuple, list[FrameRecord]] = defaultdict(list)
    fa_frames: list[FrameRecord] = []
    for f in frames:
        if f.modality == "ri":
            ri_by_key[(f.patient_id, f.eye, f.visit_id)].append(f)
        else:
            fa_frames.append(f)

    pairs: list[PairRecord] = []
    unpaired = 0
    for fa in fa_frames:
        partners = ri_by_key.get((fa.patient_id, fa.eye, fa.visit_id), [])
        if not partners:
            unpaired += 1
            logger.warning("No RI frame for FA %s (patient %s)", fa.path, fa.patient_id)
            continue
        for ri in sorted(partners, key=lambda f: f.path):
            pairs.append(PairRecord(
                patient_id=fa.patient_id,
                eye=fa.eye,
                visit_id=fa.visit_id,
                ri_path=ri.path,
                fa_path=fa.path,
                injection_elapsed_s=fa.injection_elapsed_s,
                phase=phase_bin(fa.injection_elapsed_s),
            ))

    logger.info("Paired %d FA frames into %d pairs (%d unpaired)", len(fa_frames), len(pairs), unpaired)
    return sort_records(pairs)


# ── Patient split ──────────────────────────────────────────────

def patient_key(patient_id: str, seed: int) -> str:
    """Keyed hash; depends only on (seed, patient_id)."""
    return hashlib.blake2b(
        patient_id.encode("utf-8"), key=str(seed).encode("utf-8"), digest_size=16,
    ).hexdigest()


def split_counts(n: int, ratio: tuple[int, ...]) -> list[int]:
    """Largest-remainder apportionment of n patients."""
    total = sum(ratio)
    exact = [n * r / total for r in ratio]
    counts = [math.floor(e) for e in exact]
    leftover = n - sum(counts)
    by_fraction = sorted(range(len(ratio)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in by_fraction[:leftover]:
        counts[i] += 1
    return counts


def patient_split(
    records: list[PairRecord], ratio: tuple[int, int, int] = (8, 1, 1), seed: int = 0,
) -> list[PairRecord]:
    """
    Patients are ordered by their keyed hash and cut into consecutive runs of
    the apportioned sizes, so every record of a patient shares one split and
    the result does not depend on input order.
    """
    if not records:
        raise EmptyRecordList("cannot split an empty record list")
    if len(ratio) != len(SPLITS) or any(r <= 0 for r in ratio):
        raise ValueError(f"ratio must be three positive integers, got {ratio}")

    patients = sorted({r.patient_id for r in records}, key=lambda p: (patient_key(p, seed), p))
    counts = split_counts(len(patients), ratio)

    assignment: dict[str, str] = {}
    start = 0
    for split, count in zip(SPLITS, counts):
        for p in patients[start:start + count]:
            assignment[p] = split
        start += count

    logger.info(
        "Split %d patients: %s",
        len(patients), ", ".join(f"{s}={c}" for s, c in zip(SPLITS, counts)),
    )
    return sort_records(r.model_copy(update={"split": assignment[r.patient_id]}) for r in records)
