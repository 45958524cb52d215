"""
Manifest integrity validation.

Validates:
  - No patient appears in two splits
  - Status and rejection reason agree (one reason per rejected record)
  - Phase labels agree with the injection-elapsed time when it is present
  - No duplicate (patient, visit, RI, FA) keys
Returns pass/fail with details and a SHA-256 of the serialised manifest.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from uwfkit.dataset import phase_bin
from uwfkit.errors import NegativeElapsed
from uwfkit.manifest import PairRecord, dump_manifest


@dataclass
class IntegrityIssue:
    record: str
    issue_type: str  # split | status | phase | duplicate | metrics
    detail: str
    severity: str  # warning | critical


@dataclass
class IntegrityResult:
    status: str = "pass"  # pass | fail
    content_hash: str = ""
    issues: list[IntegrityIssue] = field(default_factory=list)
    records_scanned: int = 0

    @property
    def has_critical(self) -> bool:
        return any(i.severity == "critical" for i in self.issues)


def _label(r: PairRecord) -> str:
    return f"{r.patient_id}/{r.visit_id}/{Path(r.fa_path).name}"


def manifest_hash(path: str | Path) -> str:
    """SHA-256 of the manifest file bytes."""
    hasher = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


def validate_manifest(records: Iterable[PairRecord]) -> IntegrityResult:
    records = list(records)
    result = IntegrityResult(records_scanned=len(records))
    result.content_hash = hashlib.sha256(dump_manifest(records).encode("utf-8")).hexdigest()

    splits: dict[str, set[str]] = defaultdict(set)
    seen: set[tuple[str, str, str, str]] = set()

    for r in records:
        label = _label(r)
        if r.split:
            splits[r.patient_id].add(r.split)

        key = (r.patient_id, r.visit_id, r.ri_path, r.fa_path)
        if key in seen:
            result.issues.append(IntegrityIssue(label, "duplicate", f"duplicate pair {r.ri_path} / {r.fa_path}", "critical"))
        seen.add(key)

        if r.status == "rejected" and not r.rejection_reason:
            result.issues.append(IntegrityIssue(label, "status", "rejected without a reason", "critical"))
        if r.status != "rejected" and r.rejection_reason:
            result.issues.append(IntegrityIssue(
                label, "status", f"{r.status} record carries reason '{r.rejection_reason}'", "critical",
            ))
        if r.status == "accepted" and r.registration is not None and r.registration.validity == "fail":
            result.issues.append(IntegrityIssue(label, "status", "accepted despite failed validity", "critical"))

        if r.injection_elapsed_s is not None:
            try:
                expected = phase_bin(r.injection_elapsed_s)
            except NegativeElapsed:
                result.issues.append(IntegrityIssue(
                    label, "phase", f"negative elapsed time {r.injection_elapsed_s}", "critical",
                ))
            else:
                if expected != r.phase:
                    result.issues.append(IntegrityIssue(
                        label, "phase",
                        f"phase '{r.phase}' but {r.injection_elapsed_s:g} s bins to '{expected}'",
                        "critical",
                    ))

        if r.status == "rejected" and r.metrics is not None:
            result.issues.append(IntegrityIssue(label, "metrics", "rejected pair carries metrics", "warning"))

    for patient, assigned in sorted(splits.items()):
        if len(assigned) > 1:
            result.issues.append(IntegrityIssue(
                patient, "split", f"patient spans splits {sorted(assigned)}", "critical",
            ))

    if result.has_critical:
        result.status = "fail"
    return result
