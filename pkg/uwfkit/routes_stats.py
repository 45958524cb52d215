"""
Statistics API routes.

QC outcome counts and the per-phase fidelity summary, both computed from
stored runs.
"""

from __future__ import annotations

import math
from datetime import datetime, timezone

from fastapi import APIRouter, Depends, HTTPException
from sqlalchemy import func
from sqlalchemy.orm import Session

from uwfkit.database import EvaluationRun, RegistrationRun, get_db
from uwfkit.errors import EmptyInput
from uwfkit.evaluation import aggregate_report
from uwfkit.manifest import PHASES
from uwfkit.metrics import MetricReport

router = APIRouter(tags=["statistics"])


def _parse_date(date_str: str | None) -> datetime | None:
    if not date_str:
        return None
    try:
        dt = datetime.fromisoformat(date_str)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt
    except ValueError:
        return None


def _apply_date_filter(query, model, from_date: str | None, to_date: str | None):
    fd = _parse_date(from_date)
    td = _parse_date(to_date)
    if fd:
        query = query.filter(model.timestamp >= fd)
    if td:
        query = query.filter(model.timestamp <= td)
    return query


def evaluation_reports(db: Session, from_date: str | None = None, to_date: str | None = None):
    query = _apply_date_filter(db.query(EvaluationRun), EvaluationRun, from_date, to_date)
    return [
        (r.phase, MetricReport(
            mae=r.mae, psnr=math.inf if r.psnr is None else r.psnr,
            ssim=r.ssim, ms_ssim=r.ms_ssim, gv=r.gv,
        ))
        for r in query.order_by(EvaluationRun.id).all()
    ]


def accepted_phase_counts(db: Session) -> dict[str, int]:
    rows = (
        db.query(RegistrationRun.phase, func.count(RegistrationRun.id))
        .filter(RegistrationRun.status == "accepted")
        .group_by(RegistrationRun.phase)
        .all()
    )
    counts = {p: 0 for p in PHASES}
    counts.update({phase: n for phase, n in rows})
    return counts


# ── QC outcomes ───────────────────────────────────────────────

@router.get("/api/stats/qc")
def get_qc_stats(
    from_date: str | None = None,
    to_date: str | None = None,
    db: Session = Depends(get_db),
):
    query = _apply_date_filter(db.query(RegistrationRun), RegistrationRun, from_date, to_date)
    runs = query.all()
    reasons: dict[str, int] = {}
    for r in runs:
        if r.status == "rejected":
            key = (r.rejection_reason or "unknown").split(" ")[0]
            reasons[key] = reasons.get(key, 0) + 1
    accepted = sum(r.status == "accepted" for r in runs)
    dice = [r.dice for r in runs if r.dice is not None]
    return {
        "total": len(runs),
        "accepted": accepted,
        "rejected": len(runs) - accepted,
        "rejection_reasons": dict(sorted(reasons.items())),
        "avg_dice": round(sum(dice) / len(dice), 4) if dice else None,
    }


# ── Per-phase fidelity ────────────────────────────────────────

@router.get("/api/stats/phases")
def get_phase_stats(
    from_date: str | None = None,
    to_date: str | None = None,
    db: Session = Depends(get_db),
):
    reports = evaluation_reports(db, from_date, to_date)
    try:
        summary = aggregate_report(reports)
    except EmptyInput:
        raise HTTPException(status_code=404, detail="No evaluations stored")
    return {
        "summary": summary.model_dump(mode="json"),
        "phase_counts": accepted_phase_counts(db),
    }
