"""
UWF registration & evaluation API.

Endpoints:
  POST /api/register      - Upload an RI/FA pair, register, gate, store the run
  POST /api/evaluate      - Upload generated + real FA frames, store the metrics
  GET  /api/results       - List stored runs (JSON)
  GET  /api/results/:id   - Single run detail
  GET  /api/report        - Download the per-phase .md report
  GET  /health            - Health check
  + /api/stats/*          - Statistics endpoints (see routes_stats.py)
"""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
import tempfile
from functools import lru_cache
from pathlib import Path

from fastapi import Depends, FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import PlainTextResponse
from sqlalchemy.orm import Session

from uwfkit import __version__
from uwfkit.config import PipelineConfig, load_config
from uwfkit.database import EvaluationRun, RegistrationRun, get_db
from uwfkit.errors import EmptyInput, UwfkitError
from uwfkit.evaluation import aggregate_report, evaluate_images
from uwfkit.manifest import PHASES, PairRecord
from uwfkit.raster import decode_image
from uwfkit.registration import register_images
from uwfkit.reporter import render_markdown_report
from uwfkit.routes_stats import accepted_phase_counts, evaluation_reports
from uwfkit.routes_stats import router as stats_router

logger = logging.getLogger(__name__)

app = FastAPI(title="uwfkit", version=__version__)
app.include_router(stats_router)


@lru_cache(maxsize=1)
def get_config() -> PipelineConfig:
    return load_config(os.getenv("UWFKIT_CONFIG"))


# ── Health ──────────────────────────────────────────────────────

@app.get("/health")
def health():
    return {"status": "ok", "service": "uwfkit", "version": __version__}


# ── Helpers ─────────────────────────────────────────────────────

def _check_phase(phase: str) -> str:
    if phase not in PHASES:
        raise HTTPException(status_code=400, detail=f"phase must be one of {', '.join(PHASES)}")
    return phase


def _decode_upload(upload: UploadFile, work_dir: str, stem: str):
    suffix = Path(upload.filename or "").suffix.lower() or ".png"
    path = os.path.join(work_dir, f"{stem}{suffix}")
    with open(path, "wb") as f:
        shutil.copyfileobj(upload.file, f)
    try:
        return decode_image(path)
    except UwfkitError as e:
        raise HTTPException(status_code=400, detail=f"{upload.filename}: {e.reason}")


def _finite(v: float | None) -> float | None:
    return v if v is not None and math.isfinite(v) else None


def _registration_dict(r: RegistrationRun) -> dict:
    return {
        "id": r.id,
        "patient_id": r.patient_id,
        "ri": r.ri_name,
        "fa": r.fa_name,
        "phase": r.phase,
        "status": r.status,
        "rejection_reason": r.rejection_reason,
        "scale": r.scale,
        "rotation": r.rotation,
        "validity": r.validity,
        "dice": r.dice,
        "inliers": r.inlier_count,
        "matches": r.total_matches,
        "timestamp": r.timestamp.isoformat() if r.timestamp else None,
    }


def _evaluation_dict(r: EvaluationRun) -> dict:
    return {
        "id": r.id,
        "pred": r.pred_name,
        "target": r.target_name,
        "phase": r.phase,
        "mae": r.mae,
        "psnr": "inf" if r.psnr is None else r.psnr,
        "ssim": r.ssim,
        "ms_ssim": r.ms_ssim,
        "gv": r.gv,
        "timestamp": r.timestamp.isoformat() if r.timestamp else None,
    }


# ── Registration ───────────────────────────────────────────────

@app.post("/api/register")
def register_upload(
    ri: UploadFile = File(...),
    fa: UploadFile = File(...),
    phase: str = Form("unknown"),
    patient_id: str = Form("upload"),
    db: Session = Depends(get_db),
    cfg: PipelineConfig = Depends(get_config),
):
    _check_phase(phase)
    work_dir = tempfile.mkdtemp(prefix="uwfkit-")
    try:
        ri_img = _decode_upload(ri, work_dir, "ri")
        fa_img = _decode_upload(fa, work_dir, "fa")
        record = PairRecord(
            patient_id=patient_id or "upload", ri_path=ri.filename or "ri",
            fa_path=fa.filename or "fa", phase=phase,
        )
        try:
            record = register_images(ri_img, fa_img, cfg, record)
        except UwfkitError as e:
            logger.warning("Upload %s rejected: %s", fa.filename, e)
            record = record.reject(e.reason)
    finally:
        shutil.rmtree(work_dir, ignore_errors=True)

    reg = record.registration
    run = RegistrationRun(
        patient_id=record.patient_id,
        ri_name=record.ri_path,
        fa_name=record.fa_path,
        phase=record.phase,
        homography=json.dumps(reg.homography) if reg and reg.homography else "",
        inlier_count=reg.inlier_count if reg else 0,
        total_matches=reg.total_matches if reg else 0,
        scale=_finite(reg.scale) if reg else None,
        rotation=_finite(reg.rotation) if reg else None,
        validity=reg.validity if reg else None,
        dice=reg.dice if reg else None,
        status=record.status,
        rejection_reason=record.rejection_reason,
    )
    db.add(run)
    db.commit()

    return {
        "status": "success",
        "run_id": run.id,
        "result": record.status,
        "rejection_reason": record.rejection_reason,
        "registration": reg.model_dump(mode="json") if reg else None,
        "homography_native": record.homography_native,
    }


# ── Evaluation ─────────────────────────────────────────────────

@app.post("/api/evaluate")
def evaluate_upload(
    pred: UploadFile = File(...),
    target: UploadFile = File(...),
    phase: str = Form("unknown"),
    db: Session = Depends(get_db),
    cfg: PipelineConfig = Depends(get_config),
):
    _check_phase(phase)
    work_dir = tempfile.mkdtemp(prefix="uwfkit-")
    try:
        pred_img = _decode_upload(pred, work_dir, "pred")
        target_img = _decode_upload(target, work_dir, "target")
        try:
            report = evaluate_images(pred_img, target_img, cfg)
        except UwfkitError as e:
            raise HTTPException(status_code=400, detail=f"{e.reason}: {e}")
    finally:
        shutil.rmtree(work_dir, ignore_errors=True)

    run = EvaluationRun(
        pred_name=pred.filename or "pred",
        target_name=target.filename or "target",
        phase=phase,
        mae=report.mae,
        psnr=_finite(report.psnr),
        ssim=report.ssim,
        ms_ssim=report.ms_ssim,
        gv=report.gv,
    )
    db.add(run)
    db.commit()
    return {"status": "success", "run_id": run.id, "metrics": report.model_dump(mode="json")}


# ── Results API ────────────────────────────────────────────────

@app.get("/api/results")
def list_results(
    kind: str = "registration", phase: str | None = None, limit: int = 50,
    db: Session = Depends(get_db),
):
    if kind == "registration":
        query = db.query(RegistrationRun).order_by(RegistrationRun.id.desc())
        if phase:
            query = query.filter_by(phase=phase)
        return [_registration_dict(r) for r in query.limit(limit).all()]
    if kind == "evaluation":
        query = db.query(EvaluationRun).order_by(EvaluationRun.id.desc())
        if phase:
            query = query.filter_by(phase=phase)
        return [_evaluation_dict(r) for r in query.limit(limit).all()]
    raise HTTPException(status_code=400, detail="kind must be 'registration' or 'evaluation'")


@app.get("/api/results/{run_id}")
def get_result(run_id: int, kind: str = "registration", db: Session = Depends(get_db)):
    if kind == "evaluation":
        r = db.get(EvaluationRun, run_id)
        if not r:
            raise HTTPException(status_code=404, detail="Evaluation not found")
        return _evaluation_dict(r)
    r = db.get(RegistrationRun, run_id)
    if not r:
        raise HTTPException(status_code=404, detail="Registration not found")
    detail = _registration_dict(r)
    detail["homography"] = json.loads(r.homography) if r.homography else None
    return detail


# ── Markdown Report Download ──────────────────────────────────

@app.get("/api/report")
def get_report(db: Session = Depends(get_db)):
    try:
        summary = aggregate_report(evaluation_reports(db))
    except EmptyInput:
        raise HTTPException(status_code=404, detail="No evaluations stored")
    runs = db.query(RegistrationRun).all()
    qc = {
        "accepted": sum(r.status == "accepted" for r in runs),
        "rejected": sum(r.status == "rejected" for r in runs),
    }
    return PlainTextResponse(
        content=render_markdown_report(summary, accepted_phase_counts(db), qc),
        media_type="text/markdown",
        headers={"Content-Disposition": 'attachment; filename="uwf-fidelity-report.md"'},
    )
