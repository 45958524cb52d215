"""
Command-line entry point.

Exit codes: 0 success, 1 failure (unreadable input, integrity violation,
out-of-range aggregate), 2 usage error.

Phase convention used by phase-bin: [25, 60] s early, (60, 300] s mid,
> 300 s late, < 25 s or missing unknown.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from pydantic import ValidationError

from uwfkit.augment import augment_random
from uwfkit.config import PipelineConfig, load_config, parse_ratio
from uwfkit.dataset import FrameRecord, assign_phases, pair_frames, patient_split, phase_counts
from uwfkit.errors import ManifestError, UwfkitError
from uwfkit.evaluation import aggregate_report, evaluate_manifest, evaluate_pair, manifest_reports
from uwfkit.integrity import manifest_hash, validate_manifest
from uwfkit.manifest import PairRecord, read_manifest, write_manifest
from uwfkit.raster import decode_image, encode_image, to_grayscale
from uwfkit.registration import qc_gate, register_pair, run_batch
from uwfkit.reporter import render_markdown_report, render_table
from uwfkit.synth import SynthParams, synth_pair
from uwfkit.vesselness import frangi_vesselness

logger = logging.getLogger("uwfkit")

EXIT_OK = 0
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


def _scales(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad scale list {text!r}") from e


def _config(args: argparse.Namespace, **overrides) -> PipelineConfig:
    try:
        return load_config(getattr(args, "config", None), overrides)
    except (ValidationError, ValueError) as e:
        raise UsageError(f"invalid configuration: {e}") from e
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from e


def _write_json(path: str | Path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_checked(records: list[PairRecord], out: str) -> int:
    integrity = validate_manifest(records)
    for issue in integrity.issues:
        log = logger.error if issue.severity == "critical" else logger.warning
        log("%s [%s] %s", issue.record, issue.issue_type, issue.detail)
    if integrity.status == "fail":
        logger.error("Manifest failed integrity checks; %s not written", out)
        return EXIT_FAILURE
    write_manifest(records, out)
    logger.info("Manifest sha256 %s", manifest_hash(out))
    return EXIT_OK


# ── Commands ───────────────────────────────────────────────────

def cmd_vesselmap(args) -> int:
    cfg = _config(args, vesselness={"scales": args.scales})
    v = cfg.vesselness
    polarity = args.polarity or (v.ri_polarity if args.modality == "ri" else v.fa_polarity)
    response = frangi_vesselness(to_grayscale(decode_image(args.input)), v.params(polarity))
    encode_image(response, args.output)
    return EXIT_OK


def cmd_register(args) -> int:
    cfg = _config(args, seed=args.seed)
    record = register_pair(
        args.ri, args.fa, cfg,
        registered_dir=args.registered_dir, keypoints_path=args.dump_keypoints,
    )
    _write_json(args.out, record.model_dump(mode="json"))
    print(f"{record.status}" + (f": {record.rejection_reason}" if record.rejection_reason else ""))
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = _config(args, seed=args.seed, workers=args.workers)
    records = read_manifest(args.manifest_in)
    results = run_batch(records, cfg, registered_dir=args.registered_dir)
    return _write_checked(results, args.out)


def cmd_gate(args) -> int:
    cfg = _config(args, gate={"dice_min": args.dice_min})
    accepted, rejected = qc_gate(read_manifest(args.manifest), cfg.gate.dice_min)
    print(f"accepted={len(accepted)} rejected={len(rejected)}")
    return _write_checked(accepted + rejected, args.out)


def cmd_phase_bin(args) -> int:
    records = assign_phases(read_manifest(args.manifest))
    for phase, count in phase_counts(records, accepted_only=False).items():
        print(f"{phase}: {count}")
    write_manifest(records, args.out)
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _config(args, split_ratio=args.ratio, seed=args.seed)
    records = patient_split(read_manifest(args.manifest), cfg.split_ratio, cfg.seed)
    return _write_checked(records, args.out)


def cmd_pair(args) -> int:
    lines = Path(args.frames).read_text(encoding="utf-8").splitlines()
    try:
        frames = [FrameRecord.model_validate_json(line) for line in lines if line.strip()]
    except ValidationError as e:
        raise ManifestError(f"{args.frames}: {e.errors()[0]['msg']}") from e
    return _write_checked(pair_frames(frames), args.out)


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    if args.manifest:
        write_manifest(evaluate_manifest(read_manifest(args.manifest), cfg), args.out)
        return EXIT_OK
    if not (args.pred and args.target):
        raise UsageError("evaluate needs --pred and --target, or --manifest")
    report = evaluate_pair(args.pred, args.target, cfg)
    _write_json(args.out, report.model_dump(mode="json"))
    return EXIT_OK


def cmd_report(args) -> int:
    records = read_manifest(args.manifest)
    summary = aggregate_report(manifest_reports(records))
    counts = phase_counts(records)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".json":
        _write_json(out, {"summary": summary.model_dump(mode="json"), "phase_counts": counts})
    elif out.suffix == ".md":
        qc = {
            "accepted": sum(r.status == "accepted" for r in records),
            "rejected": sum(r.status == "rejected" for r in records),
        }
        out.write_text(render_markdown_report(summary, counts, qc), encoding="utf-8")
    else:
        out.write_text(render_table(summary), encoding="utf-8")
    print(render_table(summary), end="")
    return EXIT_OK


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        params = SynthParams(size=args.size)
    except ValueError as e:
        raise UsageError(str(e)) from e
    truth = {}
    records = []
    for k in range(args.count):
        seed = args.seed + k
        pair = synth_pair(seed, params)
        ri_path = out_dir / f"ri_{k:04d}.png"
        fa_path = out_dir / f"fa_{k:04d}.png"
        encode_image(pair.fixed, ri_path)
        encode_image(pair.moving, fa_path)
        truth[fa_path.name] = {
            "seed": seed,
            "true_h": pair.true_h.to_list(),
            "scale": pair.scale,
            "rotation": pair.rotation,
        }
        records.append(PairRecord(
            patient_id=f"synth-{seed}", eye="right", visit_id="v0",
            ri_path=str(ri_path), fa_path=str(fa_path),
        ))
    _write_json(out_dir / "truth.json", truth)
    write_manifest(records, out_dir / "pairs.jsonl")
    (out_dir / "harness.toml").write_text(
        f'working_resolution = {args.size}\n\n[vesselness]\nri_polarity = "bright"\nfa_polarity = "dark"\n',
        encoding="utf-8",
    )
    logger.info("Wrote %d synthetic pairs to %s", args.count, out_dir)
    return EXIT_OK


def cmd_augment(args) -> int:
    encode_image(augment_random(decode_image(args.input), args.seed), args.output)
    return EXIT_OK


# ── Parser ─────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwfkit", description="UWF RI/FA registration and evaluation toolkit")
    parser.add_argument(
        "--log-level", default=os.getenv("UWFKIT_LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", help="TOML config (default: $UWFKIT_CONFIG)")
        return p

    p = with_config(sub.add_parser("vesselmap", help="write the vesselness response of an image"))
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--modality", choices=["ri", "fa"], default="fa", help="picks the configured polarity")
    p.add_argument("--polarity", choices=["bright", "dark"], help="overrides --modality")
    p.add_argument("--scales", type=_scales, help="comma-separated sigmas (default: config)")
    p.set_defaults(func=cmd_vesselmap)

    p = with_config(sub.add_parser("register", help="register one RI/FA pair"))
    p.add_argument("--ri", required=True)
    p.add_argument("--fa", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--registered-dir", help="write the accepted FA frame resampled onto the RI frame here")
    p.add_argument("--dump-keypoints", help="JSON file for the described keypoints of both images")
    p.set_defaults(func=cmd_register)

    p = with_config(sub.add_parser("batch", help="register every pair of a manifest"))
    p.add_argument("--manifest-in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--registered-dir", help="write accepted FA frames resampled onto their RI frames here")
    p.set_defaults(func=cmd_batch)

    p = with_config(sub.add_parser("gate", help="re-apply the validity and dice gates"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--dice-min", type=float, help="default: gate.dice_min from the config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser(
        "phase-bin", help="label FA phases",
        description="[25,60] s early, (60,300] s mid, >300 s late, <25 s or missing unknown",
    )
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phase_bin)

    p = with_config(sub.add_parser("split", help="patient-level train/val/test split"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratio", type=parse_ratio)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pair", help="pair FA frames with same-visit RI frames")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pair)

    p = with_config(sub.add_parser("evaluate", help="fidelity metrics of generated frames"))
    p.add_argument("--pred")
    p.add_argument("--target")
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="per-phase summary table (.json, .md or text)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write synthetic fixed/moving pairs with known homographies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--size", type=int, default=1024)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="apply one random training augmentation")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))  # exits 2
    except (UwfkitError, OSError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_FAILURE
    return EXIT_OK
