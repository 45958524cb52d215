"""
Report rendering.

Generates:
  - Aligned text table: one row per phase, "mean (±SD)" per metric
  - Markdown report with the same table, QC summary and dataset composition
"""

from __future__ import annotations

from datetime import datetime, timezone

from uwfkit.evaluation import METRIC_NAMES, AggregateReport, MetricStats

COLUMN_TITLES = {"mae": "MAE", "psnr": "PSNR", "ssim": "SSIM", "ms_ssim": "MS-SSIM", "gv": "GV"}
DECIMALS = {"mae": 2, "psnr": 2, "ssim": 2, "ms_ssim": 2, "gv": 4}


def format_cell(stats: MetricStats, decimals: int) -> str:
    if stats.mean is None:
        return "n/a"
    cell = f"{stats.mean:.{decimals}f} (±{stats.sd:.{decimals}f})"
    return cell + "*" if stats.sd_undefined else cell


def _rows(summary: AggregateReport) -> list[list[str]]:
    rows = []
    for ps in summary.phases:
        rows.append(
            [f"{ps.phase} (n={ps.n})"]
            + [format_cell(ps.metrics[m], DECIMALS[m]) for m in METRIC_NAMES]
        )
    return rows


def _footnotes(summary: AggregateReport) -> list[str]:
    notes = []
    if any(ps.metrics[m].sd_undefined for ps in summary.phases for m in METRIC_NAMES):
        notes.append("* single observation, SD reported as 0")
    skipped = [ps for ps in summary.phases if ps.psnr_inf_skipped]
    for ps in skipped:
        notes.append(f"{ps.phase}: {ps.psnr_inf_skipped} identical pair(s) excluded from PSNR (+inf)")
    if summary.missing_phases:
        notes.append("phases without reports: " + ", ".join(summary.missing_phases))
    return notes


def render_table(summary: AggregateReport) -> str:
    """Fixed-width table mirroring the per-phase fidelity table."""
    header = ["Phase"] + [COLUMN_TITLES[m] for m in METRIC_NAMES]
    rows = _rows(summary)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]

    def line(cells: list[str]) -> str:
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    out = [line(header), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    notes = _footnotes(summary)
    if notes:
        out.append("")
        out += notes
    return "\n".join(out) + "\n"


def generate_opinion(summary: AggregateReport) -> str:
    """Short reading of the table for the Markdown report."""
    ranked = [ps for ps in summary.phases if ps.metrics["ssim"].mean is not None]
    if not ranked:
        return "Sin metricas suficientes para una lectura por fase."
    best = max(ranked, key=lambda ps: ps.metrics["ssim"].mean)
    worst = min(ranked, key=lambda ps: ps.metrics["ssim"].mean)
    parts = [
        f"La fase con mayor similitud estructural es **{best.phase}** "
        f"(SSIM {best.metrics['ssim'].mean:.3f})."
    ]
    if worst.phase != best.phase:
        parts.append(
            f"La fase mas dificil es **{worst.phase}** (SSIM {worst.metrics['ssim'].mean:.3f}); "
            "revisar los pares de esa fase antes de comparar modelos."
        )
    if any(ps.n < 5 for ps in summary.phases):
        parts.append("Algunas fases tienen menos de 5 pares; las desviaciones son poco fiables.")
    return "\n\n".join(parts)


def render_markdown_report(
    summary: AggregateReport,
    phase_counts: dict[str, int] | None = None,
    qc: dict[str, int] | None = None,
) -> str:
    now = datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M UTC")
    header = ["Phase"] + [COLUMN_TITLES[m] for m in METRIC_NAMES]

    report = f"""# UWF Fidelity Report

> Generated: {now}

---

## Fidelity by Phase

| {' | '.join(header)} |
|{'|'.join('---' for _ in header)}|
"""
    for row in _rows(summary):
        report += f"| {' | '.join(row)} |\n"

    notes = _footnotes(summary)
    if notes:
        report += "\n" + "".join(f"- {n}\n" for n in notes)

    if qc:
        report += "\n---\n\n## Registration QC\n\n| Outcome | Pairs |\n|---------|-------|\n"
        for outcome, count in qc.items():
            report += f"| {outcome} | {count} |\n"

    if phase_counts:
        report += "\n---\n\n## Dataset Composition\n\n| Phase | Accepted pairs |\n|-------|----------------|\n"
        for phase, count in phase_counts.items():
            report += f"| {phase} | {count} |\n"

    report += f"""
---

## Opinion

{generate_opinion(summary)}

---

*Report generated by uwfkit over {summary.total} evaluated pair(s)*
"""
    return report
