"""Human-readable run summaries.

Builds a JSON summary and a markdown digest from the run manifest plus any
training-simulation traces found under the run directory. An empty or
freshly created run produces zeroed tables rather than an error.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .manifest import SYNTHESIS_STAGES, PipelineManifest

REPORT_JSON = "report.json"
REPORT_MD = "report.md"
TRAIN_SIM_DIR = "train-sims"


def _stage_rows(manifest: PipelineManifest) -> list[dict]:
    rows = []
    for name in SYNTHESIS_STAGES:
        stage = manifest.stage(name)
        rows.append(
            {
                "stage": name,
                "status": stage.get("status", "pending"),
                "summary": stage.get("summary", {}),
                "provider_calls": len(stage.get("provider_calls", [])),
            }
        )
    return rows


def _keep_rates(manifest: PipelineManifest) -> dict:
    clip = manifest.stage_summary("clip_gate")
    unc = manifest.stage_summary("uncertainty_gate")
    rates = {}
    if clip.get("scored"):
        rates["clip_gate"] = {
            "in": clip.get("scored", 0),
            "kept": clip.get("kept", 0),
            "rate": round(clip.get("kept", 0) / clip["scored"], 4),
        }
    else:
        rates["clip_gate"] = {"in": 0, "kept": 0, "rate": 0.0}
    if unc.get("objects_in"):
        rates["uncertainty_gate"] = {
            "in": unc.get("objects_in", 0),
            "kept": unc.get("objects_kept", 0),
            "rate": round(unc.get("objects_kept", 0) / unc["objects_in"], 4),
        }
    else:
        rates["uncertainty_gate"] = {"in": 0, "kept": 0, "rate": 0.0}
    return rates


def _per_class_counts(run_dir: Path) -> dict:
    path = run_dir / "uncertainty_report.json"
    if not path.exists():
        return {}
    payload = json.loads(path.read_text(encoding="utf-8"))
    return payload.get("report", {}).get("per_class_kept", {})


def _train_sims(run_dir: Path) -> list[dict]:
    sims = []
    sim_root = run_dir / TRAIN_SIM_DIR
    if not sim_root.exists():
        return sims
    for sim_dir in sorted(sim_root.iterdir()):
        metrics_path = sim_dir / "metrics.json"
        trace_path = sim_dir / "trace.csv"
        if not metrics_path.exists():
            continue
        entry = json.loads(metrics_path.read_text(encoding="utf-8"))
        entry["trace_csv"] = str(trace_path.relative_to(run_dir).as_posix())
        if trace_path.exists():
            with open(trace_path, newline="", encoding="utf-8") as fh:
                entry["trace_rows"] = sum(1 for _ in csv.reader(fh)) - 1
        sims.append(entry)
    return sims


def emit_report(run_dir: Path) -> tuple[Path, Path]:
    """Write report.json and report.md next to the manifest."""
    run_dir = Path(run_dir)
    manifest = PipelineManifest.load(run_dir)
    vocab_summary = manifest.stage_summary("vocabulary")
    payload = {
        "config_hash": manifest.config_hash,
        "stages": _stage_rows(manifest),
        "vocabulary_growth": {
            "train": vocab_summary.get("train_categories", 0),
            "novel": vocab_summary.get("novel_categories", 0),
            "candidates": vocab_summary.get("candidates", 0),
        },
        "keep_rates": _keep_rates(manifest),
        "per_class_kept": _per_class_counts(run_dir),
        "train_sims": _train_sims(run_dir),
    }
    json_path = run_dir / REPORT_JSON
    json_path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )

    lines = [
        "# Pipeline report",
        "",
        f"Config hash: `{manifest.config_hash[:12]}`",
        "",
        "## Stages",
        "",
        "| stage | status | provider calls |",
        "| --- | --- | --- |",
    ]
    for row in payload["stages"]:
        lines.append(f"| {row['stage']} | {row['status']} | {row['provider_calls']} |")
    growth = payload["vocabulary_growth"]
    lines += [
        "",
        "## Vocabulary growth",
        "",
        f"- training categories: {growth['train']}",
        f"- novel categories kept: {growth['novel']}",
        f"- raw candidates: {growth['candidates']}",
        "",
        "## Keep rates",
        "",
        "| gate | in | kept | rate |",
        "| --- | --- | --- | --- |",
    ]
    for gate, row in payload["keep_rates"].items():
        lines.append(f"| {gate} | {row['in']} | {row['kept']} | {row['rate']} |")
    lines += ["", "## Objects kept per class", ""]
    per_class = payload["per_class_kept"]
    if per_class:
        lines += ["| category id | kept |", "| --- | --- |"]
        for cid in sorted(per_class, key=int):
            lines.append(f"| {cid} | {per_class[cid]} |")
    else:
        lines.append("(none)")
    lines += ["", "## Training simulations", ""]
    if payload["train_sims"]:
        lines += [
            "| lambda | steps | initial distance | final distance | trace |",
            "| --- | --- | --- | --- | --- |",
        ]
        for sim in payload["train_sims"]:
            lines.append(
                f"| {sim.get('lambda_sra')} | {sim.get('steps')} "
                f"| {sim.get('initial_distance')} | {sim.get('final_distance')} "
                f"| {sim.get('trace_csv')} |"
            )
    else:
        lines.append("(none)")
    md_path = run_dir / REPORT_MD
    md_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return json_path, md_path
