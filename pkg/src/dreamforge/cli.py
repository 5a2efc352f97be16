"""Command-line entry points.

Subcommands: `synth` (run or resume the synthesis pipeline), `train-sim`
(alignment training simulation over an exported dataset), `report`
(summarize a run), `validate` (check a dataset file), `serve` (start the
HTTP provider service). Exit codes: 0 ok, 2 config error, 3 provider
failure, 4 degenerate data.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .coco import import_coco_panoptic
from .errors import (
    ConfigError,
    DatasetImportError,
    DegenerateDataError,
    DreamforgeError,
    ProviderError,
    StageFailure,
)
from .hashing import stable_hex
from .pipeline.config import load_config
from .pipeline.reporting import TRAIN_SIM_DIR, emit_report
from .pipeline.synthesis import run_dir_for, run_synthesis
from .pipeline.training import (
    TRACE_COLUMNS,
    make_toy_real_dataset,
    simulate_training,
)
from .alignment import banks_to_payload

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_DEGENERATE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dreamforge",
        description="Synthetic dataset curation pipeline and training simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="run the synthesis pipeline")
    synth.add_argument("--config", required=True, type=Path)
    synth.add_argument("--resume", action="store_true", help="skip completed stages")
    synth.add_argument("--seed", type=int, default=None, help="override the config seed")

    train = sub.add_parser("train-sim", help="run the alignment training simulation")
    train.add_argument("--config", required=True, type=Path)
    train.add_argument("--steps", type=int, default=None)
    train.add_argument("--lambda-sra", type=float, default=None, dest="lambda_sra")
    train.add_argument(
        "--real-dataset",
        type=Path,
        default=None,
        help="optional exported dataset to use as the real set (default: toy set)",
    )

    report = sub.add_parser("report", help="summarize a completed run")
    report.add_argument("--manifest", required=True, type=Path)

    validate = sub.add_parser("validate", help="check an exported dataset file")
    validate.add_argument("--dataset", required=True, type=Path)

    serve = sub.add_parser("serve", help="start the HTTP provider service")
    serve.add_argument("--base-dir", required=True, type=Path)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8321)
    return parser


def _cmd_synth(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    result = run_synthesis(config, resume=args.resume)
    print(f"run directory: {result.run_dir}")
    for name in result.completed:
        summary = result.manifest.stage_summary(name)
        brief = ", ".join(f"{k}={v}" for k, v in sorted(summary.items()))
        print(f"  {name}: {brief}")
    if result.dataset_path:
        print(f"dataset: {result.dataset_path}")
    return EXIT_OK


def _cmd_train_sim(args) -> int:
    config = load_config(args.config)
    run_dir = run_dir_for(config)
    dataset_path = run_dir / "dataset.json"
    if not dataset_path.exists():
        raise ConfigError(
            f"no dataset at {dataset_path}; run `dreamforge synth` first"
        )
    d_s, vocab = import_coco_panoptic(dataset_path)
    if args.real_dataset is not None:
        d_r, _ = import_coco_panoptic(args.real_dataset)
    else:
        d_r = make_toy_real_dataset(vocab, config)
    result = simulate_training(
        d_r, d_s, vocab, config, steps=args.steps, lambda_sra=args.lambda_sra
    )
    sim_id = stable_hex(
        "train-sim", config.config_hash(), repr(result.lambda_sra), result.steps, length=8
    )
    sim_dir = run_dir / TRAIN_SIM_DIR / f"sim-{sim_id}"
    sim_dir.mkdir(parents=True, exist_ok=True)
    trace_path = sim_dir / "trace.csv"
    with open(trace_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in result.trace:
            writer.writerow(row.to_row())
    metrics = {
        "lambda_sra": result.lambda_sra,
        "steps": result.steps,
        "initial_distance": result.initial_distance,
        "final_distance": result.final_distance,
        "final_distance_per_class": {
            str(k): v for k, v in sorted(result.final_distance_per_class.items())
        },
        "final_sra_loss": result.trace[-1].sra_loss,
        "diverged": result.diverged,
    }
    (sim_dir / "metrics.json").write_text(
        json.dumps(metrics, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (sim_dir / "banks.json").write_text(
        json.dumps(banks_to_payload(result.banks), sort_keys=True) + "\n",
        encoding="utf-8",
    )
    print(f"simulation directory: {sim_dir}")
    print(
        f"lambda={result.lambda_sra} steps={result.steps} "
        f"distance {result.initial_distance:.6f} -> {result.final_distance:.6f}"
    )
    if result.diverged:
        raise DegenerateDataError("training diverged (non-finite loss); see trace")
    return EXIT_OK


def _cmd_report(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise ConfigError(f"manifest not found: {manifest_path}")
    run_dir = manifest_path.parent
    json_path, md_path = emit_report(run_dir)
    print(f"wrote {json_path}")
    print(f"wrote {md_path}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    path = Path(args.dataset)
    if not path.exists():
        raise ConfigError(f"dataset not found: {path}")
    try:
        records, vocab = import_coco_panoptic(path)
    except (DatasetImportError, DreamforgeError, ValueError) as exc:
        raise DegenerateDataError(f"invalid dataset: {exc}") from exc
    object_count = 0
    for record in records:
        for obj in record.objects:
            if not vocab.has_id(obj.category_id):
                raise DegenerateDataError(
                    f"object {obj.object_id} references unknown category "
                    f"{obj.category_id}"
                )
            object_count += 1
    print(
        f"dataset ok: {len(records)} images, {object_count} objects, "
        f"{len(vocab.categories)} categories"
    )
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.base_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train-sim": _cmd_train_sim,
    "report": _cmd_report,
    "validate": _cmd_validate,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProviderError, StageFailure) as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
