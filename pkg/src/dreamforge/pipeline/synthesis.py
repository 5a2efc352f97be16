"""End-to-end synthesis: vocabulary growth through dataset export.

Stages run in a fixed order (expand vocabulary, plan layouts, generate
images, clip-score gate, mask annotation, uncertainty gate, export), each
persisting its outputs before the next starts. A resumed run verifies the
config hash and the recorded checksums, reloads completed stages from disk
and continues; every random choice is keyed by (seed, stage, item) so a
resumed run and an uninterrupted run produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .. import coco
from ..curation import (
    object_uncertainty,
    select_by_clip_score,
    select_top_n_per_class,
)
from ..datamodel import ImageRecord, ObjectInstance, Source, Vocabulary
from ..errors import (
    DreamforgeError,
    LayoutInductionError,
    ProviderError,
    StageFailure,
)
from ..hashing import rng_for, stable_uint64
from ..providers import make_http_providers, make_stub_providers
from ..providers.base import ProviderSet
from ..scene import (
    Layout,
    LayoutItem,
    annotate_objects,
    layout_from_payload,
    layout_to_payload,
    plan_layout,
    validate_layout,
)
from ..vocabulary import consensus_filter, expand_vocabulary, semantic_dedup
from .config import PipelineConfig
from .manifest import SYNTHESIS_STAGES, PipelineManifest

VOCABULARY_FILE = "vocabulary.json"
LAYOUTS_FILE = "layouts.json"
IMAGES_FILE = "images.json"
CLIP_FILE = "clip_report.json"
SAMPLES_FILE = "samples.json"
UNCERTAINTY_FILE = "uncertainty_report.json"
DATASET_FILE = "dataset.json"


@dataclass
class SynthesisResult:
    run_dir: Path
    manifest: PipelineManifest
    dataset_path: Optional[Path]
    completed: tuple[str, ...]


def run_dir_for(config: PipelineConfig) -> Path:
    return Path(config.out_dir) / f"run-{config.config_hash()[:12]}"


def make_providers(config: PipelineConfig, base_dir: Path) -> ProviderSet:
    endpoints = config.provider_endpoints()
    if endpoints:
        return make_http_providers(
            endpoints, base_dir, embed_dim=config.text_embed_len
        )
    return make_stub_providers(base_dir, embed_dim=config.text_embed_len)


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


class _SynthesisState:
    """In-memory carry between stages; refilled from disk on resume."""

    def __init__(self):
        self.vocab: Optional[Vocabulary] = None
        self.layouts: list[Layout] = []
        self.drafts: list[ImageRecord] = []
        self.kept_drafts: list[ImageRecord] = []
        self.annotated: list[ImageRecord] = []
        self.final_records: list[ImageRecord] = []


def run_synthesis(
    config: PipelineConfig,
    resume: bool = False,
    providers: Optional[ProviderSet] = None,
    stop_after: Optional[str] = None,
) -> SynthesisResult:
    """Run (or resume) the synthesis pipeline; returns the run layout.

    `stop_after` ends the run cleanly after the named stage, which is how
    the tests exercise interruption and resumption.
    """
    run_dir = run_dir_for(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    if providers is None:
        providers = make_providers(config, run_dir)
    manifest = PipelineManifest.open_or_create(
        run_dir, config.to_payload(), config.config_hash(), resume
    )
    state = _SynthesisState()
    stages = {
        "vocabulary": _stage_vocabulary,
        "layouts": _stage_layouts,
        "images": _stage_images,
        "clip_gate": _stage_clip_gate,
        "annotation": _stage_annotation,
        "uncertainty_gate": _stage_uncertainty_gate,
        "export": _stage_export,
    }
    completed = []
    for name in SYNTHESIS_STAGES:
        stage_fn = stages[name]
        done = manifest.is_done(name)
        if done and manifest.outputs_verify(name):
            stage_fn(config, run_dir, providers, state, manifest, load_only=True)
        else:
            if done:
                # outputs lost or corrupted since completion: regenerate
                manifest.reopen_stage(name)
            manifest.mark_running(name)
            try:
                outputs, summary = stage_fn(
                    config, run_dir, providers, state, manifest, load_only=False
                )
            except DreamforgeError as exc:
                manifest.mark_failed(name, str(exc))
                raise
            manifest.mark_done(name, outputs, summary, providers.log.drain())
        completed.append(name)
        if stop_after == name:
            break
    dataset_path = run_dir / DATASET_FILE
    return SynthesisResult(
        run_dir=run_dir,
        manifest=manifest,
        dataset_path=dataset_path if dataset_path.exists() else None,
        completed=tuple(completed),
    )


def _stage_vocabulary(config, run_dir, providers, state, manifest, load_only):
    path = run_dir / VOCABULARY_FILE
    if load_only:
        payload = _read_json(path)
        state.vocab = coco.vocabulary_from_payload(payload["categories"])
        return
    base_vocab = Vocabulary.from_train_names(config.train_categories)
    outcome = expand_vocabulary(base_vocab, providers, config.k_runs, config.seed)
    consensus = consensus_filter(outcome.candidates, config.min_hits)
    vocab, drops = semantic_dedup(consensus, base_vocab, providers, config.tau_dedup)
    state.vocab = vocab
    provenance = {
        c.name: {"source_class": c.source_class, "run_hits": sorted(c.run_hits)}
        for c in consensus
    }
    payload = {
        "schema_version": 1,
        "categories": coco.vocabulary_to_payload(vocab),
        "provenance": provenance,
        "candidates_total": len(outcome.candidates),
        "consensus_kept": len(consensus),
        "dropped": [
            {"name": d.name, "reason": d.reason, "detail": d.detail} for d in drops
        ],
        "failed_runs": outcome.failed_runs,
    }
    _write_json(path, payload)
    summary = {
        "train_categories": len(base_vocab.train_categories),
        "novel_categories": len(vocab.novel_categories),
        "candidates": len(outcome.candidates),
        "consensus_kept": len(consensus),
        "dropped": len(drops),
    }
    return [path], summary


def _stage_layouts(config, run_dir, providers, state, manifest, load_only):
    path = run_dir / LAYOUTS_FILE
    if load_only:
        payload = _read_json(path)
        state.layouts = [layout_from_payload(p) for p in payload["accepted"]]
        return
    vocab = state.vocab
    categories = list(vocab.categories)
    accepted, rejected, skipped = [], [], []
    for index in range(config.num_layouts):
        rng = rng_for("class-sample", config.seed, index)
        k = int(rng.integers(1, config.max_objects_per_layout + 1))
        k = min(k, len(categories))
        picks = sorted(rng.choice(len(categories), size=k, replace=False).tolist())
        class_sample = [categories[i] for i in picks]
        plan_seed = stable_uint64("plan", config.seed, index) % 2**31
        try:
            layout = plan_layout(
                class_sample,
                providers,
                config.canvas,
                plan_seed,
                retries=config.induction_retries,
                max_objects=config.max_objects_per_layout,
            )
        except LayoutInductionError as exc:
            skipped.append({"index": index, "reason": str(exc)})
            continue
        verdict = validate_layout(layout, config.overlap_max, config.min_box_px)
        if verdict.accepted:
            accepted.append(layout)
        else:
            rejected.append(
                {
                    "layout": layout_to_payload(layout),
                    "reason": verdict.reason,
                    "detail": verdict.detail,
                }
            )
    state.layouts = accepted
    payload = {
        "schema_version": 1,
        "accepted": [layout_to_payload(l) for l in accepted],
        "rejected": rejected,
        "skipped": skipped,
    }
    _write_json(path, payload)
    summary = {
        "requested": config.num_layouts,
        "accepted": len(accepted),
        "rejected": len(rejected),
        "skipped": len(skipped),
    }
    return [path], summary


def _stage_images(config, run_dir, providers, state, manifest, load_only):
    path = run_dir / IMAGES_FILE
    if load_only:
        payload = _read_json(path)
        state.drafts = [
            coco.record_from_payload(e["image"], e["annotation"])
            for e in payload["records"]
        ]
        return
    drafts, stats_entries, skipped = [], [], []
    next_object_id = 0
    next_image_id = 0
    for layout in state.layouts:
        gen_seed = stable_uint64("image-gen", config.seed, layout.layout_id) % 2**31
        try:
            image = providers.generate_image(layout, gen_seed)
        except ProviderError as exc:
            skipped.append({"layout_id": layout.layout_id, "reason": str(exc)})
            continue
        objects = []
        for item in layout.items:
            objects.append(
                ObjectInstance(
                    object_id=next_object_id,
                    category_id=item.category_id,
                    bbox=item.bbox,
                )
            )
            next_object_id += 1
        record = ImageRecord(
            image_id=next_image_id,
            width=image.width,
            height=image.height,
            source=Source.SYNTHETIC,
            objects=tuple(objects),
            image_uri=image.image_uri,
            layout_id=layout.layout_id,
        )
        next_image_id += 1
        drafts.append(record)
        stats_entries.append(
            {
                "image_id": record.image_id,
                "layout_id": layout.layout_id,
                "region_stats": [
                    {
                        "bbox": s.bbox.to_list(),
                        "mean_rgb": list(s.mean_rgb),
                        "dominant_fraction": s.dominant_fraction,
                    }
                    for s in image.region_stats
                ],
            }
        )
    state.drafts = drafts
    entries = []
    for record in drafts:
        image_entry, annotation_entry = coco.record_to_payload(record)
        entries.append({"image": image_entry, "annotation": annotation_entry})
    payload = {
        "schema_version": 1,
        "records": entries,
        "stats": stats_entries,
        "skipped": skipped,
    }
    _write_json(path, payload)
    outputs = [path] + [run_dir / r.image_uri for r in drafts]
    summary = {
        "layouts": len(state.layouts),
        "generated": len(drafts),
        "skipped": len(skipped),
        "objects": sum(len(r.objects) for r in drafts),
    }
    return outputs, summary


def _stage_clip_gate(config, run_dir, providers, state, manifest, load_only):
    path = run_dir / CLIP_FILE
    if load_only:
        payload = _read_json(path)
        kept_ids = set(payload["kept_image_ids"])
        records = [
            coco.record_from_payload(e["image"], e["annotation"])
            for e in payload["records"]
        ]
        state.kept_drafts = [r for r in records if r.image_id in kept_ids]
        return
    vocab = state.vocab
    scored = []
    for record in state.drafts:
        object_scores = [
            providers.score_crop(
                record.image_uri, obj.bbox, vocab.name_of(obj.category_id)
            )
            for obj in record.objects
        ]
        objects = [
            obj.with_scores(clip_score=score)
            for obj, score in zip(record.objects, object_scores)
        ]
        image_score = sum(object_scores) / len(object_scores)
        scored.append(record.with_objects(objects).with_clip_score(image_score))
    if config.clip_gate_enabled:
        if len(scored) < 2:
            raise StageFailure(
                f"clip gate needs at least two generated images, have {len(scored)}"
            )
        kept, dropped, report = select_by_clip_score(scored)
        report_payload = report.to_payload()
    else:
        kept, dropped = scored, []
        report_payload = {
            "stage": "clip",
            "kept": len(kept),
            "dropped": 0,
            "threshold": None,
            "per_class_kept": {},
            "disabled": True,
        }
    state.kept_drafts = kept
    entries = []
    for record in scored:
        image_entry, annotation_entry = coco.record_to_payload(record)
        entries.append({"image": image_entry, "annotation": annotation_entry})
    payload = {
        "schema_version": 1,
        "report": report_payload,
        "records": entries,
        "kept_image_ids": [r.image_id for r in kept],
        "image_scores": {str(r.image_id): r.clip_score for r in scored},
    }
    _write_json(path, payload)
    summary = {
        "scored": len(scored),
        "kept": len(kept),
        "dropped": len(dropped),
        "threshold": report_payload.get("threshold"),
    }
    return [path], summary


def _stage_annotation(config, run_dir, providers, state, manifest, load_only):
    path = run_dir / SAMPLES_FILE
    if load_only:
        payload = _read_json(path)
        state.annotated = [
            coco.record_from_payload(e["image"], e["annotation"])
            for e in payload["records"]
        ]
        return
    annotated, dropped_objects, dropped_images = [], [], []
    for record in state.kept_drafts:
        object_ids = [o.object_id for o in record.objects]
        clip_scores = {o.object_id: o.clip_score for o in record.objects}
        # Draft objects were created from the layout items in order, so the
        # geometry rebuilds exactly.
        layout = Layout(
            layout_id=record.layout_id,
            canvas=(record.width, record.height),
            items=tuple(
                LayoutItem(o.category_id, o.bbox) for o in record.objects
            ),
            description="",
        )
        objects, drops = annotate_objects(
            record.image_uri, layout, providers, object_ids
        )
        for drop in drops:
            dropped_objects.append(
                {
                    "image_id": record.image_id,
                    "object_id": object_ids[drop.layout_item_index],
                    "category_id": drop.category_id,
                    "reason": drop.reason,
                }
            )
        if not objects:
            dropped_images.append(
                {"image_id": record.image_id, "reason": "no annotatable objects"}
            )
            continue
        scored_objects = [
            obj.with_scores(
                clip_score=clip_scores[obj.object_id],
                uncertainty=object_uncertainty(obj),
            )
            for obj in objects
        ]
        annotated.append(record.with_objects(scored_objects))
    state.annotated = annotated
    entries = []
    for record in annotated:
        image_entry, annotation_entry = coco.record_to_payload(record)
        entries.append({"image": image_entry, "annotation": annotation_entry})
    payload = {
        "schema_version": 1,
        "records": entries,
        "dropped_objects": dropped_objects,
        "dropped_images": dropped_images,
    }
    _write_json(path, payload)
    summary = {
        "images_in": len(state.kept_drafts),
        "images_out": len(annotated),
        "objects": sum(len(r.objects) for r in annotated),
        "dropped_objects": len(dropped_objects),
        "dropped_images": len(dropped_images),
    }
    return [path], summary


def _stage_uncertainty_gate(config, run_dir, providers, state, manifest, load_only):
    path = run_dir / UNCERTAINTY_FILE
    if load_only:
        payload = _read_json(path)
        state.final_records = [
            coco.record_from_payload(e["image"], e["annotation"])
            for e in payload["records"]
        ]
        return
    all_objects = [obj for record in state.annotated for obj in record.objects]
    if config.uncertainty_gate_enabled and all_objects:
        kept_objs, dropped_objs, report = select_top_n_per_class(
            all_objects, config.per_class_top_n
        )
        report_payload = report.to_payload()
    else:
        kept_objs, dropped_objs = list(all_objects), []
        report_payload = {
            "stage": "uncertainty",
            "kept": len(kept_objs),
            "dropped": 0,
            "threshold": None,
            "per_class_kept": {},
            "disabled": not config.uncertainty_gate_enabled,
        }
    if len(kept_objs) > config.target_objects:
        ranked = sorted(kept_objs, key=lambda o: (o.uncertainty, o.object_id))
        budget_ids = {o.object_id for o in ranked[: config.target_objects]}
        over_budget = len(kept_objs) - config.target_objects
        kept_objs = [o for o in kept_objs if o.object_id in budget_ids]
    else:
        over_budget = 0
    kept_ids = {o.object_id for o in kept_objs}
    final_records = []
    for record in state.annotated:
        keep = [o for o in record.objects if o.object_id in kept_ids]
        if keep:
            final_records.append(record.with_objects(keep))
    state.final_records = final_records
    entries = []
    for record in final_records:
        image_entry, annotation_entry = coco.record_to_payload(record)
        entries.append({"image": image_entry, "annotation": annotation_entry})
    payload = {
        "schema_version": 1,
        "report": report_payload,
        "records": entries,
        "kept_object_ids": sorted(kept_ids),
        "dropped_object_ids": sorted(o.object_id for o in dropped_objs),
        "dropped_over_budget": over_budget,
    }
    _write_json(path, payload)
    summary = {
        "objects_in": len(all_objects),
        "objects_kept": len(kept_objs),
        "images_kept": len(final_records),
        "dropped_over_budget": over_budget,
    }
    return [path], summary


def _stage_export(config, run_dir, providers, state, manifest, load_only):
    path = run_dir / DATASET_FILE
    if load_only:
        return
    checksum = coco.export_coco_panoptic(state.final_records, state.vocab, path)
    summary = {
        "dataset_checksum": checksum,
        "images": len(state.final_records),
        "objects": sum(len(r.objects) for r in state.final_records),
    }
    return [path], summary
