"""COCO-panoptic-compatible JSON export of the dataset model.

One JSON index holds images, categories and per-image annotations whose
segments carry the box, the run-length mask and the box-resolution
confidence map (raw float64 bytes, base64). Keys are sorted so the file
bytes are a deterministic function of the records, and the payload embeds
a sha256 checksum of itself (computed with the checksum field blank).
Import reverses the export exactly.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .datamodel import (
    BBox,
    Category,
    ConfidenceMap,
    ImageRecord,
    Mask,
    ObjectInstance,
    Origin,
    Source,
    Vocabulary,
)
from .errors import DatasetExportError, DatasetImportError
from .hashing import canonical_json, sha256_bytes

SCHEMA_VERSION = 1


def _encode_confidence(conf: ConfidenceMap) -> dict:
    data = np.ascontiguousarray(conf.values, dtype="<f8").tobytes()
    return {
        "dtype": "<f8",
        "height": conf.height,
        "width": conf.width,
        "data_b64": base64.b64encode(data).decode("ascii"),
    }


def _decode_confidence(payload: dict) -> ConfidenceMap:
    raw = base64.b64decode(payload["data_b64"])
    arr = np.frombuffer(raw, dtype=payload["dtype"]).reshape(
        payload["height"], payload["width"]
    )
    return ConfidenceMap(values=arr.astype(np.float64))


def object_to_payload(obj: ObjectInstance) -> dict:
    payload = {
        "object_id": obj.object_id,
        "category_id": obj.category_id,
        "bbox": obj.bbox.to_list(),
        "segmentation": None,
        "area": None,
        "confidence": None,
        "clip_score": obj.clip_score,
        "uncertainty": obj.uncertainty,
    }
    if obj.mask is not None:
        payload["segmentation"] = {
            "width": obj.mask.width,
            "height": obj.mask.height,
            "runs": obj.mask.runs_list(),
        }
        payload["area"] = obj.mask.area
    if obj.confidence is not None:
        payload["confidence"] = _encode_confidence(obj.confidence)
    return payload


def object_from_payload(payload: dict) -> ObjectInstance:
    mask = None
    if payload.get("segmentation") is not None:
        seg = payload["segmentation"]
        mask = Mask(width=seg["width"], height=seg["height"], runs=tuple(seg["runs"]))
    confidence = None
    if payload.get("confidence") is not None:
        confidence = _decode_confidence(payload["confidence"])
    return ObjectInstance(
        object_id=payload["object_id"],
        category_id=payload["category_id"],
        bbox=BBox.from_list(payload["bbox"]),
        mask=mask,
        confidence=confidence,
        clip_score=payload.get("clip_score"),
        uncertainty=payload.get("uncertainty"),
    )


def record_to_payload(record: ImageRecord) -> tuple[dict, dict]:
    """Split a record into its image entry and its annotation entry."""
    image_entry = {
        "image_id": record.image_id,
        "width": record.width,
        "height": record.height,
        "source": record.source.value,
        "image_uri": record.image_uri,
        "layout_id": record.layout_id,
        "clip_score": record.clip_score,
    }
    annotation_entry = {
        "image_id": record.image_id,
        "segments_info": [object_to_payload(o) for o in record.objects],
    }
    return image_entry, annotation_entry


def record_from_payload(image_entry: dict, annotation_entry: dict) -> ImageRecord:
    return ImageRecord(
        image_id=image_entry["image_id"],
        width=image_entry["width"],
        height=image_entry["height"],
        source=Source(image_entry["source"]),
        objects=tuple(
            object_from_payload(p) for p in annotation_entry["segments_info"]
        ),
        image_uri=image_entry["image_uri"],
        layout_id=image_entry.get("layout_id"),
        clip_score=image_entry.get("clip_score"),
    )


def vocabulary_to_payload(vocab: Vocabulary) -> list[dict]:
    return [
        {"id": c.id, "name": c.name, "origin": c.origin.value}
        for c in vocab.categories
    ]


def vocabulary_from_payload(entries) -> Vocabulary:
    return Vocabulary(
        tuple(Category(e["id"], e["name"], Origin(e["origin"])) for e in entries)
    )


def dataset_to_payload(records, vocab: Vocabulary) -> dict:
    ids = [r.image_id for r in records]
    if len(set(ids)) != len(ids):
        raise DatasetExportError("duplicate image_id in export")
    images, annotations = [], []
    for record in records:
        for obj in record.objects:
            if not vocab.has_id(obj.category_id):
                raise DatasetExportError(
                    f"object {obj.object_id} references unknown category "
                    f"{obj.category_id}"
                )
            if not obj.annotated:
                raise DatasetExportError(
                    f"object {obj.object_id} lacks a mask or confidence map"
                )
        image_entry, annotation_entry = record_to_payload(record)
        images.append(image_entry)
        annotations.append(annotation_entry)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "categories": vocabulary_to_payload(vocab),
        "images": images,
        "annotations": annotations,
        "checksum": "",
    }
    payload["checksum"] = sha256_bytes(canonical_json(payload).encode("utf-8"))
    return payload


def export_coco_panoptic(records, vocab: Vocabulary, path: Path) -> str:
    """Write the dataset index to `path`; returns the embedded checksum."""
    payload = dataset_to_payload(records, vocab)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return payload["checksum"]


def dataset_from_payload(payload: dict) -> tuple[list[ImageRecord], Vocabulary]:
    stated = payload.get("checksum", "")
    stripped = dict(payload)
    stripped["checksum"] = ""
    actual = sha256_bytes(canonical_json(stripped).encode("utf-8"))
    if stated != actual:
        raise DatasetImportError(
            f"dataset checksum mismatch (stated {stated[:12]}..., actual {actual[:12]}...)"
        )
    vocab = vocabulary_from_payload(payload["categories"])
    annotations_by_image = {a["image_id"]: a for a in payload["annotations"]}
    if len(annotations_by_image) != len(payload["annotations"]):
        raise DatasetImportError("duplicate image_id in annotations")
    records = []
    for image_entry in payload["images"]:
        annotation = annotations_by_image.get(
            image_entry["image_id"], {"image_id": image_entry["image_id"], "segments_info": []}
        )
        records.append(record_from_payload(image_entry, annotation))
    return records, vocab


def import_coco_panoptic(path: Path) -> tuple[list[ImageRecord], Vocabulary]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetImportError(f"cannot read dataset {path}: {exc}") from exc
    return dataset_from_payload(payload)
