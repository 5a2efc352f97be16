"""Two-stage score-based selection.

Stage one gates whole images on their mean crop-similarity score against
the dataset mean (strictly greater survives). Stage two gates objects on
annotation uncertainty, keeping the lowest-uncertainty `n` per class so
rare classes are not starved by a global cut.

Both threshold reductions run over sorted inputs so results do not depend
on input permutation, and kept/dropped outputs are sorted by id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datamodel import ImageRecord, ObjectInstance, Vocabulary
from .errors import ContractViolation, DegenerateDataError, UndefinedUncertaintyError


@dataclass(frozen=True)
class SelectionReport:
    stage: str
    kept: int
    dropped: int
    threshold: Optional[float]
    per_class_kept: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.kept < 0 or self.dropped < 0:
            raise ValueError("counts must be non-negative")

    def to_payload(self) -> dict:
        return {
            "stage": self.stage,
            "kept": self.kept,
            "dropped": self.dropped,
            "threshold": self.threshold,
            "per_class_kept": {str(k): v for k, v in sorted(self.per_class_kept.items())},
        }


def image_clip_score(image_uri: str, boxes_with_names, providers) -> float:
    """Mean crop-similarity score over (bbox, class_name) pairs of one image."""
    boxes_with_names = list(boxes_with_names)
    if not boxes_with_names:
        raise ValueError("image score needs at least one object box")
    scores = [
        providers.score_crop(image_uri, bbox, name) for bbox, name in boxes_with_names
    ]
    return sum(scores) / len(scores)


def clip_image_score(record: ImageRecord, vocab: Vocabulary, providers) -> float:
    """Image-level score of a record: mean over its objects' crop scores."""
    return image_clip_score(
        record.image_uri,
        [(o.bbox, vocab.name_of(o.category_id)) for o in record.objects],
        providers,
    )


def select_by_clip_score(
    records: list[ImageRecord],
) -> tuple[list[ImageRecord], list[ImageRecord], SelectionReport]:
    """Keep records whose stored clip_score strictly exceeds the input mean.

    Scores are summed in sorted order so the threshold is permutation
    independent. All-equal scores (empty kept set) raise
    DegenerateDataError; callers may disable the gate instead.
    """
    if len(records) < 2:
        raise ValueError("clip gate needs at least two records")
    scores = []
    for r in records:
        if r.clip_score is None:
            raise ContractViolation(f"record {r.image_id} has no clip score")
        scores.append(r.clip_score)
    threshold = sum(sorted(scores)) / len(scores)
    kept = sorted(
        (r for r in records if r.clip_score > threshold), key=lambda r: r.image_id
    )
    dropped = sorted(
        (r for r in records if r.clip_score <= threshold), key=lambda r: r.image_id
    )
    if not kept:
        raise DegenerateDataError(
            "all image scores equal the mean; clip gate would drop everything"
        )
    per_class: dict[int, int] = {}
    for r in kept:
        for o in r.objects:
            per_class[o.category_id] = per_class.get(o.category_id, 0) + 1
    report = SelectionReport(
        stage="clip",
        kept=len(kept),
        dropped=len(dropped),
        threshold=threshold,
        per_class_kept=per_class,
    )
    return kept, dropped, report


def object_uncertainty(obj: ObjectInstance) -> float:
    """Mean of (1 - confidence) over the object's mask pixels."""
    if obj.mask is None or obj.confidence is None:
        raise UndefinedUncertaintyError(
            f"object {obj.object_id} has no annotation to score"
        )
    bits = obj.mask.to_array()
    count = int(bits.sum())
    if count == 0:
        raise UndefinedUncertaintyError(
            f"object {obj.object_id} has an empty mask"
        )
    return float(np.sum(1.0 - obj.confidence.values[bits]) / count)


def select_top_n_per_class(
    objects: list[ObjectInstance], n: int
) -> tuple[list[ObjectInstance], list[ObjectInstance], SelectionReport]:
    """Per category, keep the `n` objects with the smallest uncertainty.

    Ties break by ascending object id; classes with fewer than `n` objects
    keep everything. Outputs are sorted by object id.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    by_class: dict[int, list[ObjectInstance]] = {}
    for obj in objects:
        if obj.uncertainty is None:
            raise ContractViolation(
                f"object {obj.object_id} has no computed uncertainty"
            )
        by_class.setdefault(obj.category_id, []).append(obj)
    kept: list[ObjectInstance] = []
    dropped: list[ObjectInstance] = []
    per_class: dict[int, int] = {}
    for category_id, members in by_class.items():
        ranked = sorted(members, key=lambda o: (o.uncertainty, o.object_id))
        kept.extend(ranked[:n])
        dropped.extend(ranked[n:])
        per_class[category_id] = len(ranked[:n])
    kept.sort(key=lambda o: o.object_id)
    dropped.sort(key=lambda o: o.object_id)
    report = SelectionReport(
        stage="uncertainty",
        kept=len(kept),
        dropped=len(dropped),
        threshold=None,
        per_class_kept=per_class,
    )
    return kept, dropped, report
