"""Layout planning, validation and per-box mask annotation.

Planning is two LLM calls: a coarse scene description, then induction of
that description into a strict JSON layout with fractional coordinates.
Validation is a value-returning check (a rejected layout is data, not an
error). Annotation asks the mask provider for candidates per box and keeps
the largest one, breaking ties by candidate index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from . import templates
from .datamodel import BBox, Category, ObjectInstance
from .errors import LayoutInductionError
from .hashing import stable_hex, stable_uint64


@dataclass(frozen=True)
class LayoutItem:
    category_id: int
    bbox: BBox


@dataclass(frozen=True)
class Layout:
    layout_id: str
    canvas: tuple[int, int]
    items: tuple[LayoutItem, ...]
    description: str

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "canvas", (int(self.canvas[0]), int(self.canvas[1])))


def layout_content_id(canvas, items, description: str) -> str:
    return stable_hex(
        "layout",
        list(canvas),
        [[it.category_id] + it.bbox.to_list() for it in items],
        description,
        length=12,
    )


def make_layout(canvas, items, description: str) -> Layout:
    return Layout(
        layout_id=layout_content_id(canvas, items, description),
        canvas=tuple(canvas),
        items=tuple(items),
        description=description,
    )


def layout_to_payload(layout: Layout) -> dict:
    return {
        "layout_id": layout.layout_id,
        "canvas": list(layout.canvas),
        "description": layout.description,
        "items": [
            {"category_id": it.category_id, "bbox": it.bbox.to_list()}
            for it in layout.items
        ],
    }


def layout_from_payload(payload: dict) -> Layout:
    return Layout(
        layout_id=payload["layout_id"],
        canvas=tuple(payload["canvas"]),
        items=tuple(
            LayoutItem(it["category_id"], BBox.from_list(it["bbox"]))
            for it in payload["items"]
        ),
        description=payload.get("description", ""),
    )


def _parse_induction(text: str, classes_by_name: dict[str, Category], canvas) -> list[LayoutItem]:
    """Parse the induction answer; raises ValueError on any schema violation."""
    data = json.loads(text)
    if not isinstance(data, dict) or "objects" not in data or not isinstance(data["objects"], list):
        raise ValueError("induction output must be an object with an 'objects' list")
    width, height = canvas
    items = []
    for entry in data["objects"]:
        if not isinstance(entry, dict) or "class" not in entry or "box" not in entry:
            raise ValueError("each object needs 'class' and 'box'")
        name = str(entry["class"])
        if name not in classes_by_name:
            raise ValueError(f"class {name!r} not in the sampled class set")
        box = entry["box"]
        if not (isinstance(box, list) and len(box) == 4):
            raise ValueError("box must be [x, y, w, h]")
        nx, ny, nw, nh = (float(v) for v in box)
        if not (0.0 <= nx and 0.0 <= ny and nw > 0.0 and nh > 0.0):
            raise ValueError(f"box fractions out of range: {box}")
        if nx + nw > 1.0 + 1e-6 or ny + nh > 1.0 + 1e-6:
            raise ValueError(f"box exceeds the unit canvas: {box}")
        x0 = round(nx * width)
        y0 = round(ny * height)
        x1 = min(width, round((nx + nw) * width))
        y1 = min(height, round((ny + nh) * height))
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"box collapses under pixel scaling: {box}")
        items.append(
            LayoutItem(classes_by_name[name].id, BBox(x0, y0, x1 - x0, y1 - y0))
        )
    return items


def plan_layout(
    class_sample: Sequence[Category],
    providers,
    canvas: tuple[int, int],
    seed: int,
    retries: int = 3,
    max_objects: int = 6,
) -> Layout:
    """Plan one layout for the sampled classes.

    Raises LayoutInductionError when the induction output stays unparseable
    for `retries` attempts; callers skip the layout and log the failure.
    """
    if not (1 <= len(class_sample) <= max_objects):
        raise ValueError(f"class sample size must be in [1, {max_objects}]")
    names = [c.name for c in class_sample]
    by_name = {c.name: c for c in class_sample}
    describe_seed = stable_uint64("layout-describe", seed, names) % 2**31
    description = providers.llm_complete(
        templates.coarse_layout_prompt(names), describe_seed
    )
    errors = []
    for attempt in range(1, retries + 1):
        induce_seed = stable_uint64("layout-induce", seed, names, attempt) % 2**31
        text = providers.llm_complete(
            templates.induction_prompt(description, names, attempt), induce_seed
        )
        try:
            items = _parse_induction(text, by_name, canvas)
        except (ValueError, json.JSONDecodeError) as exc:
            errors.append(f"attempt {attempt}: {exc}")
            continue
        return make_layout(canvas, items, description)
    raise LayoutInductionError(
        f"no parseable layout after {retries} attempts: {'; '.join(errors)}"
    )


ACCEPTED = "accepted"
REJECT_OUT_OF_BOUNDS = "out-of-bounds"
REJECT_OVERLAP = "overlap"
REJECT_DEGENERATE = "degenerate"


@dataclass(frozen=True)
class LayoutValidation:
    accepted: bool
    reason: str
    detail: str = ""


def validate_layout(layout: Layout, overlap_max: float = 0.30, min_box_px: int = 32) -> LayoutValidation:
    """Check a layout against the geometric invariants; rejection is a value."""
    width, height = layout.canvas
    if not layout.items:
        return LayoutValidation(False, REJECT_DEGENERATE, "empty item list")
    for i, item in enumerate(layout.items):
        b = item.bbox
        if b.right > width or b.bottom > height:
            return LayoutValidation(
                False, REJECT_OUT_OF_BOUNDS, f"item {i} box {b.to_list()} exceeds canvas"
            )
        if min(b.w, b.h) < min_box_px:
            return LayoutValidation(
                False, REJECT_DEGENERATE, f"item {i} side below {min_box_px}px"
            )
    for i in range(len(layout.items)):
        for j in range(i + 1, len(layout.items)):
            iou = layout.items[i].bbox.iou(layout.items[j].bbox)
            if iou > overlap_max:
                return LayoutValidation(
                    False, REJECT_OVERLAP, f"items {i},{j} IoU {iou:.3f} > {overlap_max}"
                )
    return LayoutValidation(True, ACCEPTED)


@dataclass(frozen=True)
class AnnotationDrop:
    layout_item_index: int
    category_id: int
    reason: str


def annotate_objects(
    image_uri: str,
    layout: Layout,
    providers,
    object_ids: Sequence[int],
) -> tuple[list[ObjectInstance], list[AnnotationDrop]]:
    """Pick the largest mask candidate for each layout box.

    `object_ids` assigns the id for each layout item up front so ids stay
    stable whether or not earlier items drop out. Items with no candidates
    are dropped (reported, not raised).
    """
    if len(object_ids) != len(layout.items):
        raise ValueError("need exactly one object id per layout item")
    objects: list[ObjectInstance] = []
    drops: list[AnnotationDrop] = []
    for index, item in enumerate(layout.items):
        candidates = providers.propose_masks(image_uri, item.bbox)
        if not candidates:
            drops.append(AnnotationDrop(index, item.category_id, "no mask candidates"))
            continue
        best = max(range(len(candidates)), key=lambda i: (candidates[i].area, -i))
        chosen = candidates[best]
        objects.append(
            ObjectInstance(
                object_id=object_ids[index],
                category_id=item.category_id,
                bbox=item.bbox,
                mask=chosen.mask,
                confidence=chosen.confidence,
            )
        )
    return objects, drops
