"""Core dataset types and the binary-mask run-length codec.

Conventions used throughout the package:

* Masks are run-length encoded row-major with alternating run counts; the
  first run always counts zeros (a mask starting with ones therefore begins
  with a zero-length run). ``sum(runs) == width * height``.
* Object masks and confidence maps are stored at bounding-box resolution,
  anchored at the box origin. This bounds memory and makes "every set bit
  lies inside the box" hold by construction once dimensions are validated.
* All types are immutable after construction and safe to share across
  workers; numpy payloads are marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import MalformedMaskError


class Origin(str, Enum):
    TRAIN = "train"
    NOVEL = "novel"


class Source(str, Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    origin: Origin

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"category id must be >= 0, got {self.id}")
        if not self.name:
            raise ValueError("category name must be non-empty")
        if not isinstance(self.origin, Origin):
            object.__setattr__(self, "origin", Origin(self.origin))


@dataclass(frozen=True)
class Vocabulary:
    """Ordered category set with unique ids and case-insensitively unique names."""

    categories: tuple[Category, ...]

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        ids = [c.id for c in self.categories]
        if len(set(ids)) != len(ids):
            raise ValueError("category ids must be unique within a vocabulary")
        lowered = [c.name.lower() for c in self.categories]
        if len(set(lowered)) != len(lowered):
            raise ValueError("category names must be unique (case-insensitive)")

    def __len__(self) -> int:
        return len(self.categories)

    def by_id(self, category_id: int) -> Category:
        for c in self.categories:
            if c.id == category_id:
                return c
        raise KeyError(f"unknown category id {category_id}")

    def has_id(self, category_id: int) -> bool:
        return any(c.id == category_id for c in self.categories)

    def name_of(self, category_id: int) -> str:
        return self.by_id(category_id).name

    @property
    def train_categories(self) -> tuple[Category, ...]:
        return tuple(c for c in self.categories if c.origin is Origin.TRAIN)

    @property
    def novel_categories(self) -> tuple[Category, ...]:
        return tuple(c for c in self.categories if c.origin is Origin.NOVEL)

    def next_id(self) -> int:
        return max((c.id for c in self.categories), default=-1) + 1

    @staticmethod
    def from_train_names(names) -> "Vocabulary":
        return Vocabulary(
            tuple(Category(i, n, Origin.TRAIN) for i, n in enumerate(names))
        )


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box. x, y are offsets >= 0; w, h are extents > 0."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box offsets must be >= 0, got ({self.x}, {self.y})")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extents must be > 0, got ({self.w}, {self.h})")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def iou(self, other: "BBox") -> float:
        ix = max(0, min(self.right, other.right) - max(self.x, other.x))
        iy = max(0, min(self.bottom, other.bottom) - max(self.y, other.y))
        inter = ix * iy
        if inter == 0:
            return 0.0
        return inter / (self.area + other.area - inter)

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    @staticmethod
    def from_list(values) -> "BBox":
        x, y, w, h = (int(v) for v in values)
        return BBox(x, y, w, h)


@dataclass(frozen=True, eq=False)
class Mask:
    """Run-length encoded binary mask (row-major, first run counts zeros).

    Runs are held as a read-only int64 array so validation and decoding
    stay vectorized on dense masks; equality compares geometry and runs.
    """

    width: int
    height: int
    runs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.runs)
        if arr.dtype.kind not in "iu":
            cast = arr.astype(np.int64)
            if arr.size and not np.array_equal(cast, arr):
                raise MalformedMaskError("run lengths must be integers")
            arr = cast
        else:
            arr = arr.astype(np.int64, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "runs", arr)
        if self.width <= 0 or self.height <= 0:
            raise MalformedMaskError(
                f"mask dimensions must be positive, got {self.width}x{self.height}"
            )
        if arr.size and int(arr.min()) < 0:
            raise MalformedMaskError("run lengths must be non-negative")
        if arr.size > 1 and bool((arr[1:] == 0).any()):
            raise MalformedMaskError("only the leading run may have zero length")
        total = int(arr.sum())
        if total != self.width * self.height:
            raise MalformedMaskError(
                f"run sum {total} != {self.width}x{self.height} pixels"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.runs, other.runs)
        )

    @property
    def area(self) -> int:
        """Number of set pixels (sum of the odd-indexed runs)."""
        return int(self.runs[1::2].sum())

    def runs_list(self) -> list[int]:
        return self.runs.tolist()

    def to_array(self) -> np.ndarray:
        return rle_decode(self)

    @staticmethod
    def from_array(grid) -> "Mask":
        return rle_encode(grid)


def rle_encode(grid) -> Mask:
    """Encode a row-major bit grid into alternating run lengths.

    `grid` is any 2D array-like of truthy/falsy pixel values with shape
    (height, width). The first run counts zeros, so a grid starting with a
    set pixel produces a leading zero-length run.
    """
    arr = np.asarray(grid)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("grid must be a non-empty 2D array")
    flat = (arr != 0).ravel(order="C")
    change = np.flatnonzero(flat[1:] != flat[:-1])
    edges = np.concatenate(([0], change + 1, [flat.size]))
    runs = np.diff(edges)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    height, width = arr.shape
    return Mask(width=int(width), height=int(height), runs=runs)


def rle_decode(mask: Mask) -> np.ndarray:
    """Decode a Mask back into a (height, width) boolean grid.

    Raises MalformedMaskError when the run sum does not cover the grid.
    """
    total = int(mask.runs.sum())
    if total != mask.width * mask.height:
        raise MalformedMaskError(
            f"run sum {total} != {mask.width}x{mask.height} pixels"
        )
    values = np.zeros(mask.runs.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, mask.runs)
    return flat.reshape(mask.height, mask.width)


@dataclass(frozen=True, eq=False)
class ConfidenceMap:
    """Per-pixel prediction confidence in [0, 1], same geometry as its mask."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("confidence values must form a non-empty 2D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("confidence values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("confidence values must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfidenceMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ObjectInstance:
    """One annotated object: box, class, mask and quality scores.

    Mask and confidence are absent on draft records (before annotation has
    run) and required for export. Both are stored at box resolution; the
    dimensional check below is what enforces containment in the box.
    """

    object_id: int
    category_id: int
    bbox: BBox
    mask: Optional[Mask] = None
    confidence: Optional[ConfidenceMap] = None
    clip_score: Optional[float] = None
    uncertainty: Optional[float] = None

    def __post_init__(self):
        if self.mask is not None:
            if (self.mask.width, self.mask.height) != (self.bbox.w, self.bbox.h):
                raise ValueError(
                    f"mask {self.mask.width}x{self.mask.height} does not match "
                    f"box extent {self.bbox.w}x{self.bbox.h}"
                )
        if self.confidence is not None:
            if self.mask is None:
                raise ValueError("confidence requires a mask")
            if (self.confidence.width, self.confidence.height) != (
                self.mask.width,
                self.mask.height,
            ):
                raise ValueError("confidence dimensions must match the mask")
        for name in ("clip_score", "uncertainty"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def annotated(self) -> bool:
        return self.mask is not None and self.confidence is not None

    def with_scores(self, clip_score=None, uncertainty=None) -> "ObjectInstance":
        updates = {}
        if clip_score is not None:
            updates["clip_score"] = float(clip_score)
        if uncertainty is not None:
            updates["uncertainty"] = float(uncertainty)
        return replace(self, **updates)

    def with_annotation(self, mask: Mask, confidence: ConfidenceMap) -> "ObjectInstance":
        return replace(self, mask=mask, confidence=confidence)


@dataclass(frozen=True)
class ImageRecord:
    """An image with its objects. `image_uri` is an opaque locator; pixel
    data never lives in records or manifests."""

    image_id: int
    width: int
    height: int
    source: Source
    objects: tuple[ObjectInstance, ...]
    image_uri: str
    layout_id: Optional[str] = None
    clip_score: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not isinstance(self.source, Source):
            object.__setattr__(self, "source", Source(self.source))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"object ids must be unique within image {self.image_id}")
        if self.source is Source.SYNTHETIC and not self.layout_id:
            raise ValueError("synthetic records must reference a layout id")
        for obj in self.objects:
            if obj.bbox.right > self.width or obj.bbox.bottom > self.height:
                raise ValueError(
                    f"object {obj.object_id} box exceeds image bounds "
                    f"({self.width}x{self.height})"
                )
        if self.clip_score is not None and not (0.0 <= self.clip_score <= 1.0):
            raise ValueError("image clip_score must lie in [0, 1]")

    def with_objects(self, objects) -> "ImageRecord":
        return replace(self, objects=tuple(objects))

    def with_clip_score(self, score: float) -> "ImageRecord":
        return replace(self, clip_score=float(score))
