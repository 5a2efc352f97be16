"""Deterministic in-process providers.

Each stub is a pure function of its inputs and an explicit seed, so a whole
pipeline run is reproducible byte for byte. The LLM stub dispatches on the
template headers in `templates.py`; the image stub paints each layout box
with a solid class-keyed patch so downstream mask proposals are predictable;
scorer outputs are keyed hashes, uniform over [0, 1).
"""

from __future__ import annotations

import json
import math
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from .. import templates
from ..datamodel import BBox, ConfidenceMap, rle_encode
from ..errors import ProviderError
from ..hashing import rng_for, stable_hex, stable_uint64, unit_interval
from .base import CallLog, GeneratedImage, MaskCandidate, ProviderSet, RegionStats

# Curated association pools: the first three entries of each pool appear in
# every run (consensus anchors); the rest are sampled per run. Pools mix in
# synonyms of common training classes and a few non-nouns on purpose, so the
# dedup and noun filters always have real work to do.
ASSOCIATION_POOLS: dict[str, tuple[str, ...]] = {
    "dog": ("leash", "kennel", "collar", "bone", "frisbee", "puppy", "doghouse", "running", "muzzle"),
    "cat": ("scratching post", "litter box", "cat tree", "yarn ball", "food bowl", "kitten", "windowsill", "purring", "collar"),
    "person": ("backpack", "umbrella", "hat", "scarf", "briefcase", "walking", "glove", "wallet", "watch"),
    "car": ("traffic light", "parking meter", "tire", "automobile", "garage", "windshield", "driving", "license plate", "gas pump"),
    "tree": ("branch", "leaf", "trunk", "bird nest", "acorn", "shade", "growing", "stump", "moss"),
    "sofa": ("cushion", "coffee table", "armchair", "couch", "throw blanket", "remote control", "cozy", "ottoman", "floor lamp"),
    "chair": ("desk", "table", "stool", "seat cushion", "armrest", "sitting", "footrest", "bench", "lamp"),
    "bicycle": ("helmet", "handlebar", "pedal", "basket", "bell", "riding", "kickstand", "spoke", "bike rack"),
    "bird": ("feather", "nest", "birdcage", "beak", "seed", "flying", "perch", "wing", "birdbath"),
    "boat": ("anchor", "oar", "dock", "sail", "lifejacket", "sailing", "buoy", "harbor", "mast"),
}

GENERIC_ASSOCIATES = (
    "crate", "shelf", "basket", "lamp", "rug", "sign",
    "fence", "pole", "bin", "cart", "ladder", "bucket",
)

# Names that embed close to each other (cosine >= 0.95 guaranteed): every
# name maps to its root and all members of a root share a base direction.
SYNONYM_ROOTS: dict[str, str] = {
    "couch": "sofa",
    "settee": "sofa",
    "automobile": "car",
    "auto": "car",
    "puppy": "dog",
    "kitten": "cat",
    "television": "tv",
    "telly": "tv",
    "bike": "bicycle",
    "sailboat": "boat",
    "armchair": "chair",
}

_CORE_POOL_SIZE = 3


def association_pool(class_name: str) -> tuple[str, ...]:
    """Full noun pool the LLM stub draws from for one source class."""
    pool = ASSOCIATION_POOLS.get(class_name.lower())
    if pool is not None:
        return pool
    offset = stable_uint64("generic-pool", class_name.lower()) % len(GENERIC_ASSOCIATES)
    rotated = GENERIC_ASSOCIATES[offset:] + GENERIC_ASSOCIATES[:offset]
    return rotated[:9]


def _parse_field(prompt: str, label: str) -> str:
    for line in prompt.splitlines():
        if line.startswith(label):
            return line[len(label):].strip()
    raise ProviderError(f"stub could not find {label!r} in prompt")


class StubLLM:
    transport = "inproc"

    def complete(self, prompt: str, seed: int) -> str:
        header = prompt.splitlines()[0] if prompt else ""
        if header == templates.ASSOCIATION_HEADER:
            return self._associate(_parse_field(prompt, "Source category:"), seed)
        if header == templates.COARSE_LAYOUT_HEADER:
            classes = _parse_field(prompt, "Classes:")
            return f"A photographic scene showing {classes} in a natural arrangement."
        if header == templates.INDUCTION_HEADER:
            classes = [c.strip() for c in _parse_field(prompt, "Classes:").split(",") if c.strip()]
            attempt = int(_parse_field(prompt, "Attempt:"))
            return self._induce_layout(classes, seed, attempt)
        return f"resp-{stable_hex('llm-fallback', prompt, seed, length=24)}"

    def _associate(self, class_name: str, seed: int) -> str:
        pool = association_pool(class_name)
        core = list(pool[:_CORE_POOL_SIZE])
        extras = list(pool[_CORE_POOL_SIZE:])
        rng = rng_for("assoc", class_name.lower(), seed)
        k = int(rng.integers(2, min(5, len(extras)) + 1))
        picked = sorted(rng.choice(len(extras), size=k, replace=False).tolist())
        return ", ".join(core + [extras[i] for i in picked])

    def _induce_layout(self, classes: list[str], seed: int, attempt: int) -> str:
        k = max(1, len(classes))
        cols = math.ceil(math.sqrt(k))
        rows = math.ceil(k / cols)
        rng = rng_for("induct", tuple(classes), seed, attempt)
        objects = []
        for i, cls in enumerate(classes):
            r, c = divmod(i, cols)
            cw, ch = 1.0 / cols, 1.0 / rows
            fw = 0.60 + 0.28 * rng.random()
            fh = 0.60 + 0.28 * rng.random()
            w, h = fw * cw, fh * ch
            x = c * cw + (cw - w) * rng.random()
            y = r * ch + (ch - h) * rng.random()
            box = [round(x, 4), round(y, 4), round(w, 4), round(h, 4)]
            box[2] = min(box[2], round(1.0 - box[0], 4))
            box[3] = min(box[3], round(1.0 - box[1], 4))
            objects.append({"class": cls, "box": box})
        # Every eighth layout (keyed, not random) gets a heavy overlap so the
        # validator's rejection path stays exercised end to end.
        if k >= 2 and stable_uint64("induct-overlap", tuple(classes), seed) % 8 == 0:
            first = objects[0]["box"]
            objects[1]["box"] = [
                round(min(first[0] + 0.2 * first[2], 1.0 - first[2]), 4),
                first[1],
                first[2],
                first[3],
            ]
        return json.dumps({"objects": objects})


def _patch_color(category_id: int) -> tuple[int, int, int]:
    digest = rng_for("patch-color", category_id).integers(0, 256, size=3)
    r, g, b = (int(v) for v in digest)
    return (r | 1, g, b)  # odd red channel: never collides with a background


def _background_color(layout_id: str, seed: int) -> tuple[int, int, int]:
    digest = rng_for("bg-color", layout_id, seed).integers(0, 256, size=3)
    r, g, b = (int(v) for v in digest)
    return (r & ~1, g, b)  # even red channel


class StubLayoutToImage:
    """Paints each layout box with a solid patch keyed by its category."""

    transport = "inproc"

    def __init__(self, base_dir: Path):
        self.base_dir = Path(base_dir)

    def generate(self, layout, seed: int) -> GeneratedImage:
        width, height = layout.canvas
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:] = _background_color(layout.layout_id, seed)
        for item in layout.items:
            b = item.bbox
            arr[b.y : b.bottom, b.x : b.right] = _patch_color(item.category_id)
        uri = f"images/{layout.layout_id}-s{seed}.png"
        path = self.base_dir / uri
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(arr).save(path, format="PNG")
        stats = []
        for item in layout.items:
            b = item.bbox
            region = arr[b.y : b.bottom, b.x : b.right].reshape(-1, 3)
            colors, counts = np.unique(region, axis=0, return_counts=True)
            stats.append(
                RegionStats(
                    bbox=b,
                    mean_rgb=tuple(round(float(v), 4) for v in region.mean(axis=0)),
                    dominant_fraction=round(float(counts.max()) / region.shape[0], 6),
                )
            )
        return GeneratedImage(
            image_uri=uri, width=width, height=height, region_stats=tuple(stats)
        )


@lru_cache(maxsize=64)
def _load_image(path_str: str) -> np.ndarray:
    with Image.open(path_str) as img:
        arr = np.asarray(img.convert("RGB"))
    arr.flags.writeable = False
    return arr


def _candidate_confidence(image_uri: str, bbox: BBox, index: int) -> ConfidenceMap:
    base = 0.55 + 0.4 * unit_interval("conf-base", image_uri, bbox.to_list(), index)
    yy, xx = np.mgrid[0 : bbox.h, 0 : bbox.w]
    ripple = 0.02 * ((yy + xx) % 5)
    return ConfidenceMap(values=np.clip(base - ripple, 0.0, 1.0))


class StubMaskGen:
    """Proposes the dominant-color region of the box plus a smaller distractor."""

    transport = "inproc"

    def __init__(self, base_dir: Path):
        self.base_dir = Path(base_dir)

    def propose(self, image_uri: str, bbox: BBox) -> list[MaskCandidate]:
        arr = _load_image(str(self.base_dir / image_uri))
        if bbox.right > arr.shape[1] or bbox.bottom > arr.shape[0]:
            raise ProviderError(
                f"box {bbox.to_list()} outside image {arr.shape[1]}x{arr.shape[0]}"
            )
        region = arr[bbox.y : bbox.bottom, bbox.x : bbox.right]
        flat = region.reshape(-1, 3)
        colors, counts = np.unique(flat, axis=0, return_counts=True)
        dominant = colors[int(np.argmax(counts))]
        grid = np.all(region == dominant, axis=2)
        candidates = [self._candidate(image_uri, bbox, grid, 0)]
        quadrant = np.zeros_like(grid)
        quadrant[: max(1, bbox.h // 2), : max(1, bbox.w // 2)] = True
        distractor = grid & quadrant
        if 0 < int(distractor.sum()) < int(grid.sum()):
            candidates.append(self._candidate(image_uri, bbox, distractor, 1))
        return candidates

    def _candidate(self, image_uri, bbox, grid, index) -> MaskCandidate:
        mask = rle_encode(grid)
        return MaskCandidate(
            mask=mask,
            confidence=_candidate_confidence(image_uri, bbox, index),
            area=mask.area,
        )


class StubScorer:
    """Hash-keyed similarity scores and sphere embeddings with a synonym table."""

    transport = "inproc"

    def __init__(self, embed_dim: int = 64):
        self.embed_dim = embed_dim

    def score(self, image_uri: str, bbox: BBox, class_name: str) -> float:
        return unit_interval("clip-score", image_uri, bbox.to_list(), class_name)

    def embed(self, text: str) -> np.ndarray:
        name = " ".join(text.lower().split())
        root = SYNONYM_ROOTS.get(name, name)
        base = rng_for("embed-root", root, self.embed_dim).standard_normal(self.embed_dim)
        base /= np.linalg.norm(base)
        if name == root:
            return base
        wobble = rng_for("embed-wobble", name, self.embed_dim).standard_normal(self.embed_dim)
        wobble -= wobble.dot(base) * base
        wobble /= np.linalg.norm(wobble)
        vec = base + 0.1 * wobble
        return vec / np.linalg.norm(vec)


def make_stub_providers(base_dir: Path, embed_dim: int = 64, log: CallLog | None = None) -> ProviderSet:
    base_dir = Path(base_dir)
    return ProviderSet(
        llm=StubLLM(),
        layout2image=StubLayoutToImage(base_dir),
        maskgen=StubMaskGen(base_dir),
        scorer=StubScorer(embed_dim=embed_dim),
        log=log,
    )
