"""Desk-scale training simulation around the alignment numerics.

A toy feature extractor stands in for the segmentation model: every object
gets a fixed descriptor (class one-hot, normalized box geometry, mean mask
confidence) pushed through a frozen random projection. Synthetic features
additionally pass through a learnable square map initialized with a random
perturbation of the identity, which models the synthetic-to-real domain
shift; gradient descent on the alignment loss is what has to undo it. The
segmentation loss is a constant here, so the alignment term is the only
source of gradient.

Each step follows the training loop order: sample objects and images,
compute the combined loss against the current prototypes, refresh the
per-class banks from the real objects in the batch, then apply the
parameter update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..alignment import FeatureVec, MemoryBank, sra_grad, sra_loss, total_loss
from ..curation import object_uncertainty
from ..datamodel import (
    BBox,
    ConfidenceMap,
    ImageRecord,
    Mask,
    ObjectInstance,
    Source,
    Vocabulary,
)
from ..errors import DegenerateDataError, UndefinedLossError
from ..hashing import rng_for, stable_uint64, unit_interval

REAL_OBJECT_ID_BASE = 10_000_000


def make_toy_real_dataset(vocab: Vocabulary, config) -> list[ImageRecord]:
    """Deterministic stand-in for a real training set.

    Real images carry only training-origin classes, small full-box masks
    and high confidence, which is all the feature descriptors read.
    """
    train = vocab.train_categories
    width, height = config.canvas
    records = []
    next_object = REAL_OBJECT_ID_BASE
    for i in range(config.real_images):
        rng = rng_for("toy-real", config.seed, i)
        objects = []
        for j in range(config.real_objects_per_image):
            category = train[int(rng.integers(0, len(train)))]
            w = int(rng.integers(16, 49))
            h = int(rng.integers(16, 49))
            x = int(rng.integers(0, max(1, width - w)))
            y = int(rng.integers(0, max(1, height - h)))
            conf = 0.88 + 0.1 * unit_interval("toy-real-conf", config.seed, i, j)
            mask = Mask(width=w, height=h, runs=(0, w * h))
            obj = ObjectInstance(
                object_id=next_object,
                category_id=category.id,
                bbox=BBox(x, y, w, h),
                mask=mask,
                confidence=ConfidenceMap(values=np.full((h, w), conf)),
            )
            objects.append(obj.with_scores(uncertainty=object_uncertainty(obj)))
            next_object += 1
        records.append(
            ImageRecord(
                image_id=REAL_OBJECT_ID_BASE + i,
                width=width,
                height=height,
                source=Source.REAL,
                objects=tuple(objects),
                image_uri=f"toy://real/{i}",
            )
        )
    return records


@dataclass
class BatchSample:
    objects: list[tuple[ImageRecord, ObjectInstance]]
    images: list[ImageRecord]
    clamped_objects: bool = False
    clamped_images: bool = False


def sample_batch(d_r, d_s, config, step_seed: int) -> BatchSample:
    """Uniform without-replacement sample of synthetic objects and mixed images."""
    syn_objects = [(rec, obj) for rec in d_s for obj in rec.objects]
    if not syn_objects:
        raise DegenerateDataError(
            "synthetic dataset is empty; run synthesis before the simulation"
        )
    rng = rng_for("batch", step_seed)
    want = config.objects_per_batch * config.batch_size
    clamped_objects = len(syn_objects) < want
    if clamped_objects:
        objects = list(syn_objects)
    else:
        idx = sorted(rng.choice(len(syn_objects), size=want, replace=False).tolist())
        objects = [syn_objects[i] for i in idx]
    pool = list(d_r) + list(d_s)
    clamped_images = len(pool) < config.batch_size
    take = min(config.batch_size, len(pool))
    idx = sorted(rng.choice(len(pool), size=take, replace=False).tolist())
    images = [pool[i] for i in idx]
    return BatchSample(objects, images, clamped_objects, clamped_images)


class ToyFeatureExtractor:
    """Frozen descriptor projection plus the learnable synthetic-path map."""

    def __init__(self, vocab: Vocabulary, config):
        self.slots = {c.id: i for i, c in enumerate(vocab.categories)}
        self.descriptor_len = len(self.slots) + 5
        self.feature_len = config.feature_len
        self.projection = rng_for("feature-proj", config.seed).standard_normal(
            (self.feature_len, self.descriptor_len)
        ) / math.sqrt(self.descriptor_len)
        self.synth_map = np.eye(self.feature_len) + (
            config.domain_shift
            * rng_for("domain-shift", config.seed).standard_normal(
                (self.feature_len, self.feature_len)
            )
            / math.sqrt(self.feature_len)
        )

    def descriptor(self, record: ImageRecord, obj: ObjectInstance) -> np.ndarray:
        d = np.zeros(self.descriptor_len)
        d[self.slots[obj.category_id]] = 1.0
        d[-5] = obj.bbox.x / record.width
        d[-4] = obj.bbox.y / record.height
        d[-3] = obj.bbox.w / record.width
        d[-2] = obj.bbox.h / record.height
        uncertainty = obj.uncertainty if obj.uncertainty is not None else 0.0
        d[-1] = 1.0 - uncertainty
        return d

    def base_feature(self, record: ImageRecord, obj: ObjectInstance) -> np.ndarray:
        return self.projection @ self.descriptor(record, obj)

    def synthetic_feature(self, base: np.ndarray) -> np.ndarray:
        return self.synth_map @ base


@dataclass
class StepMetrics:
    step: int
    sra_loss: float
    total_loss: float
    cosine_distance: float
    contributors: int
    banked_classes: int

    def to_row(self) -> list:
        return [
            self.step,
            self.sra_loss,
            self.total_loss,
            self.cosine_distance,
            self.contributors,
            self.banked_classes,
        ]


TRACE_COLUMNS = (
    "step",
    "sra_loss",
    "total_loss",
    "cosine_distance",
    "contributors",
    "banked_classes",
)


@dataclass
class TrainResult:
    lambda_sra: float
    steps: int
    trace: list[StepMetrics]
    banks: dict[int, MemoryBank]
    synth_map: np.ndarray
    final_distance_per_class: dict[int, float]
    diverged: bool = False

    @property
    def initial_distance(self) -> float:
        return self.trace[0].cosine_distance

    @property
    def final_distance(self) -> float:
        return self.trace[-1].cosine_distance


def _class_distances(
    extractor: ToyFeatureExtractor,
    syn_bases: dict[int, np.ndarray],
    banks: dict[int, MemoryBank],
) -> dict[int, float]:
    """Per banked class, the mean cosine distance between that class's
    synthetic features and its real prototype."""
    per_class: dict[int, float] = {}
    for class_id in sorted(syn_bases):
        bank = banks.get(class_id)
        if bank is None or len(bank) == 0:
            continue
        proto = bank.prototype()
        feats = syn_bases[class_id] @ extractor.synth_map.T
        norms = np.linalg.norm(feats, axis=1) * np.linalg.norm(proto)
        cos = feats @ proto / norms
        per_class[class_id] = 1.0 - float(cos.mean())
    return per_class


def simulate_training(
    d_r: list[ImageRecord],
    d_s: list[ImageRecord],
    vocab: Vocabulary,
    config,
    steps: Optional[int] = None,
    lambda_sra: Optional[float] = None,
) -> TrainResult:
    """Run the alignment loop for `steps` steps and return the metric trace.

    The reported cosine distance is measured over the full synthetic set
    after each step's bank and parameter updates, so step one (whose banks
    are empty during the loss computation) is the untrained baseline.
    """
    if not d_s:
        raise DegenerateDataError(
            "synthetic dataset is empty; run synthesis before the simulation"
        )
    total_steps = config.steps if steps is None else steps
    lam = config.lambda_sra if lambda_sra is None else lambda_sra
    if total_steps < 1:
        raise ValueError("steps must be >= 1")
    extractor = ToyFeatureExtractor(vocab, config)
    banks = {
        c.id: MemoryBank(c.id, config.beta, config.feature_len)
        for c in vocab.train_categories
    }

    base_cache: dict[int, np.ndarray] = {}
    syn_bases_by_class: dict[int, list[np.ndarray]] = {}
    for rec in d_s:
        for obj in rec.objects:
            base = extractor.base_feature(rec, obj)
            base_cache[obj.object_id] = base
            syn_bases_by_class.setdefault(obj.category_id, []).append(base)
    syn_stacks = {
        cid: np.stack(bases) for cid, bases in syn_bases_by_class.items()
    }
    for rec in d_r:
        for obj in rec.objects:
            base_cache[obj.object_id] = extractor.base_feature(rec, obj)

    trace: list[StepMetrics] = []
    for step in range(1, total_steps + 1):
        step_seed = stable_uint64("train-step", config.seed, step)
        batch = sample_batch(d_r, d_s, config, step_seed)

        protos = {
            cid: bank.prototype() for cid, bank in banks.items() if len(bank) > 0
        }
        losses = []
        grad = np.zeros_like(extractor.synth_map)
        degenerate = False
        for rec, obj in batch.objects:
            proto = protos.get(obj.category_id)
            if proto is None:
                continue
            base = base_cache[obj.object_id]
            feat = extractor.synthetic_feature(base)
            try:
                losses.append(sra_loss(feat, proto))
                grad += np.outer(sra_grad(feat, proto), base)
            except UndefinedLossError:
                # the learnable map collapsed a feature to zero: treat as
                # divergence and return the trace collected so far
                degenerate = True
                break
        l_sra = float(np.mean(losses)) if losses else 0.0
        loss = total_loss(config.l_seg_constant, l_sra, lam)

        for rec in batch.images:
            if rec.source is not Source.REAL:
                continue
            for obj in rec.objects:
                banks[obj.category_id].push(
                    FeatureVec(
                        values=base_cache[obj.object_id],
                        class_id=obj.category_id,
                        source=Source.REAL,
                    )
                )

        if losses:
            extractor.synth_map = extractor.synth_map - (
                config.learning_rate * lam / len(losses)
            ) * grad

        distances = _class_distances(extractor, syn_stacks, banks)
        distance = float(np.mean(list(distances.values()))) if distances else math.nan
        banked = sum(1 for b in banks.values() if len(b) > 0)
        metrics = StepMetrics(
            step=step,
            sra_loss=l_sra,
            total_loss=loss,
            cosine_distance=distance,
            contributors=len(losses),
            banked_classes=banked,
        )
        trace.append(metrics)
        if degenerate or not (
            np.isfinite(loss) and np.all(np.isfinite(extractor.synth_map))
        ):
            return TrainResult(
                lam, step, trace, banks, extractor.synth_map, distances, diverged=True
            )
    return TrainResult(lam, total_steps, trace, banks, extractor.synth_map, distances)
