"""Synthetic-real alignment numerics.

Per-class memory banks hold the most recent real-object feature vectors
(bounded FIFO; the newest push evicts the oldest entry once the bank is
full). A class prototype is the elementwise mean of its bank. The
alignment loss for a synthetic feature is one minus its cosine similarity
to the prototype; the prototype is treated as a constant, so the gradient
lives entirely in the synthetic feature and is orthogonal to it.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np

from .datamodel import Source
from .errors import ContractViolation, EmptyBankError, UndefinedLossError


@dataclass(frozen=True)
class FeatureVec:
    values: np.ndarray
    class_id: int
    source: Source

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("feature values must form a non-empty 1D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        if not isinstance(self.source, Source):
            object.__setattr__(self, "source", Source(self.source))


class MemoryBank:
    """Bounded per-class queue of real-object features, oldest-out."""

    def __init__(self, class_id: int, capacity: int, feature_len: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.class_id = class_id
        self.capacity = capacity
        self.feature_len = feature_len
        self.entries: list[FeatureVec] = []

    def __len__(self) -> int:
        return len(self.entries)

    def push(self, feature: FeatureVec) -> "MemoryBank":
        if feature.source is not Source.REAL:
            raise ContractViolation("memory banks accept real-source features only")
        if feature.class_id != self.class_id:
            raise ContractViolation(
                f"feature class {feature.class_id} != bank class {self.class_id}"
            )
        if feature.values.shape[0] != self.feature_len:
            raise ContractViolation(
                f"feature length {feature.values.shape[0]} != bank length "
                f"{self.feature_len}"
            )
        self.entries.append(feature)
        if len(self.entries) > self.capacity:
            self.entries.pop(0)
        return self

    def prototype(self) -> np.ndarray:
        if not self.entries:
            raise EmptyBankError(f"bank for class {self.class_id} is empty")
        return np.mean([e.values for e in self.entries], axis=0)

    def to_payload(self) -> dict:
        stacked = (
            np.stack([e.values for e in self.entries])
            if self.entries
            else np.zeros((0, self.feature_len))
        )
        data = np.ascontiguousarray(stacked, dtype="<f8").tobytes()
        return {
            "class_id": self.class_id,
            "capacity": self.capacity,
            "feature_len": self.feature_len,
            "count": len(self.entries),
            "data_b64": base64.b64encode(data).decode("ascii"),
        }

    @staticmethod
    def from_payload(payload: dict) -> "MemoryBank":
        bank = MemoryBank(payload["class_id"], payload["capacity"], payload["feature_len"])
        raw = base64.b64decode(payload["data_b64"])
        stacked = np.frombuffer(raw, dtype="<f8").reshape(
            payload["count"], payload["feature_len"]
        )
        bank.entries = [
            FeatureVec(values=row, class_id=bank.class_id, source=Source.REAL)
            for row in stacked
        ]
        return bank


def bank_update(bank: MemoryBank, feature: FeatureVec) -> MemoryBank:
    return bank.push(feature)


def prototype(bank: MemoryBank) -> np.ndarray:
    return bank.prototype()


def _norms(f_s: np.ndarray, proto: np.ndarray) -> tuple[float, float]:
    nf = float(np.linalg.norm(f_s))
    npr = float(np.linalg.norm(proto))
    if nf == 0.0 or npr == 0.0:
        raise UndefinedLossError("alignment loss needs non-zero vectors")
    return nf, npr


def sra_loss(f_s: np.ndarray, proto: np.ndarray) -> float:
    """Synthetic-real alignment loss: 1 - cos(f_s, proto), in [0, 2]."""
    f_s = np.asarray(f_s, dtype=np.float64)
    proto = np.asarray(proto, dtype=np.float64)
    if f_s.shape != proto.shape:
        raise ValueError("vectors must have equal length")
    nf, npr = _norms(f_s, proto)
    return 1.0 - float(np.dot(f_s, proto)) / (nf * npr)


def sra_grad(f_s: np.ndarray, proto: np.ndarray) -> np.ndarray:
    """Gradient of the alignment loss in the synthetic feature.

    The prototype is bank history and receives no gradient. The result is
    orthogonal to f_s because the loss is invariant to its scale.
    """
    f_s = np.asarray(f_s, dtype=np.float64)
    proto = np.asarray(proto, dtype=np.float64)
    if f_s.shape != proto.shape:
        raise ValueError("vectors must have equal length")
    nf, npr = _norms(f_s, proto)
    cos = float(np.dot(f_s, proto)) / (nf * npr)
    return -(proto / (nf * npr) - cos * f_s / (nf * nf))


def total_loss(l_seg: float, l_sra: float, lambda_sra: float) -> float:
    """Combined objective: segmentation loss plus weighted alignment loss."""
    if lambda_sra < 0:
        raise ValueError("lambda_sra must be >= 0")
    return l_seg + lambda_sra * l_sra


def banks_to_payload(banks: dict[int, MemoryBank]) -> dict:
    return {"banks": [banks[k].to_payload() for k in sorted(banks)]}


def banks_from_payload(payload: dict) -> dict[int, MemoryBank]:
    result = {}
    for entry in payload["banks"]:
        bank = MemoryBank.from_payload(entry)
        result[bank.class_id] = bank
    return result
