"""Provider interfaces, call recording, and shared provider-side types.

Four provider kinds exist: `llm` (text completion), `layout2image`
(layout-conditioned image generation), `maskgen` (class-agnostic mask
proposal) and `scorer` (image-text similarity plus text embedding).
Implementations are duck-typed; `ProviderSet` bundles one of each and
wraps every call with a log entry carrying the request hash, the
transport latency and the outcome.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from ..datamodel import BBox, ConfidenceMap, Mask
from ..errors import ProviderError
from ..hashing import stable_hex

PROVIDER_KINDS = ("llm", "layout2image", "maskgen", "scorer")


@dataclass(frozen=True)
class ProviderEndpoint:
    kind: str
    base_url: str
    timeout: float = 30.0
    retries: int = 2

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


@dataclass(frozen=True)
class MaskCandidate:
    """One proposed mask for a box, with its confidence map and pixel area."""

    mask: Mask
    confidence: ConfidenceMap
    area: int

    def __post_init__(self):
        if self.area != self.mask.area:
            raise ValueError(
                f"stated area {self.area} != set-bit count {self.mask.area}"
            )
        if (self.confidence.width, self.confidence.height) != (
            self.mask.width,
            self.mask.height,
        ):
            raise ValueError("candidate confidence dimensions must match the mask")


@dataclass(frozen=True)
class RegionStats:
    bbox: BBox
    mean_rgb: tuple[float, float, float]
    dominant_fraction: float


@dataclass(frozen=True)
class GeneratedImage:
    image_uri: str
    width: int
    height: int
    region_stats: tuple[RegionStats, ...] = ()


class LLMProvider(Protocol):
    transport: str

    def complete(self, prompt: str, seed: int) -> str: ...


class LayoutToImageProvider(Protocol):
    transport: str

    def generate(self, layout, seed: int) -> GeneratedImage: ...


class MaskGenProvider(Protocol):
    transport: str

    def propose(self, image_uri: str, bbox: BBox) -> list[MaskCandidate]: ...


class ScorerProvider(Protocol):
    transport: str

    def score(self, image_uri: str, bbox: BBox, class_name: str) -> float: ...

    def embed(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class ProviderCall:
    kind: str
    request_hash: str
    latency_ms: float
    outcome: str

    def to_payload(self) -> dict:
        return {
            "kind": self.kind,
            "request_hash": self.request_hash,
            "latency_ms": self.latency_ms,
            "outcome": self.outcome,
        }


class CallLog:
    """Append-only record of provider calls for the run manifest."""

    def __init__(self):
        self.calls: list[ProviderCall] = []

    def record(self, call: ProviderCall) -> None:
        self.calls.append(call)

    def drain(self) -> list[dict]:
        """Return payloads for all calls recorded so far and reset the log."""
        payloads = [c.to_payload() for c in self.calls]
        self.calls = []
        return payloads


class ProviderSet:
    """Bundle of the four providers; every call is logged.

    In-process providers report zero transport latency so that stub runs
    stay byte-reproducible; HTTP providers report wall-clock latency.
    """

    def __init__(self, llm, layout2image, maskgen, scorer, log: Optional[CallLog] = None):
        self.llm = llm
        self.layout2image = layout2image
        self.maskgen = maskgen
        self.scorer = scorer
        self.log = log if log is not None else CallLog()

    def _timed(self, provider, kind: str, request_hash: str, fn):
        measure = getattr(provider, "transport", "inproc") == "http"
        started = time.monotonic() if measure else 0.0
        try:
            result = fn()
        except ProviderError as exc:
            latency = (time.monotonic() - started) * 1000.0 if measure else 0.0
            self.log.record(
                ProviderCall(kind, request_hash, round(latency, 3), f"error:{exc}")
            )
            raise
        latency = (time.monotonic() - started) * 1000.0 if measure else 0.0
        self.log.record(ProviderCall(kind, request_hash, round(latency, 3), "ok"))
        return result

    def llm_complete(self, prompt: str, seed: int) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        request_hash = stable_hex("llm", prompt, seed)
        return self._timed(
            self.llm, "llm", request_hash, lambda: self.llm.complete(prompt, seed)
        )

    def generate_image(self, layout, seed: int) -> GeneratedImage:
        request_hash = stable_hex("layout2image", layout.layout_id, seed)
        return self._timed(
            self.layout2image,
            "layout2image",
            request_hash,
            lambda: self.layout2image.generate(layout, seed),
        )

    def propose_masks(self, image_uri: str, bbox: BBox) -> list[MaskCandidate]:
        request_hash = stable_hex("maskgen", image_uri, bbox.to_list())
        return self._timed(
            self.maskgen,
            "maskgen",
            request_hash,
            lambda: self.maskgen.propose(image_uri, bbox),
        )

    def score_crop(self, image_uri: str, bbox: BBox, class_name: str) -> float:
        request_hash = stable_hex("score", image_uri, bbox.to_list(), class_name)
        return self._timed(
            self.scorer,
            "scorer",
            request_hash,
            lambda: self.scorer.score(image_uri, bbox, class_name),
        )

    def embed_text(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("text must be non-empty")
        request_hash = stable_hex("embed", text)
        return self._timed(
            self.scorer, "scorer", request_hash, lambda: self.scorer.embed(text)
        )
