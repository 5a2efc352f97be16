"""JSON-over-HTTP provider clients.

One endpoint per provider kind (`POST /v1/{kind}`); binary payloads (images,
confidence maps) travel by URI on shared storage, never inline. Requests
retry on transport errors and 5xx responses with exponential backoff and
deterministic jitter; an Idempotency-Key header carries the request hash so
a retried generation job is recognizable server-side.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Optional

import httpx
import numpy as np

from ..datamodel import BBox, ConfidenceMap, Mask
from ..errors import ProviderError
from ..hashing import stable_hex, unit_interval
from ..scene import layout_to_payload
from .base import GeneratedImage, MaskCandidate, ProviderEndpoint, ProviderSet, RegionStats
from .stubs import StubLLM, StubLayoutToImage, StubMaskGen, StubScorer


class _HttpProvider:
    transport = "http"

    def __init__(self, endpoint: ProviderEndpoint, client: Optional[httpx.Client] = None,
                 backoff_base: float = 0.1):
        self.endpoint = endpoint
        self.backoff_base = backoff_base
        self._client = client or httpx.Client(
            base_url=endpoint.base_url, timeout=endpoint.timeout
        )

    def _post(self, path: str, payload: dict) -> dict:
        request_hash = stable_hex("http-request", path, payload)
        attempts = self.endpoint.retries + 1
        last_error = None
        for attempt in range(attempts):
            if attempt > 0:
                delay = self.backoff_base * (2 ** (attempt - 1))
                delay += self.backoff_base * unit_interval(request_hash, attempt)
                time.sleep(delay)
            try:
                response = self._client.post(
                    path, json=payload, headers={"Idempotency-Key": request_hash}
                )
            except httpx.HTTPError as exc:
                last_error = f"transport: {exc}"
                continue
            if response.status_code >= 500:
                last_error = f"server {response.status_code}: {response.text[:200]}"
                continue
            if response.status_code >= 400:
                raise ProviderError(
                    f"{path} rejected ({response.status_code}): {response.text[:200]}",
                    retryable=False,
                )
            return response.json()
        raise ProviderError(
            f"{path} failed after {attempts} attempts: {last_error}", retryable=False
        )


class HttpLLM(_HttpProvider):
    def complete(self, prompt: str, seed: int) -> str:
        return self._post("/v1/llm", {"prompt": prompt, "seed": seed})["text"]


class HttpLayoutToImage(_HttpProvider):
    def generate(self, layout, seed: int) -> GeneratedImage:
        body = self._post(
            "/v1/layout2image", {"layout": layout_to_payload(layout), "seed": seed}
        )
        stats = tuple(
            RegionStats(
                bbox=BBox.from_list(s["bbox"]),
                mean_rgb=tuple(s["mean_rgb"]),
                dominant_fraction=s["dominant_fraction"],
            )
            for s in body.get("region_stats", [])
        )
        return GeneratedImage(
            image_uri=body["image_uri"],
            width=body.get("width", layout.canvas[0]),
            height=body.get("height", layout.canvas[1]),
            region_stats=stats,
        )


class HttpMaskGen(_HttpProvider):
    """Mask candidates arrive as runs; confidence maps come back by URI."""

    def __init__(self, endpoint, base_dir: Path, client=None, backoff_base: float = 0.1):
        super().__init__(endpoint, client, backoff_base)
        self.base_dir = Path(base_dir)

    def propose(self, image_uri: str, bbox: BBox) -> list[MaskCandidate]:
        body = self._post(
            "/v1/maskgen", {"image_uri": image_uri, "bbox": bbox.to_list()}
        )
        candidates = []
        for entry in body["candidates"]:
            mask = Mask(
                width=entry["width"], height=entry["height"], runs=tuple(entry["runs"])
            )
            conf_path = self.base_dir / entry["confidence_uri"]
            try:
                values = np.load(conf_path)
            except OSError as exc:
                raise ProviderError(
                    f"cannot load confidence map {entry['confidence_uri']}: {exc}",
                    retryable=False,
                ) from exc
            candidates.append(
                MaskCandidate(
                    mask=mask,
                    confidence=ConfidenceMap(values=values),
                    area=mask.area,
                )
            )
        return candidates


class HttpScorer(_HttpProvider):
    def score(self, image_uri: str, bbox: BBox, class_name: str) -> float:
        body = self._post(
            "/v1/score",
            {"image_uri": image_uri, "bbox": bbox.to_list(), "class_name": class_name},
        )
        return float(body["score"])

    def embed(self, text: str) -> np.ndarray:
        body = self._post("/v1/embed", {"text": text})
        return np.asarray(body["vector"], dtype=np.float64)


def make_http_providers(
    endpoints: dict[str, ProviderEndpoint],
    base_dir: Path,
    embed_dim: int = 64,
    log=None,
    clients: Optional[dict[str, httpx.Client]] = None,
    backoff_base: float = 0.1,
) -> ProviderSet:
    """Build a provider set from endpoints, stubbing any kind not configured."""
    base_dir = Path(base_dir)
    clients = clients or {}

    def client_for(kind):
        return clients.get(kind)

    if "llm" in endpoints:
        llm = HttpLLM(endpoints["llm"], client_for("llm"), backoff_base)
    else:
        llm = StubLLM()
    if "layout2image" in endpoints:
        layout2image = HttpLayoutToImage(
            endpoints["layout2image"], client_for("layout2image"), backoff_base
        )
    else:
        layout2image = StubLayoutToImage(base_dir)
    if "maskgen" in endpoints:
        maskgen = HttpMaskGen(
            endpoints["maskgen"], base_dir, client_for("maskgen"), backoff_base
        )
    else:
        maskgen = StubMaskGen(base_dir)
    if "scorer" in endpoints:
        scorer = HttpScorer(endpoints["scorer"], client_for("scorer"), backoff_base)
    else:
        scorer = StubScorer(embed_dim=embed_dim)
    return ProviderSet(llm=llm, layout2image=layout2image, maskgen=maskgen, scorer=scorer, log=log)
