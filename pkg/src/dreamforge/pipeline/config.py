"""Pipeline configuration: one JSON document, hashed into the manifest.

Defaults are desk scale so a stub run finishes in seconds. Comments next to
individual fields note the production-scale values where they differ (for
example the object budget, which is six orders of magnitude larger when the
pipeline feeds a real trainer).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from ..errors import ConfigError
from ..hashing import canonical_json, sha256_bytes
from ..providers.base import PROVIDER_KINDS, ProviderEndpoint

DEFAULT_TRAIN_CATEGORIES = (
    "person", "dog", "cat", "car", "tree", "sofa", "chair", "bicycle",
)

ENDPOINT_ENV_VARS = {kind: f"DREAMFORGE_{kind.upper()}_URL" for kind in PROVIDER_KINDS}


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    out_dir: str = "runs"
    train_categories: tuple[str, ...] = DEFAULT_TRAIN_CATEGORIES

    # vocabulary expansion
    k_runs: int = 5
    min_hits: int = 2
    tau_dedup: float = 0.90

    # scene synthesis
    canvas: tuple[int, int] = (1024, 1024)
    num_layouts: int = 20
    max_objects_per_layout: int = 6
    min_box_px: int = 32
    overlap_max: float = 0.30
    induction_retries: int = 3

    # curation
    clip_gate_enabled: bool = True
    uncertainty_gate_enabled: bool = True
    per_class_top_n: int = 50
    target_objects: int = 2000  # production-scale budget: 500_000

    # alignment / training simulation
    lambda_sra: float = 0.8
    beta: int = 64
    batch_size: int = 16
    objects_per_batch: int = 2
    steps: int = 200
    feature_len: int = 256
    text_embed_len: int = 64
    learning_rate: float = 0.05
    l_seg_constant: float = 1.0
    domain_shift: float = 1.0
    real_images: int = 40
    real_objects_per_image: int = 4

    # provider endpoints; a kind without an endpoint uses the in-process stub
    endpoints: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "train_categories", tuple(self.train_categories))
        object.__setattr__(self, "canvas", tuple(int(v) for v in self.canvas))
        self._check()

    def _check(self):
        checks = [
            (len(self.train_categories) >= 1, "train_categories must be non-empty"),
            (self.k_runs >= 1, "k_runs must be >= 1"),
            (self.min_hits >= 2, "min_hits must be >= 2"),
            (0.0 < self.tau_dedup < 1.0, "tau_dedup must lie in (0, 1)"),
            (min(self.canvas) > 0, "canvas sides must be positive"),
            (self.num_layouts >= 1, "num_layouts must be >= 1"),
            (1 <= self.max_objects_per_layout, "max_objects_per_layout must be >= 1"),
            (self.min_box_px >= 1, "min_box_px must be >= 1"),
            (0.0 <= self.overlap_max <= 1.0, "overlap_max must lie in [0, 1]"),
            (self.induction_retries >= 1, "induction_retries must be >= 1"),
            (self.per_class_top_n >= 1, "per_class_top_n must be >= 1"),
            (self.target_objects >= 1, "target_objects must be >= 1"),
            (self.lambda_sra >= 0.0, "lambda_sra must be >= 0"),
            (self.beta >= 1, "beta must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.objects_per_batch >= 1, "objects_per_batch must be >= 1"),
            (self.steps >= 1, "steps must be >= 1"),
            (self.feature_len >= 2, "feature_len must be >= 2"),
            (self.text_embed_len >= 2, "text_embed_len must be >= 2"),
            (self.learning_rate > 0.0, "learning_rate must be > 0"),
            (self.domain_shift >= 0.0, "domain_shift must be >= 0"),
            (self.real_images >= 1, "real_images must be >= 1"),
            (self.real_objects_per_image >= 1, "real_objects_per_image must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        for kind in self.endpoints:
            if kind not in PROVIDER_KINDS:
                raise ConfigError(f"unknown provider kind {kind!r} in endpoints")

    def to_payload(self) -> dict:
        """Run-identifying fields only: the output location is environmental
        and must not change the config hash or the manifest bytes."""
        payload = asdict(self)
        payload.pop("out_dir")
        payload["train_categories"] = list(self.train_categories)
        payload["canvas"] = list(self.canvas)
        return payload

    def config_hash(self) -> str:
        return sha256_bytes(canonical_json(self.to_payload()).encode("utf-8"))

    def provider_endpoints(self) -> dict[str, ProviderEndpoint]:
        result = {}
        for kind, entry in self.endpoints.items():
            result[kind] = ProviderEndpoint(
                kind=kind,
                base_url=entry["base_url"],
                timeout=float(entry.get("timeout", 30.0)),
                retries=int(entry.get("retries", 2)),
            )
        return result

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)


def _apply_env_endpoints(endpoints: dict, env) -> dict:
    merged = {k: dict(v) for k, v in endpoints.items()}
    for kind, var in ENDPOINT_ENV_VARS.items():
        url = env.get(var)
        if url:
            merged.setdefault(kind, {})["base_url"] = url
    return merged


def load_config(path: Path, env=None, seed_override: Optional[int] = None) -> PipelineConfig:
    """Load a config JSON; environment variables override endpoint URLs."""
    env = os.environ if env is None else env
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config must be a JSON object")
    known = set(PipelineConfig.__dataclass_fields__)
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    payload["endpoints"] = _apply_env_endpoints(payload.get("endpoints", {}), env)
    if seed_override is not None:
        payload["seed"] = seed_override
    try:
        return PipelineConfig(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
