"""Deterministic hashing helpers.

Everything stochastic in the package derives its randomness from
`rng_for(...)` so that a run is a pure function of (config, seed): Python's
built-in `hash` is salted per process and must never be used for anything
that ends up in an artifact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def canonical_json(obj) -> str:
    """Serialize to JSON with a stable key order and no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _encode_parts(parts) -> bytes:
    return canonical_json([repr(p) if isinstance(p, float) else p for p in parts]).encode("utf-8")


def stable_digest(*parts) -> bytes:
    """32-byte BLAKE2b digest of the canonical encoding of `parts`."""
    return hashlib.blake2b(_encode_parts(parts), digest_size=32).digest()


def stable_hex(*parts, length: int = 16) -> str:
    return stable_digest(*parts).hex()[:length]


def stable_uint64(*parts) -> int:
    return int.from_bytes(stable_digest(*parts)[:8], "big")


def unit_interval(*parts) -> float:
    """Deterministic float in [0, 1) keyed by `parts`, uniform over the key space."""
    return stable_uint64(*parts) / 2.0**64


def rng_for(*parts) -> np.random.Generator:
    """numpy Generator seeded from a stable digest of `parts`."""
    return np.random.default_rng(stable_uint64(*parts))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
