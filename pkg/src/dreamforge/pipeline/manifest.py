"""Run manifest: append-only stage ledger keyed by the config hash.

The manifest is the single serialization point of a run. Completed stages
are immutable; a resumed run verifies the config hash and every recorded
output checksum before skipping a stage. Nothing time-dependent is ever
written (stub-run manifests must be byte-identical across repeats).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .. import templates
from ..errors import ConfigError, StageFailure
from ..hashing import sha256_file

SYNTHESIS_STAGES = (
    "vocabulary",
    "layouts",
    "images",
    "clip_gate",
    "annotation",
    "uncertainty_gate",
    "export",
)

MANIFEST_NAME = "manifest.json"


class PipelineManifest:
    def __init__(self, run_dir: Path, config_payload: dict, config_hash: str):
        self.run_dir = Path(run_dir)
        self.payload = {
            "schema_version": 1,
            "config_hash": config_hash,
            "config": config_payload,
            "template_version": templates.TEMPLATE_VERSION,
            "stages": {
                name: {"status": "pending"} for name in SYNTHESIS_STAGES
            },
        }

    @property
    def path(self) -> Path:
        return self.run_dir / MANIFEST_NAME

    @property
    def config_hash(self) -> str:
        return self.payload["config_hash"]

    def save(self) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.path.write_text(
            json.dumps(self.payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    @staticmethod
    def load(run_dir: Path) -> "PipelineManifest":
        run_dir = Path(run_dir)
        path = run_dir / MANIFEST_NAME
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load manifest {path}: {exc}") from exc
        manifest = PipelineManifest(run_dir, payload["config"], payload["config_hash"])
        manifest.payload = payload
        return manifest

    @staticmethod
    def open_or_create(run_dir: Path, config_payload: dict, config_hash: str, resume: bool) -> "PipelineManifest":
        path = Path(run_dir) / MANIFEST_NAME
        if path.exists() and resume:
            manifest = PipelineManifest.load(run_dir)
            if manifest.config_hash != config_hash:
                raise ConfigError(
                    "manifest belongs to a different config "
                    f"({manifest.config_hash[:12]}... != {config_hash[:12]}...)"
                )
            return manifest
        manifest = PipelineManifest(run_dir, config_payload, config_hash)
        manifest.save()
        return manifest

    def stage(self, name: str) -> dict:
        try:
            return self.payload["stages"][name]
        except KeyError:
            raise KeyError(f"unknown stage {name!r}") from None

    def is_done(self, name: str) -> bool:
        return self.stage(name).get("status") == "done"

    def outputs_verify(self, name: str) -> bool:
        """True when every recorded output file still matches its checksum."""
        for rel_path, checksum in self.stage(name).get("outputs", {}).items():
            path = self.run_dir / rel_path
            if not path.exists() or sha256_file(path) != checksum:
                return False
        return True

    def mark_running(self, name: str) -> None:
        stage = self.stage(name)
        if stage.get("status") == "done":
            raise StageFailure(f"stage {name} already completed; outputs are immutable")
        stage["status"] = "running"
        self.save()

    def reopen_stage(self, name: str) -> None:
        """Reset a done stage whose outputs no longer verify so it can be
        regenerated (deterministically identical) on resume."""
        self.stage(name)  # raise on unknown stage names
        self.payload["stages"][name] = {"status": "pending"}
        self.save()

    def mark_done(self, name: str, outputs: list[Path], summary: dict, provider_calls: list[dict]) -> None:
        stage = self.stage(name)
        stage["status"] = "done"
        stage["outputs"] = {
            str(Path(p).relative_to(self.run_dir).as_posix()): sha256_file(p)
            for p in outputs
        }
        stage["summary"] = summary
        stage["provider_calls"] = provider_calls
        self.save()

    def mark_failed(self, name: str, reason: str) -> None:
        stage = self.stage(name)
        stage["status"] = "failed"
        stage["reason"] = reason
        self.save()

    def stage_summary(self, name: str) -> dict:
        return self.stage(name).get("summary", {})

    def output_path(self, name: str, filename: str) -> Optional[Path]:
        for rel_path in self.stage(name).get("outputs", {}):
            if Path(rel_path).name == filename:
                return self.run_dir / rel_path
        return None
