"""Run manifests: everything needed to reproduce a result file."""

from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from pydantic import Field, TypeAdapter
from pydantic.dataclasses import dataclass as pydantic_dataclass

from diffrecon.errors import FormatError


MANIFEST_NAME = "manifest.json"


@pydantic_dataclass
class RunManifest:
    command: str
    method: str | None = Field(default=None)
    config_text: str = Field(default="")
    master_seed: int = Field(default=0)
    seeds: dict[str, int] = Field(default_factory=dict)
    geometry: dict[str, Any] = Field(default_factory=dict)
    schedule: dict[str, Any] | None = Field(default=None)
    settings: dict[str, Any] = Field(default_factory=dict)
    checkpoint_sha256: str | None = Field(default=None)
    adapter_sha256: str | None = Field(default=None)
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)
    count_scale: float | None = Field(default=None)
    # Wall-clock stamp; the only field two runs with the same config and seed may differ in.
    created: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())


VOLATILE_FIELDS = frozenset({"created"})


_ADAPTER = TypeAdapter(RunManifest)


def manifest_json(manifest: RunManifest) -> bytes:
    return _ADAPTER.dump_json(manifest, indent=2)


def reproducible_json(manifest: RunManifest) -> bytes:
    """Manifest JSON without the volatile fields; equal for reruns of the same command."""
    return _ADAPTER.dump_json(manifest, indent=2, exclude=set(VOLATILE_FIELDS))


def parse_manifest(data: bytes | str) -> RunManifest:
    try:
        return _ADAPTER.validate_json(data)
    except ValueError as e:
        raise FormatError(f"Invalid run manifest: {e}") from e


def read_manifest(run_dir: Path) -> RunManifest:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.exists():
        raise FormatError(f"No {MANIFEST_NAME} in {run_dir}")
    return parse_manifest(path.read_bytes())
