"""Run manifests: every command records enough to re-run itself.

A manifest is a JSON document holding the resolved command arguments,
the seed, dataset normalization constants, and format versions. Loading
a manifest reproduces the original invocation.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import DataFormatError

MANIFEST_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    model: str | None = None
    checkpoint: str | None = None
    dataset: str | None = None
    data_path: str | None = None
    split: str = "test"
    limit: int | None = None
    out_dir: str | None = None
    generator_checkpoint: str | None = None
    method: str = "genpath"
    sparsity: float | None = None
    scope: str = "per_layer"
    metrics: list[str] = field(default_factory=lambda: ["accuracy", "mic", "mdc", "icr"])
    masks_dir: str | None = None
    sparsity_grid: list[float] = field(default_factory=list)
    eps_ss_grid: list[float] = field(default_factory=list)
    eps_cn_grid: list[float] = field(default_factory=list)
    alpha: float = 1.0
    beta: float = 0.005
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    reference: str = "model"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def write_manifest(out_dir: str | Path, config: RunConfig, **extra) -> Path:
    from . import __version__

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "package_version": __version__,
        "config": config.to_dict(),
    }
    doc.update(extra)
    path = out / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path


def read_manifest(path: str | Path) -> RunConfig:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DataFormatError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid manifest JSON: {exc}") from exc
    if "config" not in doc:
        raise DataFormatError(f"{path}: manifest missing 'config'")
    return RunConfig.from_dict(doc["config"])
