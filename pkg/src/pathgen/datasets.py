"""Dataset ingestion: CIFAR-10 binary batches, image directories, synthetic.

Every loader returns a SampleSet of normalized float32 image tensors with
the raw uint8 pixels retained for visualization, plus the normalization
constants so run manifests can record them.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DataFormatError

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 1024 pixel bytes
CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)
DEFAULT_MEAN = (0.5, 0.5, 0.5)
DEFAULT_STD = (0.5, 0.5, 0.5)


@dataclass
class SampleSet:
    """Normalized images plus labels and provenance."""

    images: torch.Tensor  # (n, 3, h, w) float32, normalized
    labels: torch.Tensor  # (n,) int64
    raw: np.ndarray  # (n, h, w, 3) uint8, pre-normalization pixels
    name: str
    split: str
    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def ids(self) -> list[int]:
        return list(range(len(self)))


def normalize(raw: np.ndarray, mean, std) -> torch.Tensor:
    """uint8 (n, h, w, 3) pixels to normalized float32 (n, 3, h, w)."""
    x = torch.from_numpy(raw.astype(np.float32) / 255.0).permute(0, 3, 1, 2)
    m = torch.tensor(mean, dtype=torch.float32).view(1, 3, 1, 1)
    s = torch.tensor(std, dtype=torch.float32).view(1, 3, 1, 1)
    return (x - m) / s


# ----------------------------------------------------------------------
# synthetic two-blob data
# ----------------------------------------------------------------------


def synthetic_two_blob(
    n: int, seed: int = 0, split: str = "train", size: int = 16
) -> SampleSet:
    """Seeded 2-class generator: a Gaussian blob in one of two quadrants.

    Class 0 blobs sit near the upper-left, class 1 near the lower-right;
    pixel noise is added per channel. Per-sample seeding keeps the byte
    stream identical across runs and independent of generation order.
    """
    split_code = {"train": 0, "test": 1}.get(split)
    if split_code is None:
        raise ConfigError(f"synthetic split must be 'train' or 'test', got {split!r}")
    if seed < 0:
        raise ConfigError(f"synthetic seed must be non-negative, got {seed}")
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    raw = np.empty((n, size, size, 3), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, split_code, i]))
        label = i % 2
        base = size * 0.28 if label == 0 else size * 0.72
        cy, cx = base + rng.uniform(-1.5, 1.5, size=2)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * 2.0**2))
        img = blob[:, :, None] + rng.normal(0.0, 0.08, size=(size, size, 3))
        raw[i] = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        labels[i] = label
    return SampleSet(
        images=normalize(raw, DEFAULT_MEAN, DEFAULT_STD),
        labels=torch.from_numpy(labels),
        raw=raw,
        name="synthetic",
        split=split,
        mean=DEFAULT_MEAN,
        std=DEFAULT_STD,
    )


# ----------------------------------------------------------------------
# CIFAR-10 binary batch format
# ----------------------------------------------------------------------


def _read_cifar_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = path.read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
        raise DataFormatError(
            f"{path}: size {len(raw)} is not a multiple of the {CIFAR_RECORD_BYTES}-byte "
            f"record (1 label byte + 3072 pixel bytes); file truncated or not CIFAR-10 binary"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    # Pixel payload is three 1024-byte planes (R, G, B), each 32x32 row-major.
    pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return np.ascontiguousarray(pixels), labels


def load_cifar10(path: str | Path, split: str = "test") -> SampleSet:
    """Load CIFAR-10 binary batches from a file or the standard directory."""
    path = Path(path)
    if path.is_file():
        files = [path]
    elif path.is_dir():
        if split == "test":
            files = [path / "test_batch.bin"]
        elif split == "train":
            files = [path / f"data_batch_{i}.bin" for i in range(1, 6)]
        else:
            raise ConfigError(f"cifar10 split must be 'train' or 'test', got {split!r}")
        missing = [str(f) for f in files if not f.exists()]
        if missing:
            raise DataFormatError(f"missing CIFAR-10 batch file(s): {missing}")
    else:
        raise DataFormatError(f"CIFAR-10 path not found: {path}")
    parts = [_read_cifar_file(f) for f in files]
    raw = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    return SampleSet(
        images=normalize(raw, CIFAR_MEAN, CIFAR_STD),
        labels=torch.from_numpy(labels),
        raw=raw,
        name="cifar10",
        split=split,
        mean=CIFAR_MEAN,
        std=CIFAR_STD,
    )


# ----------------------------------------------------------------------
# directory of images with a labels index
# ----------------------------------------------------------------------


def load_image_dir(
    path: str | Path,
    split: str = "test",
    resolution: int = 32,
    labels_file: str = "labels.txt",
) -> SampleSet:
    """Load images listed in an index file of "<relative-path> <label>" lines.

    Images are converted to RGB and resized to resolution x resolution.
    """
    from PIL import Image

    root = Path(path)
    index = root / labels_file
    if not index.exists():
        raise DataFormatError(f"labels index not found: {index}")
    entries = []
    for lineno, line in enumerate(index.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.rsplit(maxsplit=1)
        if len(parts) != 2 or not parts[1].lstrip("-").isdigit():
            raise DataFormatError(f"{index}:{lineno}: expected '<path> <label>', got {line!r}")
        entries.append((parts[0], int(parts[1])))
    if not entries:
        raise DataFormatError(f"{index}: no labeled entries")
    raw = np.empty((len(entries), resolution, resolution, 3), dtype=np.uint8)
    labels = np.empty(len(entries), dtype=np.int64)
    for i, (rel, label) in enumerate(entries):
        img_path = root / rel
        if not img_path.exists():
            raise DataFormatError(f"{index}: listed image missing: {img_path}")
        with Image.open(img_path) as img:
            resized = img.convert("RGB").resize((resolution, resolution), Image.BILINEAR)
        raw[i] = np.asarray(resized, dtype=np.uint8)
        labels[i] = label
    return SampleSet(
        images=normalize(raw, DEFAULT_MEAN, DEFAULT_STD),
        labels=torch.from_numpy(labels),
        raw=raw,
        name="imagedir",
        split=split,
        mean=DEFAULT_MEAN,
        std=DEFAULT_STD,
    )


# ----------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------


def load_dataset(
    name: str,
    path: str | None = None,
    split: str = "test",
    seed: int = 0,
    limit: int | None = None,
    resolution: int = 32,
    synthetic_n: int = 512,
) -> SampleSet:
    if name == "synthetic":
        ds = synthetic_two_blob(limit or synthetic_n, seed=seed, split=split)
    elif name == "cifar10":
        if path is None:
            raise ConfigError("cifar10 requires --data-path")
        ds = load_cifar10(path, split)
    elif name == "imagedir":
        if path is None:
            raise ConfigError("imagedir requires --data-path")
        ds = load_image_dir(path, split, resolution=resolution)
    else:
        raise ConfigError(f"unknown dataset {name!r}; choose synthetic, cifar10, or imagedir")
    if limit is not None and limit < len(ds):
        ds = SampleSet(
            images=ds.images[:limit],
            labels=ds.labels[:limit],
            raw=ds.raw[:limit],
            name=ds.name,
            split=ds.split,
            mean=ds.mean,
            std=ds.std,
        )
    return ds
