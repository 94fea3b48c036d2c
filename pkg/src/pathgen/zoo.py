"""Model architectures, checkpoint persistence, and a desk-scale trainer.

All architectures share one structural contract: a ``features`` stack of
convolutional stages whose ReLU outputs are the capture points, followed
by a flattening ``head``. Checkpoints store the architecture name so a
model can be rebuilt from the file alone.
"""
from __future__ import annotations

from pathlib import Path

import torch
import torch.nn as nn

from .errors import ConfigError, DataFormatError

CHECKPOINT_FORMAT_VERSION = 1


class ConvClassifier(nn.Module):
    """Conv feature stack plus a fully connected head."""

    def __init__(
        self,
        arch: str,
        features: nn.Sequential,
        head: nn.Module,
        input_size: tuple[int, int, int],
        num_classes: int,
    ):
        super().__init__()
        self.arch = arch
        self.features = features
        self.head = head
        self.input_size = input_size
        self.num_classes = num_classes

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.features(x)
        return self.head(torch.flatten(x, 1))


def toy3(num_classes: int = 2) -> ConvClassifier:
    """Three conv stages on 16x16 inputs; the desk-scale target."""
    features = nn.Sequential(
        nn.Conv2d(3, 8, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(8, 16, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(16, 16, kernel_size=3, padding=1),
        nn.ReLU(),
    )
    head = nn.Linear(16 * 4 * 4, num_classes)
    return ConvClassifier("toy3", features, head, (3, 16, 16), num_classes)


def alexnet32(num_classes: int = 10) -> ConvClassifier:
    """AlexNet variant for 32x32 inputs (five conv stages)."""
    features = nn.Sequential(
        nn.Conv2d(3, 64, kernel_size=11, stride=4, padding=5),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(64, 192, kernel_size=5, padding=2),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(192, 384, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.Conv2d(384, 256, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.Conv2d(256, 256, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2),
    )
    head = nn.Linear(256, num_classes)
    return ConvClassifier("alexnet32", features, head, (3, 32, 32), num_classes)


def vgg11bn32(num_classes: int = 10) -> ConvClassifier:
    """VGG-11 with batch normalization for 32x32 inputs (eight conv stages)."""
    cfg = [64, "M", 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"]
    layers: list[nn.Module] = []
    in_ch = 3
    for item in cfg:
        if item == "M":
            layers.append(nn.MaxPool2d(2))
        else:
            layers += [
                nn.Conv2d(in_ch, int(item), kernel_size=3, padding=1),
                nn.BatchNorm2d(int(item)),
                nn.ReLU(),
            ]
            in_ch = int(item)
    head = nn.Linear(512, num_classes)
    return ConvClassifier("vgg11bn32", nn.Sequential(*layers), head, (3, 32, 32), num_classes)


ARCHITECTURES = {
    "toy3": toy3,
    "alexnet32": alexnet32,
    "vgg11bn32": vgg11bn32,
}


def build_model(arch: str, num_classes: int | None = None) -> ConvClassifier:
    if arch not in ARCHITECTURES:
        raise ConfigError(
            f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}"
        )
    factory = ARCHITECTURES[arch]
    if num_classes is None:
        return factory()
    return factory(num_classes=num_classes)


def save_checkpoint(path: str | Path, net: ConvClassifier) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": net.arch,
        "num_classes": net.num_classes,
        "input_size": tuple(net.input_size),
        "state_dict": net.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> ConvClassifier:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"model checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise DataFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    for key in ("arch", "num_classes", "state_dict"):
        if key not in payload:
            raise DataFormatError(f"checkpoint {path} missing field {key!r}")
    net = build_model(payload["arch"], payload["num_classes"])
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return net


def fit_target(
    net: ConvClassifier,
    images: torch.Tensor,
    labels: torch.Tensor,
    epochs: int = 20,
    lr: float = 1e-3,
    batch_size: int = 32,
    seed: int = 0,
) -> float:
    """Train a desk-scale target classifier in place; returns train accuracy.

    This is demo plumbing for producing checkpoints to explain. The
    toolkit proper never updates target parameters.
    """
    gen = torch.Generator().manual_seed(seed)
    torch.manual_seed(seed)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    net.train()
    n = images.shape[0]
    for _ in range(epochs):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            opt.zero_grad()
            loss = loss_fn(net(images[idx]), labels[idx])
            loss.backward()
            opt.step()
    net.eval()
    with torch.no_grad():
        preds = net(images).argmax(dim=1)
    return (preds == labels).float().mean().item()
