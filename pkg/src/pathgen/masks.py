"""Containers for per-layer activations and binary pathway masks.

An activation set holds the post-ReLU feature maps of one forward pass,
shallowest layer first. A pathway mask is a shape-matched set of tensors
selecting a subnetwork: 1 keeps a neuron, 0 silences it. During training
the mask entries are relaxed to (0, 1); a finalized mask contains only
exact 0.0 and 1.0.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

Shape3 = tuple[int, int, int]


def _layer_shapes(tensors: list[torch.Tensor]) -> list[Shape3]:
    return [tuple(t.shape[-3:]) for t in tensors]


@dataclass
class ActivationSet:
    """Post-ReLU activations, one tensor per capture point.

    Tensors are (c, h, w) for a single sample or (batch, c, h, w) for a
    batch. All entries are non-negative by construction.
    """

    tensors: list[torch.Tensor]

    @property
    def batched(self) -> bool:
        return self.tensors[0].dim() == 4

    @property
    def layer_shapes(self) -> list[Shape3]:
        return _layer_shapes(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def validate(self) -> None:
        if not self.tensors:
            raise ValueError("activation set is empty")
        dims = {t.dim() for t in self.tensors}
        if dims not in ({3}, {4}):
            raise ValueError(f"mixed or unsupported tensor ranks: {sorted(dims)}")
        for i, t in enumerate(self.tensors):
            if not torch.isfinite(t).all():
                raise ValueError(f"non-finite activation values at layer {i}")
            if (t < 0).any():
                raise ValueError(f"negative activation values at layer {i}")

    def detach(self) -> "ActivationSet":
        return ActivationSet([t.detach() for t in self.tensors])


@dataclass
class PathwayMask:
    """Per-layer mask tensors, shape-matched to an activation set.

    ``firing_sparsity`` is the fraction of entries that are zero; higher
    means fewer neurons kept.
    """

    masks: list[torch.Tensor]

    @property
    def batched(self) -> bool:
        return self.masks[0].dim() == 4

    @property
    def layer_shapes(self) -> list[Shape3]:
        return _layer_shapes(self.masks)

    def __len__(self) -> int:
        return len(self.masks)

    def is_binary(self) -> bool:
        return all(((m == 0.0) | (m == 1.0)).all().item() for m in self.masks)

    def num_elements(self) -> int:
        return sum(m.numel() for m in self.masks)

    def num_kept(self) -> int:
        return int(sum((m != 0.0).sum().item() for m in self.masks))

    def firing_sparsity(self) -> float:
        total = self.num_elements()
        zeros = sum((m == 0.0).sum().item() for m in self.masks)
        return zeros / total

    def per_sample_sparsity(self) -> torch.Tensor:
        """Per-sample zero fraction for a batched mask."""
        if not self.batched:
            raise ValueError("per-sample sparsity requires a batched mask")
        n = self.masks[0].shape[0]
        zeros = torch.zeros(n, dtype=torch.float64)
        total = 0
        for m in self.masks:
            zeros += (m == 0.0).flatten(1).sum(dim=1).double()
            total += m[0].numel()
        return zeros / total

    def sample(self, index: int) -> "PathwayMask":
        """Extract one sample's mask from a batched mask."""
        if not self.batched:
            raise ValueError("mask is not batched")
        return PathwayMask([m[index] for m in self.masks])

    def validate_binary(self) -> None:
        if not self.is_binary():
            raise ValueError("mask is not finalized: entries outside {0, 1}")

    def intersection_size(self, other: "PathwayMask") -> int:
        return int(
            sum(
                ((a != 0.0) & (b != 0.0)).sum().item()
                for a, b in zip(self.masks, other.masks)
            )
        )

    def union_size(self, other: "PathwayMask") -> int:
        return int(
            sum(
                ((a != 0.0) | (b != 0.0)).sum().item()
                for a, b in zip(self.masks, other.masks)
            )
        )

    @staticmethod
    def ones(shapes: list[Shape3]) -> "PathwayMask":
        return PathwayMask([torch.ones(s) for s in shapes])

    @staticmethod
    def zeros(shapes: list[Shape3]) -> "PathwayMask":
        return PathwayMask([torch.zeros(s) for s in shapes])


def check_shapes_match(
    mask_shapes: list[Shape3], layer_specs: list[Shape3], what: str = "mask"
) -> None:
    if list(mask_shapes) != list(layer_specs):
        raise ValueError(
            f"{what} shapes {mask_shapes} do not match model capture shapes {layer_specs}"
        )
