"""Frozen wrapper around a trained conv classifier.

Captures post-ReLU activations of the convolutional stages and re-executes
the forward pass with a pathway mask multiplied into each ReLU output.
Masking is sequential and compositional: layer i's mask multiplies
activations already recomputed from the masked layers before it.

The wrapper is stateless across calls (no hooks, no shared buffers), so
concurrent capture or masked forwards on distinct inputs are safe.
"""
from __future__ import annotations

import hashlib

import torch
import torch.nn as nn

from .errors import ConfigError
from .masks import ActivationSet, PathwayMask, check_shapes_match


def _as_mask_list(mask: PathwayMask | list[torch.Tensor]) -> list[torch.Tensor]:
    return mask.masks if isinstance(mask, PathwayMask) else list(mask)


class TargetModel:
    """Inference-mode view of a classifier with ReLU capture points.

    Capture points are the ReLU outputs of convolutional stages (tensors
    with spatial dimensions); ReLUs inside fully connected heads are never
    masked. Parameters are frozen on wrap and never updated here.
    """

    def __init__(self, net: nn.Module):
        if not hasattr(net, "features") or not hasattr(net, "head"):
            raise ConfigError(
                "target model must expose 'features' (conv stack) and 'head' modules"
            )
        net.eval()
        for p in net.parameters():
            p.requires_grad_(False)
        self.net = net
        self.input_size = tuple(net.input_size)
        dtype = next(net.parameters()).dtype
        probe = torch.zeros((1, *self.input_size), dtype=dtype)
        logits, pre, _ = self._run(probe)
        if not pre:
            raise ConfigError("model exposes no ReLU capture points")
        self.layer_specs = [tuple(a.shape[1:]) for a in pre]
        self.num_classes = int(logits.shape[1])

    # ------------------------------------------------------------------
    # core forward
    # ------------------------------------------------------------------

    def _run(
        self, x: torch.Tensor, masks: list[torch.Tensor] | None = None
    ) -> tuple[torch.Tensor, list[torch.Tensor], list[torch.Tensor]]:
        """One forward pass; returns (logits, pre-mask acts, post-mask acts)."""
        pre: list[torch.Tensor] = []
        post: list[torch.Tensor] = []
        i = 0
        for module in self.net.features:
            x = module(x)
            if isinstance(module, nn.ReLU) and x.dim() == 4:
                pre.append(x)
                if masks is not None:
                    x = x * masks[i]
                post.append(x)
                i += 1
        logits = self.net.head(torch.flatten(x, 1))
        return logits, pre, post

    def _check_input(self, x: torch.Tensor) -> tuple[torch.Tensor, bool]:
        if x.dim() == 3:
            x = x.unsqueeze(0)
            squeezed = True
        elif x.dim() == 4:
            squeezed = False
        else:
            raise ValueError(f"expected (c,h,w) or (batch,c,h,w) input, got rank {x.dim()}")
        if tuple(x.shape[1:]) != self.input_size:
            raise ValueError(
                f"input shape {tuple(x.shape[1:])} does not match model input {self.input_size}"
            )
        return x, squeezed

    def _check_mask(
        self, mask: PathwayMask | list[torch.Tensor], batch: int | None = None
    ) -> list[torch.Tensor]:
        tensors = _as_mask_list(mask)
        if len(tensors) != len(self.layer_specs):
            raise ValueError(
                f"mask has {len(tensors)} layers, model has {len(self.layer_specs)}"
            )
        check_shapes_match([tuple(t.shape[-3:]) for t in tensors], self.layer_specs)
        if batch is not None:
            for t in tensors:
                if t.dim() == 4 and t.shape[0] != batch:
                    raise ValueError(
                        f"batched mask has {t.shape[0]} samples but the input has {batch}"
                    )
        return tensors

    # ------------------------------------------------------------------
    # public operations
    # ------------------------------------------------------------------

    def capture_activations(self, x: torch.Tensor) -> tuple[torch.Tensor, ActivationSet]:
        """Plain forward pass returning logits and every ReLU output in order."""
        x, squeezed = self._check_input(x)
        with torch.no_grad():
            logits, pre, _ = self._run(x)
        if squeezed:
            logits = logits.squeeze(0)
            pre = [a.squeeze(0) for a in pre]
        return logits, ActivationSet(pre)

    def masked_forward(
        self, x: torch.Tensor, mask: PathwayMask | list[torch.Tensor]
    ) -> torch.Tensor:
        """Forward pass with each ReLU output multiplied by its mask layer.

        Differentiable through the mask tensors; callers that only need
        logits should wrap in torch.no_grad().
        """
        x, squeezed = self._check_input(x)
        tensors = self._check_mask(mask, batch=x.shape[0])
        logits, _, _ = self._run(x, tensors)
        return logits.squeeze(0) if squeezed else logits

    def masked_forward_trace(
        self, x: torch.Tensor, mask: PathwayMask | list[torch.Tensor] | None = None
    ) -> tuple[torch.Tensor, list[torch.Tensor], list[torch.Tensor]]:
        """Masked forward that also returns pre-mask and post-mask activations.

        Gradient-enabled building block for attribution methods.
        """
        if mask is not None:
            tensors: list[torch.Tensor] | None = self._check_mask(mask)
        else:
            tensors = None
        x, _ = self._check_input(x)
        return self._run(x, tensors)

    def masked_gradients(
        self,
        x: torch.Tensor,
        mask: PathwayMask | list[torch.Tensor],
        class_index: int,
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Gradients of the class logit through the masked forward.

        Returns (input gradient, per-layer gradients w.r.t. each ReLU
        output). Entries at masked-out positions are exactly zero. The
        mask must be finalized (binary).
        """
        if not (0 <= class_index < self.num_classes):
            raise ValueError(f"class index {class_index} out of range [0, {self.num_classes})")
        if isinstance(mask, list):
            mask = PathwayMask(mask)
        mask.validate_binary()
        tensors = self._check_mask(mask)
        x, squeezed = self._check_input(x)
        xg = x.detach().clone().requires_grad_(True)
        with torch.enable_grad():
            logits, pre, _ = self._run(xg, tensors)
            score = logits[:, class_index].sum()
            grads = torch.autograd.grad(score, [xg] + pre)
        input_grad, layer_grads = grads[0], list(grads[1:])
        if squeezed:
            input_grad = input_grad.squeeze(0)
            layer_grads = [g.squeeze(0) for g in layer_grads]
        return input_grad, layer_grads

    def predict(self, x: torch.Tensor) -> torch.Tensor:
        logits, _ = self.capture_activations(x)
        return logits.argmax(dim=-1)

    def parameter_checksum(self) -> str:
        """SHA-256 over all parameter bytes; used to detect target drift."""
        digest = hashlib.sha256()
        for name, p in sorted(self.net.state_dict().items()):
            digest.update(name.encode())
            digest.update(p.detach().cpu().numpy().tobytes())
        return digest.hexdigest()
