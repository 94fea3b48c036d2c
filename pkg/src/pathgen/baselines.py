"""Competing pathway constructions: importance scores and mask builders.

Score fields assign one real importance value to every captured
activation element. Any score field becomes a pathway by thresholding to
a target firing sparsity, either layer by layer (default) or over the
whole network.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .instrument import TargetModel
from .masks import PathwayMask, Shape3


@dataclass
class ScoreField:
    """Per-layer real importance scores, shape-matched to the activations."""

    layers: list[torch.Tensor]
    method: str = ""

    @property
    def layer_shapes(self) -> list[Shape3]:
        return [tuple(t.shape[-3:]) for t in self.layers]

    def validate(self) -> None:
        for i, t in enumerate(self.layers):
            if not torch.isfinite(t).all():
                raise ValueError(f"non-finite scores at layer {i}")


def _class_gradients(
    model: TargetModel, x: torch.Tensor, class_index: int
) -> tuple[list[torch.Tensor], list[torch.Tensor]]:
    """Activations and gradients of the class logit w.r.t. each ReLU output."""
    if x.dim() == 3:
        x = x.unsqueeze(0)
    xg = x.detach().clone().requires_grad_(True)
    with torch.enable_grad():
        logits, pre, _ = model.masked_forward_trace(xg)
        score = logits[:, class_index].sum()
        grads = torch.autograd.grad(score, pre)
    acts = [a.detach().squeeze(0) for a in pre]
    grads = [g.detach().squeeze(0) for g in grads]
    return acts, grads


def taylor_importance(model: TargetModel, x: torch.Tensor, class_index: int) -> ScoreField:
    """First-order saliency of silencing each neuron: |activation * gradient|."""
    if not (0 <= class_index < model.num_classes):
        raise ValueError(f"class index {class_index} out of range")
    acts, grads = _class_gradients(model, x, class_index)
    return ScoreField([(a * g).abs() for a, g in zip(acts, grads)], method="taylor")


def intgrad_importance(
    model: TargetModel,
    x: torch.Tensor,
    class_index: int,
    steps: int = 20,
    baseline: torch.Tensor | None = None,
) -> ScoreField:
    """Integrated gradients of the class logit w.r.t. each activation.

    Gradients are averaged over `steps` midpoint samples of the straight
    input path from the baseline (default: zero image) to the input, then
    multiplied by the activation difference along that path.
    """
    if steps < 2:
        raise ValueError("integrated gradients needs steps >= 2")
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if baseline is None:
        baseline = torch.zeros_like(x)
    elif baseline.dim() == 3:
        baseline = baseline.unsqueeze(0)

    _, acts_x = model.capture_activations(x)
    _, acts_b = model.capture_activations(baseline)
    ax = [a.squeeze(0) for a in acts_x.tensors]
    ab = [a.squeeze(0) for a in acts_b.tensors]
    mean_grads = [torch.zeros_like(a) for a in ax]
    for k in range(steps):
        alpha = (k + 0.5) / steps
        point = baseline + alpha * (x - baseline)
        _, grads = _class_gradients(model, point, class_index)
        for acc, g in zip(mean_grads, grads):
            acc += g
    scores = [(a - b) * (g / steps) for a, b, g in zip(ax, ab, mean_grads)]
    return ScoreField(scores, method="intgrad")


def magnitude_importance(acts) -> ScoreField:
    """Activation values used verbatim as importance scores."""
    tensors = acts.tensors if hasattr(acts, "tensors") else list(acts)
    return ScoreField([t.detach().clone() for t in tensors], method="magnitude")


def random_scores(shapes: list[Shape3], seed: int) -> ScoreField:
    """Uniform random score field; thresholding it yields a random pathway."""
    rng = np.random.default_rng(seed)
    layers = [
        torch.from_numpy(rng.random(tuple(s), dtype=np.float64).astype(np.float32))
        for s in shapes
    ]
    return ScoreField(layers, method="random")


def _top_k_mask(flat_scores: torch.Tensor, keep: int) -> torch.Tensor:
    """Binary vector keeping the `keep` largest scores; ties keep lower indices."""
    # Stable sort on negated scores: equal scores stay in index order.
    order = torch.argsort(-flat_scores, stable=True)
    mask = torch.zeros_like(flat_scores)
    mask[order[:keep]] = 1.0
    return mask


def keep_count(total: int, sparsity: float) -> int:
    """ceil((1 - sparsity) * total), robust to float noise, at least 1."""
    v = (1.0 - sparsity) * total
    k = int(np.ceil(np.round(v, 9)))
    return max(1, k)


def threshold_to_mask(
    scores: ScoreField, sparsity: float, scope: str = "per_layer"
) -> PathwayMask:
    """Keep the top (1 - sparsity) fraction of elements by score.

    Exactly ceil((1 - sparsity) * N) entries are kept per scoped unit
    (each layer, or the whole network for scope="global"). Ties at the
    cut are broken by ascending flat index.
    """
    if not (0.0 <= sparsity < 1.0):
        raise ValueError(f"firing sparsity must be in [0, 1), got {sparsity}")
    if scope not in ("per_layer", "global"):
        raise ValueError(f"scope must be 'per_layer' or 'global', got {scope!r}")
    layers = [t.detach().float() for t in scores.layers]
    if scope == "per_layer":
        masks = []
        for t in layers:
            keep = keep_count(t.numel(), sparsity)
            masks.append(_top_k_mask(t.flatten(), keep).reshape(t.shape))
        return PathwayMask(masks)
    flat = torch.cat([t.flatten() for t in layers])
    keep = keep_count(flat.numel(), sparsity)
    full = _top_k_mask(flat, keep)
    masks = []
    offset = 0
    for t in layers:
        masks.append(full[offset : offset + t.numel()].reshape(t.shape))
        offset += t.numel()
    return PathwayMask(masks)


def random_mask(shapes: list[Shape3], sparsity: float, seed: int) -> PathwayMask:
    """Uniform random pathway keeping ceil((1 - s) * N) elements per layer."""
    if not (0.0 <= sparsity < 1.0):
        raise ValueError(f"firing sparsity must be in [0, 1), got {sparsity}")
    rng = np.random.default_rng(seed)
    masks = []
    for s in shapes:
        total = int(np.prod(s))
        keep = keep_count(total, sparsity)
        chosen = rng.choice(total, size=keep, replace=False)
        flat = torch.zeros(total)
        flat[torch.from_numpy(np.ascontiguousarray(chosen))] = 1.0
        masks.append(flat.reshape(tuple(s)))
    return PathwayMask(masks)


@dataclass
class GreedyResult:
    mask: PathwayMask
    sparsity: float
    initially_correct: bool
    elements_removed: int


def greedy_prune(
    model: TargetModel,
    x: torch.Tensor,
    scores: ScoreField,
    chunk_fraction: float = 0.01,
    label: int | None = None,
) -> GreedyResult:
    """Silence neurons in ascending-score order while the prediction holds.

    Removes chunks of ceil(chunk_fraction * N) elements (ordered over the
    whole network) and stops before the first chunk that flips the masked
    prediction away from the original class. If `label` is given and the
    model misclassifies the input, the all-ones mask is returned flagged.
    """
    shapes = scores.layer_shapes
    sizes = [int(np.prod(s)) for s in shapes]
    total = sum(sizes)
    chunk = max(1, int(np.ceil(chunk_fraction * total)))

    with torch.no_grad():
        logits, _ = model.capture_activations(x)
    original_class = int(logits.argmax().item())
    if label is not None and original_class != label:
        return GreedyResult(PathwayMask.ones(shapes), 0.0, False, 0)

    flat_scores = torch.cat([t.detach().float().flatten() for t in scores.layers])
    order = torch.argsort(flat_scores, stable=True)  # ascending: least important first

    def mask_removing(count: int) -> PathwayMask:
        flat = torch.ones(total)
        flat[order[:count]] = 0.0
        masks = []
        offset = 0
        for size, shape in zip(sizes, shapes):
            masks.append(flat[offset : offset + size].reshape(tuple(shape)))
            offset += size
        return PathwayMask(masks)

    removed = 0
    mask = PathwayMask.ones(shapes)
    while removed < total:
        step = min(chunk, total - removed)
        candidate = mask_removing(removed + step)
        with torch.no_grad():
            pred = int(model.masked_forward(x, candidate).argmax().item())
        if pred != original_class:
            break
        removed += step
        mask = candidate
    return GreedyResult(mask, mask.firing_sparsity(), True, removed)
