"""Faithfulness metrics, remove-and-predict, class pathways, transfer.

Confidence conventions: for each sample, c is the original model's
predicted class, y the original probability of c, y_hat the masked
model's probability of that same class, and c_hat the masked argmax.
All percentages are reported on a 0..100 scale.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .baselines import ScoreField, threshold_to_mask
from .instrument import TargetModel
from .masks import PathwayMask

log = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1


# ----------------------------------------------------------------------
# prediction records
# ----------------------------------------------------------------------


@dataclass
class PredictionRecord:
    """Original and masked probability vectors for one sample."""

    original_probs: np.ndarray
    masked_probs: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.original_probs = np.asarray(self.original_probs, dtype=np.float64)
        self.masked_probs = np.asarray(self.masked_probs, dtype=np.float64)
        for name, p in (("original", self.original_probs), ("masked", self.masked_probs)):
            if abs(p.sum() - 1.0) > 1e-6:
                raise ValueError(f"{name} probabilities sum to {p.sum()}, expected 1")

    @property
    def original_class(self) -> int:
        return int(self.original_probs.argmax())

    @property
    def masked_class(self) -> int:
        return int(self.masked_probs.argmax())

    @property
    def original_confidence(self) -> float:
        return float(self.original_probs[self.original_class])

    @property
    def masked_confidence(self) -> float:
        """Masked probability of the original predicted class."""
        return float(self.masked_probs[self.original_class])


def predict_records(
    model: TargetModel,
    images: torch.Tensor,
    mask: PathwayMask,
    labels: torch.Tensor | None = None,
    batch_size: int = 128,
) -> list[PredictionRecord]:
    """Run original and masked forwards over a batch of images.

    An unbatched mask is broadcast to every sample; a batched mask
    supplies one mask per sample.
    """
    records = []
    n = images.shape[0]
    for start in range(0, n, batch_size):
        x = images[start : start + batch_size]
        if mask.batched:
            sub = PathwayMask([m[start : start + batch_size] for m in mask.masks])
        else:
            sub = mask
        with torch.no_grad():
            logits, _ = model.capture_activations(x)
            masked_logits = model.masked_forward(x, sub)
            p = torch.softmax(logits, dim=-1).double()
            q = torch.softmax(masked_logits, dim=-1).double()
            # Renormalize so float64 sums are exactly consistent at 1e-6.
            p = p / p.sum(dim=-1, keepdim=True)
            q = q / q.sum(dim=-1, keepdim=True)
        for i in range(x.shape[0]):
            lab = int(labels[start + i].item()) if labels is not None else None
            records.append(PredictionRecord(p[i].numpy(), q[i].numpy(), lab))
    return records


# ----------------------------------------------------------------------
# scalar metrics
# ----------------------------------------------------------------------


def accuracy(records: list[PredictionRecord], reference: str = "model") -> float:
    """Percent of samples whose masked prediction matches the reference.

    reference="model" scores agreement with the original model's
    prediction (the default); reference="label" scores against ground
    truth and requires labels on every record.
    """
    if reference not in ("model", "label"):
        raise ValueError(f"reference must be 'model' or 'label', got {reference!r}")
    if not records:
        raise ValueError("no records to evaluate")
    if reference == "label":
        if any(r.label is None for r in records):
            raise ValueError("label-reference accuracy needs labels on all records")
        hits = sum(r.masked_class == r.label for r in records)
    else:
        hits = sum(r.masked_class == r.original_class for r in records)
    return 100.0 * hits / len(records)


def mic(records: list[PredictionRecord]) -> float:
    """Mean increase in confidence over all samples, percent.

    Sums y_hat - y over samples where confidence rose and the masked
    prediction matches the original, divided by the total sample count.
    """
    if not records:
        raise ValueError("no records to evaluate")
    total = sum(
        (r.masked_confidence - r.original_confidence)
        for r in records
        if r.masked_confidence > r.original_confidence
        and r.masked_class == r.original_class
    )
    return 100.0 * total / len(records)


def mdc(records: list[PredictionRecord]) -> float:
    """Mean decrease in confidence over all samples, percent."""
    if not records:
        raise ValueError("no records to evaluate")
    total = sum(
        (r.original_confidence - r.masked_confidence)
        for r in records
        if r.masked_confidence < r.original_confidence
        and r.masked_class == r.original_class
    )
    return 100.0 * total / len(records)


def icr(records: list[PredictionRecord]) -> float:
    """Percent of samples with increased confidence and matching prediction."""
    if not records:
        raise ValueError("no records to evaluate")
    hits = sum(
        r.masked_confidence > r.original_confidence
        and r.masked_class == r.original_class
        for r in records
    )
    return 100.0 * hits / len(records)


# ----------------------------------------------------------------------
# pathway similarity
# ----------------------------------------------------------------------


def iou(a: PathwayMask, b: PathwayMask) -> float:
    """Intersection over union of set bits; empty unions score 0."""
    union = a.union_size(b)
    if union == 0:
        return 0.0
    return a.intersection_size(b) / union


def aciou(masks_by_class: dict[int, list[PathwayMask]]) -> float:
    """Average class IOU, percent.

    Per class: the mean IOU over unordered distinct sample pairs; the
    metric is the mean of the per-class values. Classes with fewer than
    two masks are skipped; pairs with an empty union contribute 0.
    """
    per_class = aciou_per_class(masks_by_class)
    if not per_class:
        raise ValueError("no class with at least two masks")
    return float(np.mean(list(per_class.values())))


def aciou_per_class(masks_by_class: dict[int, list[PathwayMask]]) -> dict[int, float]:
    per_class = {}
    empty_unions = 0
    for cls, masks in sorted(masks_by_class.items()):
        if len(masks) < 2:
            log.info("class %s has %d mask(s); skipped in average class IOU", cls, len(masks))
            continue
        vals = []
        for a, b in combinations(masks, 2):
            u = a.union_size(b)
            if u == 0:
                empty_unions += 1
                vals.append(0.0)
            else:
                vals.append(a.intersection_size(b) / u)
        per_class[cls] = 100.0 * float(np.mean(vals))
    if empty_unions:
        log.info("%d mask pair(s) had an empty union and scored 0", empty_unions)
    return per_class


def aciou_per_layer(masks_by_class: dict[int, list[PathwayMask]]) -> list[float]:
    """Average class IOU computed independently per layer, percent."""
    any_masks = next(iter(masks_by_class.values()))
    n_layers = len(any_masks[0])
    out = []
    for layer in range(n_layers):
        restricted = {
            cls: [PathwayMask([m.masks[layer]]) for m in masks]
            for cls, masks in masks_by_class.items()
        }
        out.append(aciou(restricted))
    return out


def aciou_literal(masks_by_class: dict[int, list[PathwayMask]]) -> float:
    """Raw ordered-pair sum variant normalized by 2 * class size.

    Exported for comparison with the plain per-class mean; both agree up
    to the (n_c - 1) pair-count factor.
    """
    total = 0.0
    for _, masks in sorted(masks_by_class.items()):
        n = len(masks)
        if n < 2:
            continue
        s = 0.0
        for a, b in combinations(masks, 2):
            u = a.union_size(b)
            if u:
                s += a.intersection_size(b) / u
        total += 2.0 * s / (2.0 * n)  # ordered pairs counted once each way
    return 100.0 * total


# ----------------------------------------------------------------------
# remove and predict
# ----------------------------------------------------------------------


def complement(mask: PathwayMask) -> PathwayMask:
    return PathwayMask([1.0 - m for m in mask.masks])


def roap(
    model: TargetModel,
    images: torch.Tensor,
    score_fields: list[ScoreField],
    sparsity_grid: list[float],
    scope: str = "per_layer",
    batch_size: int = 128,
) -> list[tuple[float, float]]:
    """Remove-and-predict curve: agreement accuracy after deleting pathways.

    For each grid sparsity, each sample's scores are thresholded into a
    pathway of that sparsity, the pathway's neurons are zeroed (keeping
    the rest), and agreement with the original prediction is measured.
    Lower accuracy means the pathway held the decisive neurons. A grid
    value of 1.0 denotes the empty pathway (nothing removed).
    """
    n = images.shape[0]
    if len(score_fields) != n:
        raise ValueError(f"need one score field per image: {len(score_fields)} vs {n}")
    with torch.no_grad():
        logits, _ = model.capture_activations(images)
    original_pred = logits.argmax(dim=-1)

    curve = []
    for s in sparsity_grid:
        if s == 1.0:
            removal = [PathwayMask.ones(score_fields[i].layer_shapes) for i in range(n)]
        else:
            removal = [
                complement(threshold_to_mask(score_fields[i], s, scope=scope))
                for i in range(n)
            ]
        hits = 0
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            stacked = PathwayMask(
                [
                    torch.stack([removal[i].masks[l] for i in range(start, stop)])
                    for l in range(len(removal[0]))
                ]
            )
            with torch.no_grad():
                masked_logits = model.masked_forward(images[start:stop], stacked)
            hits += int((masked_logits.argmax(dim=-1) == original_pred[start:stop]).sum())
        curve.append((float(s), 100.0 * hits / n))
    return curve


# ----------------------------------------------------------------------
# class-relevant pathways and transfer
# ----------------------------------------------------------------------


@dataclass
class ClassPathway:
    """Aggregated binary pathway for one class with its provenance."""

    class_id: int
    mask: PathwayMask
    sample_sparsity: float  # fraction of class samples excluded from the build
    neuron_threshold: float  # firing-rate cutoff applied to the mean mask
    sample_ids: list[int]
    firing_rates: list[torch.Tensor]  # element-wise mean of the subset masks

    def recompute_mask(self) -> PathwayMask:
        return PathwayMask([(b > self.neuron_threshold).float() for b in self.firing_rates])


def build_class_pathway(
    masks: list[PathwayMask],
    class_id: int,
    sample_sparsity: float,
    neuron_threshold: float,
    seed: int = 0,
    sample_ids: list[int] | None = None,
) -> ClassPathway:
    """Aggregate instance masks of one class into a class pathway.

    A random (1 - sample_sparsity) fraction of the masks (at least one)
    is kept; the class pathway selects neurons whose mean firing rate
    over the subset strictly exceeds the neuron threshold.
    """
    if not (0.0 <= sample_sparsity < 1.0) or not (0.0 <= neuron_threshold < 1.0):
        raise ValueError("sample sparsity and neuron threshold must be in [0, 1)")
    if not masks:
        raise ValueError("no masks supplied")
    if sample_ids is None:
        sample_ids = list(range(len(masks)))
    rng = np.random.default_rng(seed)
    n_keep = max(1, int(round((1.0 - sample_sparsity) * len(masks))))
    chosen = sorted(rng.choice(len(masks), size=min(n_keep, len(masks)), replace=False).tolist())
    subset = [masks[i] for i in chosen]
    rates = [
        torch.stack([m.masks[l].float() for m in subset]).mean(dim=0)
        for l in range(len(subset[0]))
    ]
    pc = PathwayMask([(b > neuron_threshold).float() for b in rates])
    return ClassPathway(
        class_id=class_id,
        mask=pc,
        sample_sparsity=sample_sparsity,
        neuron_threshold=neuron_threshold,
        sample_ids=[sample_ids[i] for i in chosen],
        firing_rates=rates,
    )


def transfer_eval(
    model: TargetModel,
    images: torch.Tensor,
    labels: torch.Tensor,
    class_pathways: dict[int, ClassPathway],
    batch_size: int = 128,
) -> tuple[dict[str, float], list[PredictionRecord]]:
    """Apply each class pathway to all samples of its class and score them."""
    records: list[PredictionRecord] = []
    for cls, cp in sorted(class_pathways.items()):
        idx = (labels == cls).nonzero(as_tuple=True)[0]
        if idx.numel() == 0:
            continue
        records.extend(
            predict_records(model, images[idx], cp.mask, labels[idx], batch_size)
        )
    if not records:
        raise ValueError("no samples matched any class pathway")
    values = {
        "accuracy": accuracy(records),
        "mic": mic(records),
        "mdc": mdc(records),
        "icr": icr(records),
    }
    return values, records


# ----------------------------------------------------------------------
# embedding variance
# ----------------------------------------------------------------------


def class_variance_stats(
    embeddings: np.ndarray, labels: np.ndarray
) -> tuple[float, float]:
    """Within-class and between-class variance of a set of embeddings.

    Within: mean over classes of the mean squared distance to the class
    centroid. Between: mean squared distance of class centroids to the
    global centroid.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if embeddings.ndim != 2 or embeddings.shape[0] != labels.shape[0]:
        raise ValueError("embeddings must be (n, d) with one label per row")
    classes = np.unique(labels)
    centroids = np.stack([embeddings[labels == c].mean(axis=0) for c in classes])
    within = float(
        np.mean(
            [
                np.mean(np.sum((embeddings[labels == c] - centroids[i]) ** 2, axis=1))
                for i, c in enumerate(classes)
            ]
        )
    )
    global_centroid = centroids.mean(axis=0)
    between = float(np.mean(np.sum((centroids - global_centroid) ** 2, axis=1)))
    return within, between


def variance_delta(reference: float, candidate: float) -> float:
    """Percent change from reference to candidate."""
    if reference == 0.0:
        raise ValueError("reference variance is zero; delta undefined")
    return 100.0 * (candidate - reference) / reference


# ----------------------------------------------------------------------
# visual attribution on pathways
# ----------------------------------------------------------------------


def cam_on_pathway(
    model: TargetModel,
    x: torch.Tensor,
    mask: PathwayMask,
    class_index: int,
    output_size: tuple[int, int] | None = None,
) -> torch.Tensor:
    """Gradient-weighted class activation map at the last captured layer.

    Uses masked activations and masked gradients; channel weights are the
    spatial means of the gradients. Upsampled bilinearly to the input
    size (or `output_size`) and normalized into [0, 1].
    """
    mask.validate_binary()
    single = x.dim() == 3
    xb = x.unsqueeze(0) if single else x
    _, layer_grads = model.masked_gradients(xb, mask, class_index)
    with torch.no_grad():
        _, _, post = model.masked_forward_trace(xb, mask)
    grad_last = layer_grads[-1]
    act_last = post[-1]
    weights = grad_last.mean(dim=(-2, -1), keepdim=True)
    cam = torch.relu((weights * act_last).sum(dim=-3, keepdim=True))
    size = output_size if output_size is not None else model.input_size[1:]
    cam = F.interpolate(cam, size=size, mode="bilinear", align_corners=False)
    peak = cam.amax(dim=(-2, -1), keepdim=True)
    cam = torch.where(peak > 0, cam / peak.clamp_min(1e-12), torch.zeros_like(cam))
    cam = cam.squeeze(1)
    return cam.squeeze(0) if single else cam


def saliency_on_pathway(
    model: TargetModel, x: torch.Tensor, mask: PathwayMask, class_index: int
) -> torch.Tensor:
    """Input-gradient saliency through the masked forward, in [0, 1].

    Absolute input gradients, max over channels, normalized by the peak
    value (an all-zero gradient renders black).
    """
    single = x.dim() == 3
    xb = x.unsqueeze(0) if single else x
    input_grad, _ = model.masked_gradients(xb, mask, class_index)
    sal = input_grad.abs().amax(dim=-3)
    peak = sal.amax(dim=(-2, -1), keepdim=True)
    sal = torch.where(peak > 0, sal / peak.clamp_min(1e-12), torch.zeros_like(sal))
    return sal.squeeze(0) if single else sal


# ----------------------------------------------------------------------
# metric report
# ----------------------------------------------------------------------


@dataclass
class MetricReport:
    """Named metric values plus the configuration that produced them."""

    values: dict[str, float]
    config: dict = field(default_factory=dict)
    per_layer: dict[str, list[float]] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": REPORT_FORMAT_VERSION,
                "values": self.values,
                "config": self.config,
                "per_layer": self.per_layer,
            },
            indent=2,
            sort_keys=True,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        d = json.loads(Path(path).read_text())
        return cls(values=d["values"], config=d.get("config", {}), per_layer=d.get("per_layer", {}))
