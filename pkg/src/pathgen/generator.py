"""Generative pathway model: embed, score, decode, binarize.

The model maps a set of post-ReLU activations to a binary pathway mask in
four stages:

1. Per-layer recursive embedders bring every layer's feature map to one
   shared resolution by applying a single small convolution filter
   repeatedly, with a separate normalization layer per iteration.
2. A single shared scorer (a small fully connected stack) consumes the
   concatenated flattened patterns of all layers at once and emits one
   real importance score per pattern element, so deep-layer class
   semantics can inform shallow-layer scores.
3. Per-layer recursive decoders mirror the embedders with transposed
   convolutions, mapping scores back to each layer's native resolution.
4. Distance-aware quantization normalizes decoded scores into the level
   range and assigns each to its nearest level: a temperature-controlled
   soft assignment during training (differentiable), hard nearest-level
   assignment at evaluation time.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError
from .instrument import TargetModel
from .masks import ActivationSet, PathwayMask, Shape3, check_shapes_match


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------


def valid_filter_sizes(extent: int, shared: int, limit: int = 12) -> list[int]:
    """Filter sizes f >= 2 whose recursion reaches the shared extent.

    Each no-padding iteration shrinks a spatial extent by (f - 1), so f is
    valid when (extent - shared) is divisible by (f - 1).
    """
    span = extent - shared
    if span == 0:
        return [3]  # padded single-iteration mode, size-preserving
    return [f for f in range(2, limit + 1) if span % (f - 1) == 0]


def auto_filter_size(shape: Shape3, shared_resolution: tuple[int, int]) -> tuple[int, int]:
    """Smallest valid filter for a layer; (3, 3) for layers already at shared size."""
    _, h, w = shape
    hp, wp = shared_resolution
    if h < hp or w < wp:
        raise ConfigError(
            f"layer resolution {(h, w)} is below the shared resolution {(hp, wp)}"
        )
    if h == hp and w == wp:
        return (3, 3)
    if h == hp or w == wp:
        raise ConfigError(
            f"layer resolution {(h, w)} matches the shared resolution {(hp, wp)} "
            "on one axis only; choose a different shared resolution"
        )
    for fh in range(2, h - hp + 2):
        if (h - hp) % (fh - 1):
            continue
        iters = (h - hp) // (fh - 1)
        if (w - wp) % iters:
            continue
        fw = (w - wp) // iters + 1
        if fw >= 2:
            return (fh, fw)
    raise ConfigError(f"no valid filter size for layer {(h, w)} at shared {(hp, wp)}")


@dataclass
class GeneratorConfig:
    """Hyperparameters of the pathway generator.

    ``shared_resolution`` defaults to the smallest feature-map resolution
    of the target model; ``filter_sizes`` default to the smallest size
    satisfying the divisibility constraint per layer.
    """

    layer_shapes: list[Shape3]
    shared_resolution: tuple[int, int]
    filter_sizes: list[tuple[int, int]]
    scorer_depth: int = 2
    quant_bits: int = 1
    quant_low: float = 0.0
    quant_high: float = 1.0
    tau: float = 0.2

    @classmethod
    def for_layers(
        cls,
        layer_shapes: list[Shape3],
        shared_resolution: tuple[int, int] | None = None,
        filter_sizes: list[tuple[int, int]] | None = None,
        **kwargs,
    ) -> "GeneratorConfig":
        layer_shapes = [tuple(s) for s in layer_shapes]
        if shared_resolution is None:
            shared_resolution = min((h, w) for _, h, w in layer_shapes)
        if filter_sizes is None:
            filter_sizes = [auto_filter_size(s, shared_resolution) for s in layer_shapes]
        cfg = cls(
            layer_shapes=layer_shapes,
            shared_resolution=tuple(shared_resolution),
            filter_sizes=[tuple(f) for f in filter_sizes],
            **kwargs,
        )
        cfg.validate()
        return cfg

    @classmethod
    def for_model(cls, model: TargetModel, **kwargs) -> "GeneratorConfig":
        return cls.for_layers(model.layer_specs, **kwargs)

    def validate(self) -> None:
        if self.quant_low >= self.quant_high:
            raise ConfigError(
                f"quantization bounds require low < high, got {self.quant_low} >= {self.quant_high}"
            )
        if self.quant_bits < 1:
            raise ConfigError("quant_bits must be >= 1")
        if self.tau <= 0:
            raise ConfigError("soft-assignment temperature must be positive")
        if self.scorer_depth < 1:
            raise ConfigError("scorer depth must be >= 1")
        if len(self.filter_sizes) != len(self.layer_shapes):
            raise ConfigError("one filter size per layer is required")
        for shape, fs in zip(self.layer_shapes, self.filter_sizes):
            iteration_count(shape, fs, self.shared_resolution)

    def iteration_counts(self) -> list[int]:
        return [
            iteration_count(s, f, self.shared_resolution)
            for s, f in zip(self.layer_shapes, self.filter_sizes)
        ]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(
            layer_shapes=[tuple(s) for s in d["layer_shapes"]],
            shared_resolution=tuple(d["shared_resolution"]),
            filter_sizes=[tuple(f) for f in d["filter_sizes"]],
            scorer_depth=d["scorer_depth"],
            quant_bits=d["quant_bits"],
            quant_low=d["quant_low"],
            quant_high=d["quant_high"],
            tau=d["tau"],
        )


def iteration_count(
    layer_shape: Shape3,
    filter_size: tuple[int, int],
    shared_resolution: tuple[int, int],
) -> int:
    """Number of recursive iterations for one layer.

    Equals (h - h') / (f_h - 1); layers already at the shared resolution
    run a single padded iteration.
    """
    _, h, w = layer_shape
    fh, fw = filter_size
    hp, wp = shared_resolution
    if h == hp and w == wp:
        if fh % 2 == 0 or fw % 2 == 0:
            raise ConfigError(
                f"padded mode needs odd filter sizes, got {(fh, fw)} for layer {(h, w)}"
            )
        return 1
    if fh < 2 or fw < 2:
        raise ConfigError(f"filter sizes must be >= 2, got {(fh, fw)}")
    if (h - hp) % (fh - 1) or (w - wp) % (fw - 1):
        raise ConfigError(
            f"filter {(fh, fw)} does not divide layer {(h, w)} down to {(hp, wp)}; "
            f"valid heights: {valid_filter_sizes(h, hp)}, widths: {valid_filter_sizes(w, wp)}"
        )
    lh = (h - hp) // (fh - 1)
    lw = (w - wp) // (fw - 1)
    if lh != lw:
        raise ConfigError(
            f"filter {(fh, fw)} needs {lh} height iterations but {lw} width iterations "
            f"for layer {(h, w)}"
        )
    return lh


def rfe_iteration_count(layer_shape: Shape3, config: GeneratorConfig) -> int:
    index = config.layer_shapes.index(tuple(layer_shape))
    return iteration_count(layer_shape, config.filter_sizes[index], config.shared_resolution)


# ----------------------------------------------------------------------
# modules
# ----------------------------------------------------------------------


class RecursiveEmbedder(nn.Module):
    """One shared 2-d filter applied depthwise for a fixed iteration count.

    The filter is channel-agnostic: channels are folded into the batch so
    a single (fh, fw) kernel serves every channel. A separate batch
    normalization layer per iteration keeps the recursion stable.
    """

    def __init__(
        self,
        channels: int,
        filter_size: tuple[int, int],
        iterations: int,
        padded: bool,
        transposed: bool = False,
    ):
        super().__init__()
        fh, fw = filter_size
        self.filter_size = (fh, fw)
        self.iterations = iterations
        self.padded = padded
        self.transposed = transposed
        self.padding = ((fh - 1) // 2, (fw - 1) // 2) if padded else (0, 0)
        self.weight = nn.Parameter(torch.empty(1, 1, fh, fw))
        nn.init.kaiming_uniform_(self.weight, a=5**0.5)
        self.norms = nn.ModuleList(nn.BatchNorm2d(channels) for _ in range(iterations))

    def _conv(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        flat = x.reshape(b * c, 1, h, w)
        if self.transposed:
            out = F.conv_transpose2d(flat, self.weight, padding=self.padding)
        else:
            out = F.conv2d(flat, self.weight, padding=self.padding)
        return out.reshape(b, c, out.shape[-2], out.shape[-1])

    def forward(self, x: torch.Tensor, final_activation: bool = True) -> torch.Tensor:
        for i, norm in enumerate(self.norms):
            x = norm(self._conv(x))
            if final_activation or i < self.iterations - 1:
                x = F.relu(x)
        return x


class SharedScorer(nn.Module):
    """Fully connected stack scoring all layers' patterns jointly.

    Consumes the concatenation of every layer's flattened pattern and
    emits one score per element, reshaped back per layer. One set of
    parameters serves all layers.
    """

    def __init__(self, layer_channels: list[int], shared_resolution: tuple[int, int], depth: int):
        super().__init__()
        hp, wp = shared_resolution
        self.pattern_shapes = [(c, hp, wp) for c in layer_channels]
        self.sizes = [c * hp * wp for c in layer_channels]
        width = sum(self.sizes)
        layers: list[nn.Module] = []
        for d in range(depth):
            layers.append(nn.Linear(width, width))
            if d < depth - 1:
                layers.append(nn.ReLU())
        self.net = nn.Sequential(*layers)

    def forward(self, patterns: list[torch.Tensor]) -> list[torch.Tensor]:
        expected = [tuple(p.shape[1:]) for p in patterns]
        if expected != self.pattern_shapes:
            raise ConfigError(
                f"pattern shapes {expected} do not match scorer layout {self.pattern_shapes}"
            )
        flat = torch.cat([p.flatten(1) for p in patterns], dim=1)
        out = self.net(flat)
        scores = []
        offset = 0
        for size, shape in zip(self.sizes, self.pattern_shapes):
            scores.append(out[:, offset : offset + size].reshape(-1, *shape))
            offset += size
        return scores


# ----------------------------------------------------------------------
# quantization
# ----------------------------------------------------------------------


def normalize_scores(
    scores: torch.Tensor, bits: int, low: float, high: float
) -> torch.Tensor:
    """Clamp into [low, high] and rescale onto the level range [0, 2^b - 1]."""
    clamped = torch.clamp(scores, min=low, max=high)
    return (2**bits - 1) * (clamped - low) / (high - low)


def hard_assignment(normalized: torch.Tensor, bits: int) -> torch.Tensor:
    """Nearest quantization level; values at a midpoint round up."""
    return torch.clamp(torch.floor(normalized + 0.5), 0.0, float(2**bits - 1))


def soft_assignment(normalized: torch.Tensor, bits: int, tau: float) -> torch.Tensor:
    """Distance-weighted expectation over levels; sharpens to hard as tau -> 0."""
    levels = torch.arange(2**bits, dtype=normalized.dtype, device=normalized.device)
    dist = (normalized.unsqueeze(-1) - levels).abs()
    weights = torch.softmax(-dist / tau, dim=-1)
    return (weights * levels).sum(dim=-1)


def binarize_scores(
    decoded: list[torch.Tensor], config: GeneratorConfig, mode: str = "eval"
) -> PathwayMask:
    """Quantize decoded scores into a pathway mask.

    Eval mode produces exact level values (for one bit: exactly 0.0 or
    1.0). Train mode produces a relaxed, differentiable assignment.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"quantization mode must be 'train' or 'eval', got {mode!r}")
    config.validate()
    masks = []
    denom = float(2**config.quant_bits - 1)
    for d in decoded:
        if not torch.isfinite(d).all():
            raise ValueError("non-finite decoded scores cannot be quantized")
        norm = normalize_scores(d, config.quant_bits, config.quant_low, config.quant_high)
        if mode == "eval":
            assigned = hard_assignment(norm, config.quant_bits)
        else:
            assigned = soft_assignment(norm, config.quant_bits, config.tau)
        masks.append(assigned / denom)
    return PathwayMask(masks)


# ----------------------------------------------------------------------
# the generator
# ----------------------------------------------------------------------


@dataclass
class ImportanceScores:
    """Intermediate real-valued scores kept for analysis.

    ``shared`` holds per-layer scores at the shared resolution; ``decoded``
    holds scores decoded back to each layer's native resolution.
    """

    shared: list[torch.Tensor]
    decoded: list[torch.Tensor]


class PathwayGenerator(nn.Module):
    """Maps an activation set to a pathway mask plus importance scores."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        config.validate()
        self.config = config
        iters = config.iteration_counts()
        hp, wp = config.shared_resolution
        self.embedders = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for shape, fs, l in zip(config.layer_shapes, config.filter_sizes, iters):
            c, h, w = shape
            padded = (h, w) == (hp, wp)
            self.embedders.append(RecursiveEmbedder(c, fs, l, padded))
            self.decoders.append(RecursiveEmbedder(c, fs, l, padded, transposed=True))
        self.scorer = SharedScorer([c for c, _, _ in config.layer_shapes], (hp, wp), config.scorer_depth)
        # Center decoded scores in the quantization window at init so
        # training starts with live gradients on most elements.
        mid = 0.5 * (config.quant_low + config.quant_high)
        for dec in self.decoders:
            nn.init.constant_(dec.norms[-1].bias, mid)

    def embed(self, acts: ActivationSet | list[torch.Tensor]) -> list[torch.Tensor]:
        tensors = acts.tensors if isinstance(acts, ActivationSet) else list(acts)
        check_shapes_match([tuple(t.shape[-3:]) for t in tensors], self.config.layer_shapes, "activation")
        hp, wp = self.config.shared_resolution
        patterns = []
        for x, emb in zip(tensors, self.embedders):
            out = emb(x)
            if tuple(out.shape[-2:]) != (hp, wp):
                raise AssertionError(
                    f"embedder output drifted to {tuple(out.shape[-2:])}, expected {(hp, wp)}"
                )
            patterns.append(out)
        return patterns

    def score(self, patterns: list[torch.Tensor]) -> list[torch.Tensor]:
        return self.scorer(patterns)

    def decode(self, shared_scores: list[torch.Tensor]) -> list[torch.Tensor]:
        decoded = []
        for s, dec, shape in zip(shared_scores, self.decoders, self.config.layer_shapes):
            out = dec(s, final_activation=False)
            if tuple(out.shape[-3:]) != shape:
                raise AssertionError(
                    f"decoder output {tuple(out.shape[-3:])} does not match layer shape {shape}"
                )
            decoded.append(out)
        return decoded

    def forward(
        self, acts: ActivationSet | list[torch.Tensor], mode: str = "eval"
    ) -> tuple[PathwayMask, ImportanceScores]:
        tensors = acts.tensors if isinstance(acts, ActivationSet) else list(acts)
        squeezed = tensors[0].dim() == 3
        if squeezed:
            tensors = [t.unsqueeze(0) for t in tensors]
        patterns = self.embed(tensors)
        shared = self.score(patterns)
        decoded = self.decode(shared)
        mask = binarize_scores(decoded, self.config, mode)
        if squeezed:
            mask = PathwayMask([m.squeeze(0) for m in mask.masks])
            shared = [s.squeeze(0) for s in shared]
            decoded = [d.squeeze(0) for d in decoded]
        return mask, ImportanceScores(shared=shared, decoded=decoded)


def generate_pathway(
    model: TargetModel,
    x: torch.Tensor,
    generator: PathwayGenerator,
    mode: str = "eval",
) -> tuple[PathwayMask, ImportanceScores]:
    """Capture activations and run the generator over them.

    In eval mode the returned mask is finalized (binary) and computation
    runs without gradients; train mode returns the relaxed mask with the
    autograd graph attached.
    """
    check_shapes_match(generator.config.layer_shapes, model.layer_specs, "generator config")
    _, acts = model.capture_activations(x)
    if mode == "eval":
        was_training = generator.training
        generator.eval()
        try:
            with torch.no_grad():
                result = generator(acts, mode="eval")
        finally:
            generator.train(was_training)
        return result
    return generator(acts, mode="train")


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------

GENERATOR_FORMAT_VERSION = 1


def save_generator(path, generator: PathwayGenerator, epoch: int = 0) -> None:
    import pathlib

    payload = {
        "format_version": GENERATOR_FORMAT_VERSION,
        "config": generator.config.to_dict(),
        "state_dict": generator.state_dict(),
        "epoch": epoch,
    }
    p = pathlib.Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, p)


def load_generator(path) -> tuple[PathwayGenerator, int]:
    import pathlib

    from .errors import DataFormatError

    p = pathlib.Path(path)
    if not p.exists():
        raise ConfigError(f"generator checkpoint not found: {p}")
    try:
        payload = torch.load(p, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise DataFormatError(f"cannot read generator checkpoint {p}: {exc}") from exc
    config = GeneratorConfig.from_dict(payload["config"])
    gen = PathwayGenerator(config)
    gen.load_state_dict(payload["state_dict"])
    gen.eval()
    return gen, int(payload.get("epoch", 0))
