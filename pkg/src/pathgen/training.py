"""Distillation training of the pathway generator against a frozen target.

Per batch: capture the target's activations and logits, generate a
relaxed mask, re-run the target with the mask multiplied in, and descend
on alpha * distillation loss + beta * squared-l2 sparsity penalty. Only
generator parameters are updated; the target is checksummed before and
after to prove it never moved.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .errors import ConfigError, NumericalError
from .generator import PathwayGenerator, save_generator
from .instrument import TargetModel
from .masks import PathwayMask

LOG_EPS = 1e-12


def kd_loss(masked_logits: torch.Tensor, original_logits: torch.Tensor) -> torch.Tensor:
    """Soft-target cross-entropy between masked and original predictions.

    Both logit sets are normalized into probability distributions; the
    loss is -sum_c p_orig(c) * log p_masked(c), averaged over any batch
    dimension. Log arguments are clamped at 1e-12.
    """
    if masked_logits.shape != original_logits.shape:
        raise ValueError(
            f"logit shapes differ: {tuple(masked_logits.shape)} vs {tuple(original_logits.shape)}"
        )
    p_orig = torch.softmax(original_logits, dim=-1)
    p_masked = torch.softmax(masked_logits, dim=-1)
    ce = -(p_orig * torch.log(p_masked.clamp_min(LOG_EPS))).sum(dim=-1)
    return ce.mean()


def sparsity_loss(mask: PathwayMask | list[torch.Tensor]) -> torch.Tensor:
    """Squared l2 norm of the (relaxed) mask.

    Sum of squared entries over all layers; for batched masks the
    per-sample sums are averaged so the weight of the penalty does not
    depend on batch size.
    """
    tensors = mask.masks if isinstance(mask, PathwayMask) else list(mask)
    batched = tensors[0].dim() == 4
    if batched:
        total = sum(m.pow(2).flatten(1).sum(dim=1) for m in tensors)
        return total.mean()
    return sum(m.pow(2).sum() for m in tensors)


def l0_count(mask: PathwayMask | list[torch.Tensor]) -> float:
    """Diagnostic count of nonzero entries (not differentiable)."""
    tensors = mask.masks if isinstance(mask, PathwayMask) else list(mask)
    return float(sum((m != 0).sum().item() for m in tensors))


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 0.005
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    checkpoint_every: int = 1  # epochs; 0 disables periodic checkpoints
    out_dir: str | None = None

    def validate(self) -> None:
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive: distillation must be active")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")


def total_loss(kd: torch.Tensor, sp: torch.Tensor, config: TrainConfig) -> torch.Tensor:
    return config.alpha * kd + config.beta * sp


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    history: list[dict] = field(default_factory=list)  # per-step loss records
    epoch_means: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    best_total: float = float("inf")
    best_epoch: int = -1


def train(
    model: TargetModel,
    generator: PathwayGenerator,
    data: tuple[torch.Tensor, torch.Tensor],
    config: TrainConfig,
) -> TrainState:
    """Optimize the generator; returns the training trajectory.

    ``data`` is (images, labels); labels are carried for bookkeeping only,
    the objective never sees them. A fixed seed makes the trajectory
    reproducible.
    """
    config.validate()
    images, _labels = data
    if images.dim() != 4:
        raise ConfigError("training images must be a (n, c, h, w) tensor")
    n = images.shape[0]
    if n == 0:
        raise ConfigError("training set is empty")

    checksum_before = model.parameter_checksum()
    torch.manual_seed(config.seed)
    shuffle_gen = torch.Generator().manual_seed(config.seed)
    opt = torch.optim.Adam(generator.parameters(), lr=config.learning_rate)
    state = TrainState()

    out_dir = Path(config.out_dir) if config.out_dir else None
    loss_writer = None
    loss_file = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        loss_file = open(out_dir / "losses.csv", "w", newline="")
        loss_writer = csv.writer(loss_file)
        loss_writer.writerow(["epoch", "step", "kd", "sparsity", "total"])

    try:
        for epoch in range(config.epochs):
            generator.train()
            perm = torch.randperm(n, generator=shuffle_gen)
            epoch_rows = []
            for start in range(0, n, config.batch_size):
                idx = perm[start : start + config.batch_size]
                x = images[idx]
                batch_no = start // config.batch_size
                logits_orig, acts = model.capture_activations(x)
                try:
                    mask, _scores = generator(acts.detach(), mode="train")
                except ValueError as exc:
                    if "non-finite" in str(exc):
                        raise NumericalError(
                            f"non-finite generator output at epoch {epoch} batch {batch_no}: {exc}"
                        ) from exc
                    raise
                logits_masked = model.masked_forward(x, mask)
                kd = kd_loss(logits_masked, logits_orig)
                sp = sparsity_loss(mask)
                loss = total_loss(kd, sp, config)
                if not torch.isfinite(loss):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch} batch {batch_no}: "
                        f"kd={kd.item()!r} sparsity={sp.item()!r}"
                    )
                opt.zero_grad()
                loss.backward()
                opt.step()
                row = {
                    "epoch": epoch,
                    "step": state.step,
                    "kd": kd.item(),
                    "sparsity": sp.item(),
                    "total": loss.item(),
                }
                state.history.append(row)
                epoch_rows.append(row)
                if loss_writer is not None:
                    loss_writer.writerow(
                        [epoch, state.step, row["kd"], row["sparsity"], row["total"]]
                    )
                state.step += 1
            state.epoch = epoch + 1
            means = {
                k: sum(r[k] for r in epoch_rows) / len(epoch_rows)
                for k in ("kd", "sparsity", "total")
            }
            means["epoch"] = epoch
            state.epoch_means.append(means)
            if means["total"] < state.best_total:
                state.best_total = means["total"]
                state.best_epoch = epoch
            if (
                out_dir is not None
                and config.checkpoint_every
                and (epoch + 1) % config.checkpoint_every == 0
            ):
                ckpt = out_dir / f"generator_epoch{epoch + 1:03d}.pt"
                save_generator(ckpt, generator, epoch=epoch + 1)
                state.checkpoints.append(str(ckpt))
    finally:
        if loss_file is not None:
            loss_file.close()

    generator.eval()
    if model.parameter_checksum() != checksum_before:
        raise NumericalError("target model parameters drifted during training")
    return state
