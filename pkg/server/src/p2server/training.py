"""Pretraining and LoRA fine-tuning loops."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .corpus import (
    PatchDataset,
    make_finetune_patches,
    make_pretrain_patches,
)
from .lora import adapter_parameters, inject_adapters, save_adapter
from .model import ModelConfig, TinyCausalLM, save_checkpoint
from .tokenizer import WordDigitTokenizer


def masked_cross_entropy(logits: torch.Tensor, batch) -> torch.Tensor:
    """Next-token loss over positions whose target is a pixel symbol."""
    predictions = logits[:, :-1, :]
    targets = batch.ids[:, 1:]
    mask = batch.loss_mask
    if not mask.any():
        return logits.sum() * 0.0
    return F.cross_entropy(
        predictions[mask], targets[mask], reduction="mean"
    )


def lr_at(step: int, base: float, warmup: int, total: int) -> float:
    if step < warmup:
        return base * (step + 1) / warmup
    progress = (step - warmup) / max(total - warmup, 1)
    return base * 0.5 * (1.0 + math.cos(math.pi * progress))


def evaluate(model: TinyCausalLM, dataset: PatchDataset, batch_size: int = 8) -> float:
    model.eval()
    losses, weights = [], []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            batch = dataset.batch(list(range(start, min(start + batch_size, len(dataset)))))
            logits, _ = model(batch.ids)
            losses.append(float(masked_cross_entropy(logits, batch)))
            weights.append(int(batch.loss_mask.sum()))
    return float(np.average(losses, weights=weights))


def _train(
    model: TinyCausalLM,
    params,
    dataset: PatchDataset,
    steps: int,
    batch_size: int,
    base_lr: float,
    warmup: int,
    seed: int,
) -> list[float]:
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(params, lr=base_lr)
    curve = []
    model.train()
    for step in range(steps):
        lr = lr_at(step, base_lr, warmup, steps)
        for group in opt.param_groups:
            group["lr"] = lr
        indices = rng.integers(0, len(dataset), size=batch_size).tolist()
        batch = dataset.batch(indices)
        logits, _ = model(batch.ids)
        loss = masked_cross_entropy(logits, batch)
        if not torch.isfinite(loss):
            raise RuntimeError(f"training diverged at step {step}: loss {loss.item()!r}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        curve.append(float(loss.detach()))
    model.eval()
    return curve


def pretrain(
    out_path: str | Path,
    steps: int = 300,
    batch_size: int = 8,
    lr: float = 3e-3,
    n_patches: int = 800,
    patch_size: int = 8,
    seed: int = 0,
    d_model: int = 128,
    n_layer: int = 2,
) -> TinyCausalLM:
    """Short pretraining pass over a broad synthetic mix; saves a checkpoint."""
    torch.manual_seed(seed)
    tokenizer = WordDigitTokenizer()
    cfg = ModelConfig(vocab_size=tokenizer.vocab_size, d_model=d_model, n_layer=n_layer)
    model = TinyCausalLM(cfg)
    rng = np.random.default_rng(seed)
    dataset = PatchDataset(tokenizer, make_pretrain_patches(rng, n_patches, patch_size))
    curve = _train(
        model, model.parameters(), dataset, steps, batch_size, lr, warmup=30, seed=seed
    )
    save_checkpoint(out_path, model, meta={"loss_curve": curve[-10:], "steps": steps})
    return model


@dataclass
class FineTuneConfig:
    rank: int = 64
    alpha: int | None = None  # defaults to 2 * rank
    target_projections: tuple[str, ...] = ("q", "k", "v", "o")
    steps: int = 500
    batch_size: int = 4
    lr: float = 1e-4
    warmup: int = 1000
    corpus_patches: int = 1000
    heldout_patches: int = 64
    patch_size: int = 8
    seed: int = 1

    def resolved_alpha(self) -> int:
        return self.alpha if self.alpha is not None else 2 * self.rank


@dataclass
class FineTuneResult:
    adapter_path: Path
    heldout_ce_start: float
    heldout_ce_final: float
    loss_curve: list[float] = field(repr=False, default_factory=list)


def finetune(
    model: TinyCausalLM, config: FineTuneConfig, adapter_out: str | Path
) -> FineTuneResult:
    """LoRA fine-tune on smooth crops; held-out CE measured before and after."""
    torch.manual_seed(config.seed)
    tokenizer = WordDigitTokenizer()
    rng = np.random.default_rng(config.seed)
    train_set = PatchDataset(
        tokenizer, make_finetune_patches(rng, config.corpus_patches, config.patch_size)
    )
    heldout = PatchDataset(
        tokenizer, make_finetune_patches(rng, config.heldout_patches, config.patch_size)
    )
    alpha = config.resolved_alpha()
    wrapped = inject_adapters(model, config.rank, alpha, config.target_projections)
    ce_start = evaluate(model, heldout)
    curve = []
    if config.steps:
        curve = _train(
            model,
            list(adapter_parameters(wrapped)),
            train_set,
            config.steps,
            config.batch_size,
            config.lr,
            config.warmup,
            config.seed,
        )
    ce_final = evaluate(model, heldout)
    adapter_out = Path(adapter_out)
    save_adapter(adapter_out, model, config.rank, alpha)
    return FineTuneResult(
        adapter_path=adapter_out,
        heldout_ce_start=ce_start,
        heldout_ce_final=ce_final,
        loss_curve=curve,
    )
