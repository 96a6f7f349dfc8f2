"""Low-rank adapters on the attention projections.

A wrapped projection computes W x + (alpha / rank) * B(A(x)) with the base W
frozen. B starts at zero, so a freshly injected (or zero-step-trained)
adapter leaves the model's behavior bit-identical.
"""

from __future__ import annotations

from pathlib import Path

import torch
import torch.nn as nn

from .model import TinyCausalLM

TARGETS = ("q", "k", "v", "o")


class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: int) -> None:
        super().__init__()
        self.base = base
        self.rank = rank
        self.alpha = alpha
        self.scale = alpha / rank
        self.down = nn.Linear(base.in_features, rank, bias=False)
        self.up = nn.Linear(rank, base.out_features, bias=False)
        nn.init.normal_(self.down.weight, std=0.02)
        nn.init.zeros_(self.up.weight)
        for p in self.base.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scale * self.up(self.down(x))


def inject_adapters(
    model: TinyCausalLM, rank: int, alpha: int, targets: tuple[str, ...] = TARGETS
) -> list[LoRALinear]:
    """Wrap the chosen attention projections; freezes everything else."""
    for p in model.parameters():
        p.requires_grad_(False)
    wrapped = []
    for block in model.blocks:
        for name in targets:
            base = getattr(block.attn, name)
            if isinstance(base, LoRALinear):
                raise ValueError("adapters already injected")
            lora = LoRALinear(base, rank, alpha)
            setattr(block.attn, name, lora)
            wrapped.append(lora)
    return wrapped


def adapter_parameters(wrapped: list[LoRALinear]):
    for lora in wrapped:
        yield from lora.down.parameters()
        yield from lora.up.parameters()


def save_adapter(path: str | Path, model: TinyCausalLM, rank: int, alpha: int) -> None:
    state = {}
    for li, block in enumerate(model.blocks):
        for name in TARGETS:
            mod = getattr(block.attn, name)
            if isinstance(mod, LoRALinear):
                state[f"blocks.{li}.attn.{name}.down"] = mod.down.weight.detach().clone()
                state[f"blocks.{li}.attn.{name}.up"] = mod.up.weight.detach().clone()
    torch.save({"rank": rank, "alpha": alpha, "state": state}, path)


def merge_adapter(model: TinyCausalLM, adapter_path: str | Path) -> None:
    """Fold B @ A * scale into the frozen weights for plain fast inference."""
    payload = torch.load(adapter_path, map_location="cpu", weights_only=True)
    scale = payload["alpha"] / payload["rank"]
    state = payload["state"]
    with torch.no_grad():
        for li, block in enumerate(model.blocks):
            for name in TARGETS:
                down = state.get(f"blocks.{li}.attn.{name}.down")
                if down is None:
                    continue
                up = state[f"blocks.{li}.attn.{name}.up"]
                base = getattr(block.attn, name)
                base.weight.add_(scale * (up @ down))
