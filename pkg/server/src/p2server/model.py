"""Small decoder-only transformer with incremental (KV-cached) inference."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

KVCache = list[tuple[torch.Tensor, torch.Tensor]]


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    n_layer: int = 2
    n_head: int = 4
    max_context: int = 1024
    mlp_ratio: int = 4


class Attention(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.n_head = cfg.n_head
        self.head_dim = cfg.d_model // cfg.n_head
        self.q = nn.Linear(cfg.d_model, cfg.d_model)
        self.k = nn.Linear(cfg.d_model, cfg.d_model)
        self.v = nn.Linear(cfg.d_model, cfg.d_model)
        self.o = nn.Linear(cfg.d_model, cfg.d_model)

    def forward(
        self, x: torch.Tensor, past: tuple[torch.Tensor, torch.Tensor] | None
    ) -> tuple[torch.Tensor, tuple[torch.Tensor, torch.Tensor]]:
        bsz, t, _ = x.shape
        q = self.q(x).view(bsz, t, self.n_head, self.head_dim).transpose(1, 2)
        k = self.k(x).view(bsz, t, self.n_head, self.head_dim).transpose(1, 2)
        v = self.v(x).view(bsz, t, self.n_head, self.head_dim).transpose(1, 2)
        if past is not None:
            k = torch.cat([past[0], k], dim=2)
            v = torch.cat([past[1], v], dim=2)
        total = k.shape[2]
        att = (q @ k.transpose(-1, -2)) / self.head_dim**0.5
        if t > 1:
            # Query i may see keys up to (total - t + i).
            offset = total - t
            mask = torch.arange(total) > (offset + torch.arange(t)[:, None])
            att = att.masked_fill(mask, float("-inf"))
        att = att.softmax(dim=-1)
        out = (att @ v).transpose(1, 2).reshape(bsz, t, -1)
        return self.o(out), (k, v)


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = Attention(cfg)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        hidden = cfg.d_model * cfg.mlp_ratio
        self.mlp = nn.Sequential(
            nn.Linear(cfg.d_model, hidden), nn.GELU(), nn.Linear(hidden, cfg.d_model)
        )

    def forward(self, x, past):
        attn_out, kv = self.attn(self.ln1(x), past)
        x = x + attn_out
        return x + self.mlp(self.ln2(x)), kv


class TinyCausalLM(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_context, cfg.d_model)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layer))
        self.ln_f = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, cfg.vocab_size, bias=False)

    def forward(
        self,
        ids: torch.Tensor,
        past: KVCache | None = None,
        start_pos: int = 0,
    ) -> tuple[torch.Tensor, KVCache]:
        bsz, t = ids.shape
        if start_pos + t > self.cfg.max_context:
            raise ValueError(
                f"context {start_pos + t} exceeds model window {self.cfg.max_context}"
            )
        positions = torch.arange(start_pos, start_pos + t, device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(positions)
        new_past: KVCache = []
        for i, block in enumerate(self.blocks):
            x, kv = block(x, past[i] if past is not None else None)
            new_past.append(kv)
        return self.head(self.ln_f(x)), new_past

    def logits_for_next(self, ids: torch.Tensor, past: KVCache | None, start_pos: int):
        logits, new_past = self.forward(ids, past, start_pos)
        return logits[:, -1, :], new_past


def save_checkpoint(path: str | Path, model: TinyCausalLM, meta: dict | None = None) -> None:
    torch.save(
        {"config": asdict(model.cfg), "state": model.state_dict(), "meta": meta or {}},
        path,
    )


def load_checkpoint(path: str | Path) -> TinyCausalLM:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = TinyCausalLM(ModelConfig(**payload["config"]))
    model.load_state_dict(payload["state"])
    model.eval()
    return model


def model_fingerprint(model: TinyCausalLM, extra: str = "") -> int:
    """64-bit digest of the effective weights (adapter merges included)."""
    h = hashlib.blake2b(digest_size=8)
    for name, tensor in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    h.update(extra.encode())
    return int.from_bytes(h.digest(), "little")
