"""Synthetic patch corpora and chat-context assembly for training.

Images are cropped into non-overlapped patches, flattened channel-jointly,
and prefixed with the tokenized task prompt. The pretraining mix is broad
(flats, gradients, noise, two-value); the fine-tuning distribution is
piecewise-smooth, photograph-like content.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .tokenizer import WordDigitTokenizer

JOINT_PROMPT = (
    "Every three values denote an RGB pixel of a flattened image. "
    "Predict the next RGB pixel based on the previous pixels."
)


def build_chat_context(
    prompt_ids: list[int], symbol_token_ids: list[int], bos_id: int
) -> list[int]:
    """BOS, then prompt tokens, then symbol tokens, no separators."""
    return [bos_id, *prompt_ids, *symbol_token_ids]


def smooth_crop(rng: np.random.Generator, size: int = 8) -> np.ndarray:
    coarse = rng.normal(0.0, 1.0, size=(4, 4))
    y = np.linspace(0, 2.999, size)
    xi = y.astype(int)
    fx = y - xi
    up = (
        coarse[np.ix_(xi, xi)] * np.outer(1 - fx, 1 - fx)
        + coarse[np.ix_(xi + 1, xi)] * np.outer(fx, 1 - fx)
        + coarse[np.ix_(xi, xi + 1)] * np.outer(1 - fx, fx)
        + coarse[np.ix_(xi + 1, xi + 1)] * np.outer(fx, fx)
    )
    levels = np.floor((up - up.min()) / (np.ptp(up) + 1e-9) * 5)
    img = np.empty((size, size, 3))
    offsets = rng.integers(-10, 11, size=3)
    for c in range(3):
        img[:, :, c] = 30 + levels * 40 + int(offsets[c])
    return np.clip(img, 0, 255).astype(np.uint8)


def pretrain_patch(rng: np.random.Generator, size: int = 8) -> np.ndarray:
    kind = rng.integers(0, 4)
    if kind == 0:  # flat color
        color = rng.integers(0, 256, size=3)
        return np.tile(color.astype(np.uint8), (size, size, 1))
    if kind == 1:  # horizontal gradient
        ramp = np.linspace(0, float(rng.integers(30, 200)), size)
        base = rng.integers(0, 56, size=3)
        img = base[None, None, :] + ramp[None, :, None]
        return np.clip(img, 0, 255).astype(np.uint8)
    if kind == 2:  # two-value texture
        vals = rng.integers(0, 256, size=2)
        pick = rng.integers(0, 2, size=(size, size, 1))
        flat = np.where(pick == 0, vals[0], vals[1]).astype(np.uint8)
        return np.repeat(flat, 3, axis=2)
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)


def flatten_joint(patch: np.ndarray) -> list[int]:
    return patch.reshape(-1).tolist()


@dataclass
class TokenBatch:
    ids: torch.Tensor          # (B, T) padded
    loss_mask: torch.Tensor    # (B, T-1) True where the target is a symbol


class PatchDataset:
    """Tokenized patch sequences with prompt positions masked from the loss."""

    def __init__(
        self,
        tokenizer: WordDigitTokenizer,
        patches: list[np.ndarray],
        prompt_text: str = JOINT_PROMPT,
    ) -> None:
        self.tokenizer = tokenizer
        prompt_ids = tokenizer.tokenize(prompt_text)
        self.sequences = []
        for patch in patches:
            symbols = flatten_joint(patch)
            symbol_ids = [tokenizer.symbol_id(s) for s in symbols]
            self.sequences.append(
                build_chat_context(prompt_ids, symbol_ids, tokenizer.bos_id)
            )
        self.symbol_id_set = set(tokenizer.digital_ids)

    def __len__(self) -> int:
        return len(self.sequences)

    def batch(self, indices: list[int]) -> TokenBatch:
        seqs = [self.sequences[i] for i in indices]
        width = max(len(s) for s in seqs)
        pad = self.tokenizer.pad_id
        ids = torch.full((len(seqs), width), pad, dtype=torch.long)
        for r, s in enumerate(seqs):
            ids[r, : len(s)] = torch.tensor(s, dtype=torch.long)
        targets = ids[:, 1:]
        mask = torch.zeros_like(targets, dtype=torch.bool)
        for tid in self.symbol_id_set:
            mask |= targets == tid
        return TokenBatch(ids=ids, loss_mask=mask)


def make_pretrain_patches(rng: np.random.Generator, count: int, size: int = 8):
    return [pretrain_patch(rng, size) for _ in range(count)]


def make_finetune_patches(rng: np.random.Generator, count: int, size: int = 8):
    return [smooth_crop(rng, size) for _ in range(count)]
