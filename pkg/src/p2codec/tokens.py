"""Symbol <-> token-ID bridging.

Coding symbols are never pushed through a text tokenizer: a 256-entry
digital token map is probed once per vocabulary (each decimal value "0"
through "255" must tokenize to exactly one ID) and symbols are then
converted by direct lookup. This keeps the symbol layer bijective even when
the surrounding prompt text tokenizes arbitrarily.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CorruptStreamError, TokenizerUnsuitableError
from .serialization import OrderingMode, SymbolSequence

__all__ = [
    "DigitalTokenMap",
    "PromptConfig",
    "TokenizedContext",
    "build_digital_token_map",
    "identity_token_map",
    "tokenize_context",
    "detokenize_symbols",
    "map_fingerprint",
    "default_prompt_text",
    "word_tokenizer",
]

# Default task prompts, one per serialization regime.
JOINT_PROMPT = (
    "Every three values denote an RGB pixel of a flattened image. "
    "Predict the next RGB pixel based on the previous pixels."
)
INDEPENDENT_PROMPT = (
    "R/G/B channel of a flattened RGB image. "
    "Predict the next sub-pixel based on previous sub-pixels."
)


def default_prompt_text(mode: OrderingMode) -> str:
    if mode == OrderingMode.CHANNEL_JOINT:
        return JOINT_PROMPT
    return INDEPENDENT_PROMPT


@dataclass(frozen=True)
class PromptConfig:
    """Task prompt prepended to each patch context; disabled means none."""

    text: str
    enabled: bool = True

    @property
    def effective_text(self) -> str:
        return self.text if self.enabled else ""

    @classmethod
    def off(cls) -> "PromptConfig":
        return cls(text="", enabled=False)

    @classmethod
    def default_for(cls, mode: OrderingMode) -> "PromptConfig":
        return cls(text=default_prompt_text(mode), enabled=True)


@dataclass(frozen=True)
class DigitalTokenMap:
    """Bijection between subpixel values and provider token IDs."""

    forward: tuple[int, ...]
    inverse: dict[int, int] = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.forward) != 256:
            raise TokenizerUnsuitableError(
                f"token map needs 256 entries, got {len(self.forward)}"
            )
        if len(set(self.forward)) != 256:
            raise TokenizerUnsuitableError("token map IDs are not distinct")
        if not self.inverse:
            object.__setattr__(
                self, "inverse", {tid: z for z, tid in enumerate(self.forward)}
            )

    def forward_array(self) -> np.ndarray:
        return np.asarray(self.forward, dtype=np.int64)


def build_digital_token_map(
    vocab_probe: Callable[[str], Sequence[int]]
) -> DigitalTokenMap:
    """Probe the decimal form of every value 0..255 against a tokenizer.

    Each probe must yield exactly one token ID and all 256 IDs must be
    distinct; otherwise the vocabulary cannot carry the symbol alphabet
    losslessly and a TokenizerUnsuitableError names the offending value.
    """
    forward: list[int] = []
    for z in range(256):
        ids = list(vocab_probe(str(z)))
        if len(ids) != 1:
            raise TokenizerUnsuitableError(
                f'value {z} tokenizes to {len(ids)} tokens ("{z}" must be a single token)'
            )
        forward.append(int(ids[0]))
    seen: dict[int, int] = {}
    for z, tid in enumerate(forward):
        if tid in seen:
            raise TokenizerUnsuitableError(
                f"values {seen[tid]} and {z} collide on token ID {tid}"
            )
        seen[tid] = z
    return DigitalTokenMap(forward=tuple(forward))


def identity_token_map() -> DigitalTokenMap:
    """Map where token ID == symbol value; used by the built-in providers."""
    return DigitalTokenMap(forward=tuple(range(256)))


@dataclass(frozen=True)
class TokenizedContext:
    prompt_ids: tuple[int, ...]
    symbol_ids: np.ndarray

    @property
    def total_tokens(self) -> int:
        return len(self.prompt_ids) + int(self.symbol_ids.size)


def tokenize_context(
    prompt: PromptConfig,
    seq: SymbolSequence,
    token_map: DigitalTokenMap,
    prompt_tokenizer: Callable[[str], Sequence[int]],
) -> TokenizedContext:
    """Tokenize the prompt ordinarily, then map symbols by direct lookup."""
    text = prompt.effective_text
    prompt_ids = tuple(int(i) for i in prompt_tokenizer(text)) if text else ()
    symbol_ids = token_map.forward_array()[seq.symbols]
    return TokenizedContext(prompt_ids=prompt_ids, symbol_ids=symbol_ids)


def detokenize_symbols(
    ids: Sequence[int] | np.ndarray, token_map: DigitalTokenMap
) -> list[int]:
    """Exact inverse of the symbol half of tokenize_context."""
    out = []
    for tid in ids:
        z = token_map.inverse.get(int(tid))
        if z is None:
            raise CorruptStreamError(f"token ID {int(tid)} not in digital token map")
        out.append(z)
    return out


def map_fingerprint(token_map: DigitalTokenMap) -> int:
    """64-bit hash of the 256 forward IDs; stored in container headers."""
    payload = struct.pack("<256I", *token_map.forward)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def word_tokenizer(text: str) -> list[int]:
    """Deterministic whitespace tokenizer used by the built-in providers.

    Word IDs start at 256 so they can never collide with the identity
    symbol range. Prompt tokens only contribute to context accounting;
    built-in models do not condition on them.
    """
    ids = []
    for word in text.split():
        digest = hashlib.blake2b(word.encode("utf-8"), digest_size=4).digest()
        ids.append(256 + int.from_bytes(digest, "little"))
    return ids
