"""Fixed word+digit vocabulary with single-token pixel values.

The decimal strings "0" through "255" are whole vocabulary entries, so every
pixel value maps to exactly one token ID (the property the codec's token
map probe checks). Prompt text tokenizes word by word with a character-level
fallback, which may be multi-token; only the pixel values must be atomic.
The vocabulary is a fixed constant so token IDs are stable across runs.
"""

from __future__ import annotations

import string

PAD, BOS, UNK = "<pad>", "<bos>", "<unk>"

_PROMPT_WORDS = (
    "Every three values denote an RGB pixel of a flattened image. "
    "Predict the next based on previous pixels. "
    "R/G/B channel sub-pixel sub-pixels. pixels image"
).split()

_CHARS = list(string.printable[:95])  # digits, letters, punctuation, space


def _build_vocab() -> list[str]:
    vocab = [PAD, BOS, UNK]
    vocab += [str(z) for z in range(256)]
    seen = set(vocab)
    for word in _PROMPT_WORDS:
        if word not in seen:
            vocab.append(word)
            seen.add(word)
    for ch in _CHARS:
        if ch not in seen:
            vocab.append(ch)
            seen.add(ch)
    return vocab


class WordDigitTokenizer:
    def __init__(self) -> None:
        self.vocab = _build_vocab()
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        self.pad_id = self.index[PAD]
        self.bos_id = self.index[BOS]
        self.unk_id = self.index[UNK]
        self.digital_ids = tuple(self.index[str(z)] for z in range(256))

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def tokenize(self, text: str) -> list[int]:
        """Whitespace words when known, characters otherwise."""
        ids: list[int] = []
        for word in text.split():
            tid = self.index.get(word)
            if tid is not None:
                ids.append(tid)
            else:
                ids.extend(self.index.get(ch, self.unk_id) for ch in word)
        return ids

    def symbol_id(self, value: int) -> int:
        return self.digital_ids[value]

    def probe_digital_map(self) -> tuple[int, ...]:
        """Run the one-token/256-distinct check the protocol promises."""
        ids = []
        for z in range(256):
            got = self.tokenize(str(z))
            if len(got) != 1:
                raise ValueError(f'value {z} is not a single token ("{z}" -> {got})')
            ids.append(got[0])
        if len(set(ids)) != 256:
            raise ValueError("digital token IDs are not distinct")
        return tuple(ids)
