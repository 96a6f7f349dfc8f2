"""Patch partitioning and pixel <-> symbol-sequence conversion.

Two serialization regimes are supported. Channel-joint emits each pixel's
channels consecutively (R, G, B, R, G, B, ...), so one sequence carries the
whole patch and position 3*i+k-1 holds channel k of pixel i. Channel-
independent emits one plain raster sequence per channel. Scan order is
raster (row-major, left to right, top to bottom) for both patch enumeration
and pixels within a patch; for single-channel images the two regimes
coincide.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import CorruptStreamError, InvalidInputError
from .image import ImageBuffer

__all__ = [
    "OrderingMode",
    "PatchSpec",
    "SymbolSequence",
    "partition",
    "flatten_patch",
    "unflatten_patch",
    "assemble_image",
]


class OrderingMode(IntEnum):
    """Serialization regime; the value doubles as the on-disk byte tag."""

    CHANNEL_JOINT = 0
    CHANNEL_INDEPENDENT = 1

    @classmethod
    def from_byte(cls, tag: int) -> "OrderingMode":
        try:
            return cls(tag)
        except ValueError:
            raise InvalidInputError(f"unknown ordering tag {tag}") from None


@dataclass(frozen=True)
class PatchSpec:
    """Rectangle (x, y, w, h) in pixel units, inclusive of its top-left."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1 or self.x < 0 or self.y < 0:
            raise InvalidInputError(f"degenerate patch {self}")

    def validate_for(self, image: ImageBuffer) -> None:
        if self.x + self.w > image.width or self.y + self.h > image.height:
            raise InvalidInputError(
                f"patch {self} exceeds image {image.width}x{image.height}"
            )

    @property
    def pixel_count(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class SymbolSequence:
    """Ordered symbols in [0, 255]; channel is set iff channel-independent."""

    symbols: np.ndarray
    ordering: OrderingMode
    channel: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "symbols", np.ascontiguousarray(self.symbols, dtype=np.uint8)
        )

    def __len__(self) -> int:
        return int(self.symbols.size)


def partition(image: ImageBuffer, patch_w: int, patch_h: int) -> list[PatchSpec]:
    """Tile the image with non-overlapping patches in raster order.

    Interior patches are patch_w x patch_h; edge patches keep the remainder,
    so the tiling is always exact.
    """
    if patch_w < 1 or patch_h < 1:
        raise InvalidInputError(f"patch dims must be >= 1, got {patch_w}x{patch_h}")
    patches = []
    for y in range(0, image.height, patch_h):
        for x in range(0, image.width, patch_w):
            patches.append(
                PatchSpec(
                    x=x,
                    y=y,
                    w=min(patch_w, image.width - x),
                    h=min(patch_h, image.height - y),
                )
            )
    return patches


def flatten_patch(
    image: ImageBuffer, patch: PatchSpec, mode: OrderingMode
) -> list[SymbolSequence]:
    """Serialize one patch.

    Returns a single interleaved sequence under channel-joint, or one
    sequence per channel (R, G, B order) under channel-independent.
    Single-channel images yield one raster sequence either way.
    """
    patch.validate_for(image)
    block = image.as_array()[patch.y : patch.y + patch.h, patch.x : patch.x + patch.w, :]
    if mode == OrderingMode.CHANNEL_JOINT or image.channels == 1:
        return [SymbolSequence(symbols=block.reshape(-1), ordering=mode)]
    return [
        SymbolSequence(symbols=block[:, :, c].reshape(-1), ordering=mode, channel=c)
        for c in range(image.channels)
    ]


def unflatten_patch(
    seqs: list[SymbolSequence], patch: PatchSpec, mode: OrderingMode, channels: int
) -> np.ndarray:
    """Inverse of flatten_patch; returns the (h, w, channels) sample block."""
    n = patch.pixel_count
    if mode == OrderingMode.CHANNEL_JOINT or channels == 1:
        if len(seqs) != 1:
            raise CorruptStreamError(f"expected 1 sequence, got {len(seqs)}")
        if len(seqs[0]) != n * channels:
            raise CorruptStreamError(
                f"sequence length {len(seqs[0])} != {n * channels} for patch {patch}"
            )
        return seqs[0].symbols.reshape(patch.h, patch.w, channels)
    if len(seqs) != channels:
        raise CorruptStreamError(f"expected {channels} sequences, got {len(seqs)}")
    block = np.empty((patch.h, patch.w, channels), dtype=np.uint8)
    for c, seq in enumerate(seqs):
        if len(seq) != n:
            raise CorruptStreamError(
                f"channel {c} length {len(seq)} != {n} for patch {patch}"
            )
        block[:, :, c] = seq.symbols.reshape(patch.h, patch.w)
    return block


def assemble_image(
    width: int, height: int, channels: int, blocks: list[tuple[PatchSpec, np.ndarray]]
) -> ImageBuffer:
    """Paste per-patch sample blocks back into a full image."""
    out = np.zeros((height, width, channels), dtype=np.uint8)
    for patch, block in blocks:
        out[patch.y : patch.y + patch.h, patch.x : patch.x + patch.w, :] = block
    return ImageBuffer.from_array(out)
