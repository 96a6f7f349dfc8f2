"""8-bit image buffers and binary PPM (P6) / PGM (P5) file I/O.

Only maxval-255 binary variants are supported; anything else is rejected
rather than silently converted. A headerless raw mode (width*height*channels
bytes) covers inputs produced by other tools.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

__all__ = ["ImageBuffer", "read_image", "write_image", "read_raw"]


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major 8-bit sample grid; channels is 1 (gray) or 3 (RGB)."""

    width: int
    height: int
    channels: int
    samples: bytes

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidInputError(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )
        if self.channels not in (1, 3):
            raise InvalidInputError(f"channels must be 1 or 3, got {self.channels}")
        expect = self.width * self.height * self.channels
        if len(self.samples) != expect:
            raise InvalidInputError(
                f"sample count {len(self.samples)} != width*height*channels = {expect}"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        """Build from an (H, W) or (H, W, C) uint8 array."""
        a = np.asarray(arr)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise InvalidInputError(f"expected 2-D or 3-D array, got shape {a.shape}")
        if a.dtype != np.uint8:
            if np.any(a < 0) or np.any(a > 255):
                raise InvalidInputError("sample values outside [0, 255]")
            a = a.astype(np.uint8)
        h, w, c = a.shape
        return cls(width=w, height=h, channels=c, samples=a.tobytes())

    def as_array(self) -> np.ndarray:
        """Return an (H, W, C) uint8 view of the samples."""
        return np.frombuffer(self.samples, dtype=np.uint8).reshape(
            self.height, self.width, self.channels
        )

    @property
    def subpixel_count(self) -> int:
        return self.width * self.height * self.channels


_TOKEN = re.compile(rb"(?:\s|#[^\n\r]*[\n\r])*([^\s#]+)")


def _read_header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping comments."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise InvalidInputError("truncated PNM header")
        tokens.append(m.group(1))
        pos = m.end()
    # Header ends after exactly one whitespace byte following the last token.
    if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise InvalidInputError("PNM header not terminated by whitespace")
    return tokens, pos + 1


def read_image(path: str | Path) -> ImageBuffer:
    """Read a binary PPM (P6) or PGM (P5) file with maxval 255."""
    data = Path(path).read_bytes()
    if data[:2] == b"P6":
        channels = 3
    elif data[:2] == b"P5":
        channels = 1
    else:
        raise InvalidInputError(f"{path}: not a binary PPM/PGM file")
    tokens, body = _read_header_tokens(data[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise InvalidInputError(f"{path}: non-numeric PNM header field") from None
    if maxval != 255:
        raise InvalidInputError(f"{path}: only maxval 255 supported, got {maxval}")
    need = width * height * channels
    pixels = data[2 + body : 2 + body + need]
    if len(pixels) != need:
        raise InvalidInputError(f"{path}: expected {need} sample bytes, got {len(pixels)}")
    return ImageBuffer(width=width, height=height, channels=channels, samples=pixels)


def write_image(path: str | Path, image: ImageBuffer) -> None:
    """Write PPM for 3-channel images, PGM for single-channel."""
    magic = b"P6" if image.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    Path(path).write_bytes(header + image.samples)


def read_raw(path: str | Path, width: int, height: int, channels: int) -> ImageBuffer:
    """Read a headerless file of exactly width*height*channels bytes."""
    data = Path(path).read_bytes()
    need = width * height * channels
    if len(data) != need:
        raise InvalidInputError(
            f"{path}: raw size mismatch, expected {need} bytes, found {len(data)}"
        )
    return ImageBuffer(width=width, height=height, channels=channels, samples=data)
