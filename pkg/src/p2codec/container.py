"""On-disk container format (`.p2lc`).

Layout, all integers little-endian:

    offset  size  field
    0       4     magic "P2LC"
    4       1     format version (currently 1)
    5       4     width (u32)
    9       4     height (u32)
    13      1     channels (1 or 3)
    14      2     patch width (u16)
    16      2     patch height (u16)
    18      1     ordering mode tag (0 joint, 1 independent)
    19      1     CDF precision in bits
    20      8     provider fingerprint (u64)
    28      8     token-map fingerprint (u64)
    36      4     prompt byte length (u32), 0 when the prompt is disabled
    40      -     prompt text, UTF-8
    -       4     patch count (u32)
    -       4*n   per-sequence bit lengths (u32 each); one entry per patch,
                  or three per patch (R, G, B) for channel-independent RGB
    -       -     payloads: each sequence's bitstream padded to whole bytes,
                  concatenated in raster patch order (channel-minor)

Bit lengths live in the header rather than in-band so patches are
independently addressable and decodable in parallel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

from .coder import Bitstream
from .errors import CorruptContainerError
from .serialization import OrderingMode

__all__ = ["ContainerHeader", "CompressedContainer", "FORMAT_VERSION", "MAGIC"]

MAGIC = b"P2LC"
FORMAT_VERSION = 1
_FIXED = struct.Struct("<4sBIIBHHBBQQI")


@dataclass(frozen=True)
class ContainerHeader:
    width: int
    height: int
    channels: int
    patch_w: int
    patch_h: int
    ordering: OrderingMode
    precision: int
    provider_fingerprint: int
    map_fingerprint: int
    prompt_text: str
    bit_lengths: tuple[int, ...]
    version: int = FORMAT_VERSION

    @property
    def sequences_per_patch(self) -> int:
        if self.ordering == OrderingMode.CHANNEL_INDEPENDENT and self.channels == 3:
            return 3
        return 1

    @property
    def patch_count(self) -> int:
        return len(self.bit_lengths) // self.sequences_per_patch

    def expected_patch_count(self) -> int:
        cols = -(-self.width // self.patch_w)
        rows = -(-self.height // self.patch_h)
        return cols * rows

    def validate(self) -> None:
        if self.channels not in (1, 3):
            raise CorruptContainerError(f"bad channel count {self.channels}")
        if self.width < 1 or self.height < 1:
            raise CorruptContainerError(f"bad dimensions {self.width}x{self.height}")
        if self.patch_w < 1 or self.patch_h < 1:
            raise CorruptContainerError(
                f"bad patch dimensions {self.patch_w}x{self.patch_h}"
            )
        expected = self.expected_patch_count()
        if self.patch_count != expected:
            raise CorruptContainerError(
                f"header carries {self.patch_count} patches, geometry implies {expected}"
            )
        if len(self.bit_lengths) % self.sequences_per_patch:
            raise CorruptContainerError("bit-length table not divisible by sequence count")

    def to_bytes(self) -> bytes:
        prompt = self.prompt_text.encode("utf-8")
        fixed = _FIXED.pack(
            MAGIC,
            self.version,
            self.width,
            self.height,
            self.channels,
            self.patch_w,
            self.patch_h,
            int(self.ordering),
            self.precision,
            self.provider_fingerprint,
            self.map_fingerprint,
            len(prompt),
        )
        tail = struct.pack("<I", self.patch_count) + struct.pack(
            f"<{len(self.bit_lengths)}I", *self.bit_lengths
        )
        return fixed + prompt + tail

    @classmethod
    def parse(cls, data: bytes) -> tuple["ContainerHeader", int]:
        """Parse from a buffer; returns (header, bytes consumed)."""
        if len(data) < _FIXED.size:
            raise CorruptContainerError("container shorter than fixed header")
        (
            magic,
            version,
            width,
            height,
            channels,
            patch_w,
            patch_h,
            ordering,
            precision,
            provider_fp,
            map_fp,
            prompt_len,
        ) = _FIXED.unpack_from(data, 0)
        if magic != MAGIC:
            raise CorruptContainerError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise CorruptContainerError(f"unsupported container version {version}")
        pos = _FIXED.size
        prompt = data[pos : pos + prompt_len]
        if len(prompt) != prompt_len:
            raise CorruptContainerError("truncated prompt text")
        pos += prompt_len
        if len(data) < pos + 4:
            raise CorruptContainerError("truncated patch count")
        (patch_count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if channels not in (1, 3):
            raise CorruptContainerError(f"bad channel count {channels}")
        seqs = 3 if (ordering == OrderingMode.CHANNEL_INDEPENDENT and channels == 3) else 1
        n_lengths = patch_count * seqs
        if len(data) < pos + 4 * n_lengths:
            raise CorruptContainerError("truncated bit-length table")
        bit_lengths = struct.unpack_from(f"<{n_lengths}I", data, pos)
        pos += 4 * n_lengths
        try:
            header = cls(
                width=width,
                height=height,
                channels=channels,
                patch_w=patch_w,
                patch_h=patch_h,
                ordering=OrderingMode.from_byte(ordering),
                precision=precision,
                provider_fingerprint=provider_fp,
                map_fingerprint=map_fp,
                prompt_text=prompt.decode("utf-8"),
                bit_lengths=tuple(bit_lengths),
                version=version,
            )
        except (ValueError, UnicodeDecodeError) as exc:
            raise CorruptContainerError(str(exc)) from exc
        header.validate()
        return header, pos


@dataclass(frozen=True)
class CompressedContainer:
    header: ContainerHeader
    payloads: tuple[bytes, ...]

    def __post_init__(self) -> None:
        if len(self.payloads) != len(self.header.bit_lengths):
            raise CorruptContainerError(
                f"{len(self.payloads)} payloads vs {len(self.header.bit_lengths)} lengths"
            )
        for i, (payload, bits) in enumerate(zip(self.payloads, self.header.bit_lengths)):
            if len(payload) != (bits + 7) // 8:
                raise CorruptContainerError(
                    f"payload {i}: {len(payload)} bytes inconsistent with {bits} bits"
                )

    def bitstreams(self) -> list[Bitstream]:
        return [
            Bitstream(data=p, bit_length=b)
            for p, b in zip(self.payloads, self.header.bit_lengths)
        ]

    @property
    def payload_bits(self) -> int:
        return sum(self.header.bit_lengths)

    @property
    def total_bytes(self) -> int:
        return len(self.header.to_bytes()) + sum(len(p) for p in self.payloads)

    def to_bytes(self) -> bytes:
        return self.header.to_bytes() + b"".join(self.payloads)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedContainer":
        header, pos = ContainerHeader.parse(data)
        payloads = []
        for bits in header.bit_lengths:
            nbytes = (bits + 7) // 8
            chunk = data[pos : pos + nbytes]
            if len(chunk) != nbytes:
                raise CorruptContainerError("payload shorter than header bit lengths")
            payloads.append(chunk)
            pos += nbytes
        if pos != len(data):
            raise CorruptContainerError(f"{len(data) - pos} trailing bytes after payloads")
        return cls(header=header, payloads=tuple(payloads))

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "CompressedContainer":
        return cls.from_bytes(Path(path).read_bytes())
