"""Bit-exact arithmetic (range) coding against fixed-point CDFs.

Coder state is pure integer arithmetic, so identical inputs give identical
bitstreams on every platform. The state is (precision + 16) bits wide: low
and high straddle the interval, same-top-bits are shifted out as coded bits
and middle-straddle cases are deferred as underflow bits. Keeping 16 bits of
headroom above the CDF precision bounds the per-symbol truncation loss below
2**-15 bits, which is what makes the documented 64-bit slack in the length
bound safe for any realistic sequence length.

Bits are packed MSB-first into bytes; a stream's exact bit length is carried
out of band (by the container), never inferred from the byte count. Decoding
treats bits past the end as zeros, which the flush relies on. Because the
flush also drains deferred underflow bits, a valid decode consumes exactly
bit_length + state_bits - 1 positions; anything needing more than 64 phantom
bits is a truncated stream (or an oversized symbol count) and raises instead
of decoding garbage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, CorruptStreamError

__all__ = [
    "QuantizedCdf",
    "Bitstream",
    "quantize_cdf",
    "uniform_cdf",
    "RangeEncoder",
    "RangeDecoder",
    "encode_symbols",
    "decode_symbols",
]

DEFAULT_PRECISION = 16
MIN_PRECISION = 8
MAX_PRECISION = 24
# Headroom between CDF precision and coder state width.
STATE_HEADROOM = 16
# Phantom zero bits a decoder may consume past the end of a valid stream.
FLUSH_SLACK_BITS = 64


@dataclass(frozen=True)
class QuantizedCdf:
    """257 cumulative counts: c[0] = 0, c[256] = 2**precision, gaps >= 1."""

    c: np.ndarray
    precision: int

    def gap(self, symbol: int) -> int:
        return int(self.c[symbol + 1] - self.c[symbol])


@dataclass(frozen=True)
class Bitstream:
    """Byte payload plus exact bit count; pad bits in the last byte are zero."""

    data: bytes
    bit_length: int

    def __post_init__(self) -> None:
        if len(self.data) != (self.bit_length + 7) // 8:
            raise CorruptStreamError(
                f"{len(self.data)} bytes cannot hold exactly {self.bit_length} bits"
            )
        pad = 8 * len(self.data) - self.bit_length
        if pad and self.data and (self.data[-1] & ((1 << pad) - 1)):
            raise CorruptStreamError("nonzero padding bits")


def _check_precision(precision: int) -> None:
    if not MIN_PRECISION <= precision <= MAX_PRECISION:
        raise ConfigError(
            f"cdf precision must be in [{MIN_PRECISION}, {MAX_PRECISION}], got {precision}"
        )


def quantize_cdf(pmf: np.ndarray, precision: int = DEFAULT_PRECISION) -> QuantizedCdf:
    """Apportion 2**precision mass by largest remainder with a floor of 1.

    Every symbol keeps at least one count so it stays decodable even when the
    model assigns it (near-)zero probability. Ties and any clamp-induced
    deficit are resolved toward lower symbol indices, so the result is a pure
    function of the pmf bits.
    """
    _check_precision(precision)
    total = 1 << precision
    scaled = np.asarray(pmf, dtype=np.float64) * total
    base = scaled.astype(np.int64)  # trunc == floor for non-negative input
    np.maximum(base, 1, out=base)
    diff = total - int(base.sum())
    if diff > 0:
        # Stable sort keeps equal remainders in index order.
        order = np.argsort(base - scaled, kind="stable")
        base[order[:diff]] += 1
    while diff < 0:
        z = int(np.argmax(base))  # first maximum -> lowest index on ties
        take = min(-diff, int(base[z]) - 1)
        base[z] -= take
        diff += take
    c = np.zeros(257, dtype=np.int64)
    np.cumsum(base, out=c[1:])
    return QuantizedCdf(c=c, precision=precision)


_UNIFORM_CACHE: dict[int, QuantizedCdf] = {}


def uniform_cdf(precision: int = DEFAULT_PRECISION) -> QuantizedCdf:
    """Cached exact uniform CDF (common enough to be worth interning)."""
    cdf = _UNIFORM_CACHE.get(precision)
    if cdf is None:
        _check_precision(precision)
        c = np.arange(257, dtype=np.int64) * ((1 << precision) // 256)
        if (1 << precision) % 256:
            cdf = quantize_cdf(np.full(256, 1.0 / 256.0), precision)
        else:
            cdf = QuantizedCdf(c=c, precision=precision)
        _UNIFORM_CACHE[precision] = cdf
    return cdf


class _BitWriter:
    __slots__ = ("buf", "acc", "nbits", "total")

    def __init__(self) -> None:
        self.buf = bytearray()
        self.acc = 0
        self.nbits = 0
        self.total = 0

    def write(self, bit: int) -> None:
        self.acc = (self.acc << 1) | bit
        self.nbits += 1
        self.total += 1
        if self.nbits == 8:
            self.buf.append(self.acc)
            self.acc = 0
            self.nbits = 0

    def finish(self) -> Bitstream:
        bit_length = self.total
        if self.nbits:
            self.buf.append(self.acc << (8 - self.nbits))
            self.acc = 0
            self.nbits = 0
        return Bitstream(data=bytes(self.buf), bit_length=bit_length)


class _BitReader:
    __slots__ = ("data", "bit_length", "pos", "limit")

    def __init__(self, stream: Bitstream) -> None:
        self.data = stream.data
        self.bit_length = stream.bit_length
        self.pos = 0
        # A valid stream never needs more phantom bits than this.
        self.limit = stream.bit_length + FLUSH_SLACK_BITS

    def read(self) -> int:
        pos = self.pos
        if pos >= self.bit_length:
            if pos >= self.limit:
                raise CorruptStreamError(
                    "bitstream exhausted: truncated stream or symbol count too large"
                )
            self.pos = pos + 1
            return 0
        self.pos = pos + 1
        return (self.data[pos >> 3] >> (7 - (pos & 7))) & 1


class RangeEncoder:
    """Streaming encoder; one instance per independent bitstream."""

    def __init__(self, precision: int = DEFAULT_PRECISION) -> None:
        _check_precision(precision)
        self.precision = precision
        state_bits = precision + STATE_HEADROOM
        self.full = 1 << state_bits
        self.half = self.full >> 1
        self.quarter = self.full >> 2
        self.mask = self.full - 1
        self.top_shift = state_bits - 1
        self.low = 0
        self.high = self.mask
        self.pending = 0
        self.out = _BitWriter()
        self._finished = False

    def encode(self, cdf: QuantizedCdf, symbol: int) -> None:
        c = cdf.c
        shift = self.precision
        span = self.high - self.low + 1
        base = self.low
        low = base + ((span * int(c[symbol])) >> shift)
        high = base + ((span * int(c[symbol + 1])) >> shift) - 1

        # Renormalize with everything in locals; this loop dominates runtime.
        half, quarter, mask = self.half, self.quarter, self.mask
        top_shift = self.top_shift
        pending = self.pending
        out = self.out
        buf = out.buf
        acc, nbits, total_bits = out.acc, out.nbits, out.total
        while True:
            if (low ^ high) & half == 0:
                bit = low >> top_shift
                acc = (acc << 1) | bit
                nbits += 1
                total_bits += 1
                if nbits == 8:
                    buf.append(acc)
                    acc = 0
                    nbits = 0
                if pending:
                    flip = bit ^ 1
                    for _ in range(pending):
                        acc = (acc << 1) | flip
                        nbits += 1
                        total_bits += 1
                        if nbits == 8:
                            buf.append(acc)
                            acc = 0
                            nbits = 0
                    pending = 0
                low = (low << 1) & mask
                high = ((high << 1) & mask) | 1
            elif low & ~high & quarter:
                pending += 1
                low = (low << 1) ^ half
                high = ((high ^ half) << 1) | half | 1
            else:
                break
        self.low, self.high = low, high
        self.pending = pending
        out.acc, out.nbits, out.total = acc, nbits, total_bits

    def finish(self) -> Bitstream:
        """Flush: one 1 bit pins the value at the interval midpoint.

        Any still-pending underflow bits are emitted as zeros. They do not
        change the decoded value (the decoder would synthesize zeros anyway)
        but they keep the decoder's total consumption at exactly
        bit_length + state_bits - 1, so the truncation cap can never fire on
        a valid stream, however pathological the underflow run.
        """
        if self._finished:
            raise ConfigError("encoder already finished")
        self._finished = True
        self.out.write(1)
        for _ in range(self.pending):
            self.out.write(0)
        self.pending = 0
        return self.out.finish()

    @property
    def bits_written(self) -> int:
        return self.out.total


class RangeDecoder:
    """Streaming decoder; mirror image of RangeEncoder."""

    def __init__(self, stream: Bitstream, precision: int = DEFAULT_PRECISION) -> None:
        _check_precision(precision)
        self.precision = precision
        state_bits = precision + STATE_HEADROOM
        self.full = 1 << state_bits
        self.half = self.full >> 1
        self.quarter = self.full >> 2
        self.mask = self.full - 1
        self.low = 0
        self.high = self.mask
        self.inp = _BitReader(stream)
        code = 0
        for _ in range(state_bits):
            code = (code << 1) | self.inp.read()
        self.code = code

    def decode(self, cdf: QuantizedCdf) -> int:
        shift = self.precision
        span = self.high - self.low + 1
        value = (((self.code - self.low + 1) << shift) - 1) // span
        symbol = int(np.searchsorted(cdf.c, value, side="right")) - 1
        c = cdf.c
        base = self.low
        low = base + ((span * int(c[symbol])) >> shift)
        high = base + ((span * int(c[symbol + 1])) >> shift) - 1

        code = self.code
        half, quarter, mask = self.half, self.quarter, self.mask
        inp = self.inp
        data, bit_length, limit = inp.data, inp.bit_length, inp.limit
        pos = inp.pos
        while True:
            if (low ^ high) & half == 0:
                low = (low << 1) & mask
                high = ((high << 1) & mask) | 1
                code = (code << 1) & mask
            elif low & ~high & quarter:
                low = (low << 1) ^ half
                high = ((high ^ half) << 1) | half | 1
                code = (code & half) | ((code << 1) & (mask >> 1))
            else:
                break
            if pos < bit_length:
                code |= (data[pos >> 3] >> (7 - (pos & 7))) & 1
            elif pos >= limit:
                raise CorruptStreamError(
                    "bitstream exhausted: truncated stream or symbol count too large"
                )
            pos += 1
        inp.pos = pos
        self.low, self.high, self.code = low, high, code
        return symbol


def encode_symbols(
    symbols: Sequence[int] | np.ndarray,
    cdf_source: Callable[[int], QuantizedCdf],
    precision: int = DEFAULT_PRECISION,
) -> Bitstream:
    """Encode symbols[i] against cdf_source(i); returns the flushed stream."""
    enc = RangeEncoder(precision)
    for i, s in enumerate(symbols):
        enc.encode(cdf_source(i), int(s))
    return enc.finish()


def decode_symbols(
    stream: Bitstream,
    count: int,
    cdf_source: Callable[[int], QuantizedCdf],
    precision: int = DEFAULT_PRECISION,
    on_symbol: Callable[[int, int], None] | None = None,
) -> list[int]:
    """Decode `count` symbols; cdf_source(i) must replay the encoder's CDFs.

    on_symbol(i, s) fires after each symbol so adaptive models can observe
    the decoded prefix before producing the next CDF.
    """
    if count == 0:
        return []
    dec = RangeDecoder(stream, precision)
    out = []
    for i in range(count):
        s = dec.decode(cdf_source(i))
        out.append(s)
        if on_symbol is not None:
            on_symbol(i, s)
    return out
