"""End-to-end compress / decompress orchestration.

Each patch is an independent coding unit: a fresh provider session (prompt
installed) codes the patch's symbol sequence(s), observing each symbol after
it is coded so encoder and decoder walk identical model states. Patches can
therefore run in parallel; container bytes depend only on (image, provider,
config) because assembly always happens in raster patch order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coder import (
    DEFAULT_PRECISION,
    Bitstream,
    RangeDecoder,
    RangeEncoder,
    quantize_cdf,
    uniform_cdf,
)
from .container import CompressedContainer, ContainerHeader
from .errors import ConfigError, ContextOverflowError, WrongProviderError
from .image import ImageBuffer
from .providers.base import ProbabilityProvider, ProviderSession
from .providers.builtin import UNIFORM_PMF
from .serialization import (
    OrderingMode,
    PatchSpec,
    SymbolSequence,
    assemble_image,
    flatten_patch,
    partition,
    unflatten_patch,
)
from .tokens import PromptConfig, map_fingerprint

__all__ = ["CodecConfig", "ExecutionPlan", "schedule_patches", "compress", "decompress"]


@dataclass(frozen=True)
class CodecConfig:
    mode: OrderingMode = OrderingMode.CHANNEL_JOINT
    patch_w: int = 16
    patch_h: int = 16
    prompt: PromptConfig | None = None
    precision: int = DEFAULT_PRECISION
    workers: int = 1

    def resolved_prompt(self) -> PromptConfig:
        if self.prompt is None:
            return PromptConfig.default_for(self.mode)
        return self.prompt


@dataclass(frozen=True)
class ExecutionPlan:
    """How a patch list maps onto workers; order is always raster order."""

    worker_count: int
    order: tuple[int, ...] = field(default_factory=tuple)


def schedule_patches(patches: list[PatchSpec], worker_budget: int) -> ExecutionPlan:
    if worker_budget < 1:
        raise ConfigError(f"worker budget must be >= 1, got {worker_budget}")
    return ExecutionPlan(
        worker_count=min(worker_budget, max(len(patches), 1)),
        order=tuple(range(len(patches))),
    )


def _quantize(pmf: np.ndarray, precision: int):
    # Unseen-context predictions share one interned uniform pmf; skip the
    # apportionment for that common case.
    if pmf is UNIFORM_PMF:
        return uniform_cdf(precision)
    return quantize_cdf(pmf, precision)


def _code_sequence(
    session: ProviderSession, seq: SymbolSequence, precision: int
) -> Bitstream:
    enc = RangeEncoder(precision)
    for s in seq.symbols:
        sym = int(s)
        cdf = _quantize(session.next_pmf(), precision)
        enc.encode(cdf, sym)
        session.observe(sym)
    return enc.finish()


def _decode_sequence(
    session: ProviderSession,
    stream: Bitstream,
    count: int,
    precision: int,
) -> np.ndarray:
    out = np.empty(count, dtype=np.uint8)
    if count:
        dec = RangeDecoder(stream, precision)
        for i in range(count):
            cdf = _quantize(session.next_pmf(), precision)
            sym = dec.decode(cdf)
            out[i] = sym
            session.observe(sym)
    return out


def _validate_window(
    provider: ProbabilityProvider,
    prompt_tokens: int,
    patches: list[PatchSpec],
    mode: OrderingMode,
    channels: int,
) -> None:
    window = provider.context_window
    if window is None:
        return
    per_patch = max(p.pixel_count for p in patches)
    if mode == OrderingMode.CHANNEL_JOINT:
        per_patch *= channels
    need = prompt_tokens + per_patch
    if need > window:
        raise ContextOverflowError(
            f"patch needs {need} context tokens (prompt {prompt_tokens}) "
            f"but provider window is {window}"
        )


def compress(
    image: ImageBuffer, provider: ProbabilityProvider, config: CodecConfig | None = None
) -> CompressedContainer:
    config = config or CodecConfig()
    prompt = config.resolved_prompt()
    mode = config.mode

    ensure_init = getattr(provider, "ensure_init", None)
    if ensure_init is not None:
        ensure_init(prompt, mode)

    patches = partition(image, config.patch_w, config.patch_h)

    # Overflow is a configuration error; refuse before any coding happens.
    probe = provider.begin(prompt, mode, 0 if mode == OrderingMode.CHANNEL_INDEPENDENT else None)
    prompt_tokens = probe.prompt_token_count
    probe.close()
    _validate_window(provider, prompt_tokens, patches, mode, image.channels)

    def code_patch(patch: PatchSpec) -> list[Bitstream]:
        streams = []
        for seq in flatten_patch(image, patch, mode):
            session = provider.begin(prompt, mode, seq.channel)
            try:
                streams.append(_code_sequence(session, seq, config.precision))
            finally:
                session.close()
        return streams

    plan = schedule_patches(patches, config.workers)
    if plan.worker_count > 1:
        with ThreadPoolExecutor(max_workers=plan.worker_count) as pool:
            per_patch = list(pool.map(code_patch, patches))
    else:
        per_patch = [code_patch(p) for p in patches]

    bit_lengths: list[int] = []
    payloads: list[bytes] = []
    for streams in per_patch:
        for stream in streams:
            bit_lengths.append(stream.bit_length)
            payloads.append(stream.data)

    header = ContainerHeader(
        width=image.width,
        height=image.height,
        channels=image.channels,
        patch_w=config.patch_w,
        patch_h=config.patch_h,
        ordering=mode,
        precision=config.precision,
        provider_fingerprint=provider.fingerprint,
        map_fingerprint=map_fingerprint(provider.token_map),
        prompt_text=prompt.effective_text,
        bit_lengths=tuple(bit_lengths),
    )
    return CompressedContainer(header=header, payloads=tuple(payloads))


def decompress(
    container: CompressedContainer,
    provider: ProbabilityProvider,
    workers: int = 1,
) -> ImageBuffer:
    header = container.header
    header.validate()
    mode = header.ordering
    prompt = PromptConfig(text=header.prompt_text, enabled=bool(header.prompt_text))

    ensure_init = getattr(provider, "ensure_init", None)
    if ensure_init is not None:
        ensure_init(prompt, mode)

    # Fingerprints gate all decoding: a mismatched model would decode garbage.
    if provider.fingerprint != header.provider_fingerprint:
        raise WrongProviderError(
            f"provider fingerprint {provider.fingerprint:#x} != "
            f"container's {header.provider_fingerprint:#x}"
        )
    if map_fingerprint(provider.token_map) != header.map_fingerprint:
        raise WrongProviderError(
            f"token map fingerprint {map_fingerprint(provider.token_map):#x} != "
            f"container's {header.map_fingerprint:#x}"
        )

    shell = ImageBuffer(
        width=header.width,
        height=header.height,
        channels=header.channels,
        samples=bytes(header.width * header.height * header.channels),
    )
    patches = partition(shell, header.patch_w, header.patch_h)
    streams = container.bitstreams()
    seqs_per_patch = header.sequences_per_patch

    def decode_patch(idx_patch: tuple[int, PatchSpec]) -> tuple[PatchSpec, np.ndarray]:
        idx, patch = idx_patch
        seqs = []
        for c in range(seqs_per_patch):
            stream = streams[idx * seqs_per_patch + c]
            channel = c if seqs_per_patch > 1 else None
            count = patch.pixel_count * (
                header.channels if seqs_per_patch == 1 else 1
            )
            session = provider.begin(prompt, mode, channel)
            try:
                symbols = _decode_sequence(session, stream, count, header.precision)
            finally:
                session.close()
            seqs.append(SymbolSequence(symbols=symbols, ordering=mode, channel=channel))
        return patch, unflatten_patch(seqs, patch, mode, header.channels)

    plan = schedule_patches(patches, workers)
    items = list(enumerate(patches))
    if plan.worker_count > 1:
        with ThreadPoolExecutor(max_workers=plan.worker_count) as pool:
            blocks = list(pool.map(decode_patch, items))
    else:
        blocks = [decode_patch(it) for it in items]

    return assemble_image(header.width, header.height, header.channels, blocks)
