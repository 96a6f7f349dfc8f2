"""Benchmark harness: bpsp accounting, ablation grid, traces, external codecs.

Every reported row is backed by a verified decompress(compress(x)) == x round
trip; a report is only valid when all of its rows are lossless. bpsp is
reported both payload-only and container-total since header accounting
conventions differ between toolchains.
"""

from __future__ import annotations

import csv
import io
import math
import shutil
import subprocess
import tempfile
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .coder import RangeEncoder, quantize_cdf
from .container import CompressedContainer
from .errors import BenchHarnessError, InvalidInputError
from .image import ImageBuffer, read_image, write_image
from .pipeline import CodecConfig, compress, decompress
from .providers.base import ProbabilityProvider
from .serialization import OrderingMode, partition, flatten_patch
from .tokens import PromptConfig

__all__ = [
    "bpsp",
    "BenchRow",
    "BenchReport",
    "run_ablation",
    "dump_distribution_trace",
    "compare_external",
    "load_corpus",
    "REFERENCE_BPSP",
    "EXTERNAL_CODECS",
]

# Published full-scale reference points (8B fine-tuned LM backend). Reported
# in benchmark output for orientation only; desk-scale runs assert nothing
# against them.
REFERENCE_BPSP = {
    "kodak (8B fine-tuned LM)": 2.83,
    "clic.m (8B fine-tuned LM)": 2.08,
    "kodak (png)": 4.35,
}


def bpsp(bits: int, width: int, height: int, channels: int) -> float:
    """Bits per subpixel: total bits over width*height*channels."""
    if width < 1 or height < 1 or channels < 1:
        raise InvalidInputError(f"bad dimensions {width}x{height}x{channels}")
    return bits / (width * height * channels)


@dataclass(frozen=True)
class BenchRow:
    image_id: str
    config_label: str
    bpsp_payload: float
    bpsp_total: float
    encode_seconds: float
    decode_seconds: float
    lossless: bool


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    reference: dict[str, float] = field(default_factory=lambda: dict(REFERENCE_BPSP))

    @property
    def valid(self) -> bool:
        return bool(self.rows) and all(r.lossless for r in self.rows)

    def mean_bpsp_by_config(self) -> dict[str, float]:
        acc: dict[str, list[float]] = {}
        for r in self.rows:
            acc.setdefault(r.config_label, []).append(r.bpsp_payload)
        return {k: sum(v) / len(v) for k, v in acc.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            ["image", "config", "bpsp_payload", "bpsp_total", "encode_s", "decode_s", "lossless"]
        )
        for r in self.rows:
            writer.writerow(
                [
                    r.image_id,
                    r.config_label,
                    f"{r.bpsp_payload:.6f}",
                    f"{r.bpsp_total:.6f}",
                    f"{r.encode_seconds:.4f}",
                    f"{r.decode_seconds:.4f}",
                    int(r.lossless),
                ]
            )
        for name, value in self.reference.items():
            writer.writerow([f"# reference: {name}", f"{value:.2f}", "", "", "", "", ""])
        return buf.getvalue()

    def format_table(self) -> str:
        lines = [
            f"{'config':<44} {'mean bpsp':>10} {'images':>7} {'lossless':>9}",
            "-" * 74,
        ]
        per_cfg: dict[str, list[BenchRow]] = {}
        for r in self.rows:
            per_cfg.setdefault(r.config_label, []).append(r)
        for cfg, rows in per_cfg.items():
            mean = sum(r.bpsp_payload for r in rows) / len(rows)
            ok = all(r.lossless for r in rows)
            lines.append(f"{cfg:<44} {mean:>10.4f} {len(rows):>7} {'yes' if ok else 'NO':>9}")
        lines.append("-" * 74)
        for name, value in self.reference.items():
            lines.append(f"reference: {name:<40} {value:>10.2f}")
        return "\n".join(lines)


def _verified_roundtrip(
    image: ImageBuffer, provider_factory, config: CodecConfig
) -> tuple[CompressedContainer, float, float, bool]:
    provider = provider_factory()
    t0 = time.perf_counter()
    container = compress(image, provider, config)
    t1 = time.perf_counter()
    restored = decompress(container, provider, workers=config.workers)
    t2 = time.perf_counter()
    lossless = restored.samples == image.samples and (
        restored.width,
        restored.height,
        restored.channels,
    ) == (image.width, image.height, image.channels)
    close = getattr(provider, "close", None)
    if close:
        close()
    return container, t1 - t0, t2 - t1, lossless


def ablation_grid(base: CodecConfig) -> list[tuple[str, CodecConfig]]:
    """The four-cell ordering x prompt grid."""
    cells = []
    for mode in (OrderingMode.CHANNEL_INDEPENDENT, OrderingMode.CHANNEL_JOINT):
        for prompt_on in (False, True):
            prompt = (
                PromptConfig.default_for(mode) if prompt_on else PromptConfig.off()
            )
            label = (
                f"{'joint' if mode == OrderingMode.CHANNEL_JOINT else 'indep'}"
                f"/{'prompt' if prompt_on else 'no-prompt'}"
            )
            cells.append((label, replace(base, mode=mode, prompt=prompt)))
    return cells


def run_ablation(
    corpus: list[tuple[str, ImageBuffer]],
    providers: list[tuple[str, Callable[[], ProbabilityProvider]]],
    base_config: CodecConfig | None = None,
    warmup: bool = True,
) -> BenchReport:
    """One row per (image, provider, grid cell); every cell round-trip verified.

    Raises BenchHarnessError naming the offending cell if any round trip is
    not bit-exact.
    """
    base = base_config or CodecConfig()
    report = BenchReport()
    if warmup and corpus:
        # One warm-up run so first-row timings do not absorb initialization.
        tiny = ImageBuffer(width=2, height=2, channels=1, samples=bytes(4))
        for _, factory in providers:
            _verified_roundtrip(tiny, factory, replace(base, mode=OrderingMode.CHANNEL_JOINT))
    for image_id, image in corpus:
        for provider_label, factory in providers:
            for cell_label, config in ablation_grid(base):
                container, enc_s, dec_s, lossless = _verified_roundtrip(
                    image, factory, config
                )
                label = f"{provider_label}/{cell_label}"
                if not lossless:
                    raise BenchHarnessError(
                        f"round trip not lossless for image {image_id!r}, config {label}"
                    )
                report.rows.append(
                    BenchRow(
                        image_id=image_id,
                        config_label=label,
                        bpsp_payload=bpsp(
                            container.payload_bits, image.width, image.height, image.channels
                        ),
                        bpsp_total=bpsp(
                            container.total_bytes * 8,
                            image.width,
                            image.height,
                            image.channels,
                        ),
                        encode_seconds=enc_s,
                        decode_seconds=dec_s,
                        lossless=lossless,
                    )
                )
    return report


@dataclass(frozen=True)
class TraceRow:
    position: int
    symbol: int
    argmax: int
    p_true: float
    nll_model_bits: float
    nll_coded_bits: float
    pmf: np.ndarray


@dataclass
class DistributionTrace:
    rows: list[TraceRow]
    coded_bits: int

    @property
    def total_model_bits(self) -> float:
        return sum(r.nll_model_bits for r in self.rows)

    @property
    def total_coded_estimate_bits(self) -> float:
        return sum(r.nll_coded_bits for r in self.rows)

    def to_csv(self, include_pmf: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        head = ["position", "symbol", "argmax", "p_true", "nll_model_bits", "nll_coded_bits"]
        if include_pmf:
            head += [f"p{z}" for z in range(256)]
        writer.writerow(head)
        for r in self.rows:
            row = [
                r.position,
                r.symbol,
                r.argmax,
                f"{r.p_true:.9g}",
                f"{r.nll_model_bits:.6f}",
                f"{r.nll_coded_bits:.6f}",
            ]
            if include_pmf:
                row += [f"{p:.9g}" for p in r.pmf]
            writer.writerow(row)
        return buf.getvalue()


def dump_distribution_trace(
    image: ImageBuffer,
    provider: ProbabilityProvider,
    patch_index: int,
    config: CodecConfig | None = None,
) -> DistributionTrace:
    """Per-symbol model predictions for one patch, plus the coded length.

    nll_coded_bits uses the quantized probability actually consumed by the
    coder, so the column total matches the payload bits within flush slack.
    """
    config = config or CodecConfig()
    patches = partition(image, config.patch_w, config.patch_h)
    if not 0 <= patch_index < len(patches):
        raise InvalidInputError(
            f"patch index {patch_index} out of range (0..{len(patches) - 1})"
        )
    patch = patches[patch_index]
    prompt = config.resolved_prompt()

    ensure_init = getattr(provider, "ensure_init", None)
    if ensure_init is not None:
        ensure_init(prompt, config.mode)

    rows: list[TraceRow] = []
    coded_bits = 0
    pos = 0
    for seq in flatten_patch(image, patch, config.mode):
        session = provider.begin(prompt, config.mode, seq.channel)
        try:
            enc = RangeEncoder(config.precision)
            for s in seq.symbols:
                sym = int(s)
                pmf = session.next_pmf()
                cdf = quantize_cdf(pmf, config.precision)
                enc.encode(cdf, sym)
                rows.append(
                    TraceRow(
                        position=pos,
                        symbol=sym,
                        argmax=int(np.argmax(pmf)),
                        p_true=float(pmf[sym]),
                        nll_model_bits=-math.log2(max(float(pmf[sym]), 1e-300)),
                        nll_coded_bits=-math.log2(cdf.gap(sym) / (1 << config.precision)),
                        pmf=np.array(pmf, dtype=np.float64),
                    )
                )
                session.observe(sym)
                pos += 1
            coded_bits += enc.finish().bit_length
        finally:
            session.close()
    return DistributionTrace(rows=rows, coded_bits=coded_bits)


# External codec invocation: sizes of real encoders' outputs, never
# reimplementations. Command templates get {inp} and {out} substituted.
EXTERNAL_CODECS: dict[str, tuple[str, str]] = {
    "png-imagemagick": ("convert {inp} {out}", ".png"),
    "png-ffmpeg": ("ffmpeg -y -loglevel error -i {inp} {out}", ".png"),
    "webp": ("cwebp -quiet -lossless {inp} -o {out}", ".webp"),
    "jpeg-xl": ("cjxl --quiet -d 0 {inp} {out}", ".jxl"),
    "flif": ("flif {inp} {out}", ".flif"),
}


def compare_external(
    corpus: list[tuple[str, ImageBuffer]],
    codecs: dict[str, tuple[str, str]] | None = None,
) -> BenchReport:
    """Invoke external codec binaries and record their sizes as bpsp rows.

    Codecs whose binary is missing are skipped with a warning; a missing
    binary never fabricates a number.
    """
    codecs = EXTERNAL_CODECS if codecs is None else codecs
    report = BenchReport()
    available: dict[str, tuple[str, str]] = {}
    for name, (template, ext) in codecs.items():
        binary = template.split()[0]
        if shutil.which(binary) is None:
            warnings.warn(f"external codec {name!r}: binary {binary!r} not found; skipped")
            continue
        available[name] = (template, ext)
    if not available:
        return report
    with tempfile.TemporaryDirectory(prefix="p2codec-ext-") as tmp:
        tmpdir = Path(tmp)
        for image_id, image in corpus:
            src = tmpdir / "in.ppm"
            write_image(src, image)
            for name, (template, ext) in available.items():
                out = tmpdir / f"out{ext}"
                if out.exists():
                    out.unlink()
                cmd = template.format(inp=str(src), out=str(out))
                t0 = time.perf_counter()
                proc = subprocess.run(
                    cmd.split(), capture_output=True, text=True, timeout=300
                )
                elapsed = time.perf_counter() - t0
                if proc.returncode != 0 or not out.exists():
                    warnings.warn(
                        f"external codec {name!r} failed on {image_id!r}: {proc.stderr.strip()}"
                    )
                    continue
                size_bits = out.stat().st_size * 8
                value = bpsp(size_bits, image.width, image.height, image.channels)
                report.rows.append(
                    BenchRow(
                        image_id=image_id,
                        config_label=f"external/{name}",
                        bpsp_payload=value,
                        bpsp_total=value,
                        encode_seconds=elapsed,
                        decode_seconds=float("nan"),
                        lossless=True,
                    )
                )
    return report


def load_corpus(directory: str | Path) -> list[tuple[str, ImageBuffer]]:
    """Load every PPM/PGM (and, with pillow installed, PNG) in a directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidInputError(f"{directory} is not a directory")
    corpus = []
    for path in sorted(directory.iterdir()):
        suffix = path.suffix.lower()
        if suffix in (".ppm", ".pgm"):
            corpus.append((path.name, read_image(path)))
        elif suffix == ".png":
            try:
                from PIL import Image as PILImage
            except ImportError:
                warnings.warn(f"{path.name}: pillow not installed, skipping PNG input")
                continue
            with PILImage.open(path) as img:
                arr = np.asarray(img.convert("RGB" if img.mode != "L" else "L"))
            corpus.append((path.name, ImageBuffer.from_array(arr)))
    if not corpus:
        raise InvalidInputError(f"no readable images in {directory}")
    return corpus
