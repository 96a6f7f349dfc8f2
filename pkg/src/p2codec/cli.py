"""Command-line interface.

    p2codec compress <in> <out.p2lc> [--provider builtin:order1] [--mode joint]
    p2codec decompress <in.p2lc> <out.ppm> --provider ...
    p2codec bench <corpus-dir> --csv <out> [--provider ... --provider ...]
    p2codec trace <in> --patch-index K --csv <out>

Exit code 0 only on verified success.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import compare_external, dump_distribution_trace, load_corpus, run_ablation
from .container import CompressedContainer
from .errors import CodecError, ConfigError
from .image import read_image, read_raw, write_image
from .pipeline import CodecConfig, compress, decompress
from .providers import AdaptiveContextModel, RemoteProvider
from .serialization import OrderingMode
from .tokens import PromptConfig

__all__ = ["main", "parse_provider_spec"]


def parse_provider_spec(spec: str):
    """'builtin:orderK[:alpha=A]' or 'remote:<host:port|unix:/path>'."""
    if spec.startswith("builtin:"):
        rest = spec[len("builtin:") :]
        parts = rest.split(":")
        if not parts[0].startswith("order"):
            raise ConfigError(f"bad builtin provider spec {spec!r}")
        try:
            order = int(parts[0][len("order") :])
        except ValueError:
            raise ConfigError(f"bad order in provider spec {spec!r}") from None
        alpha = "1"
        for extra in parts[1:]:
            if extra.startswith("alpha="):
                alpha = extra[len("alpha=") :]
            else:
                raise ConfigError(f"unknown provider option {extra!r}")
        return lambda: AdaptiveContextModel(order=order, alpha=alpha)
    if spec.startswith("remote:"):
        address = spec[len("remote:") :]
        return lambda: RemoteProvider(address)
    raise ConfigError(f"unknown provider spec {spec!r} (want builtin:... or remote:...)")


def _parse_mode(name: str) -> OrderingMode:
    if name == "joint":
        return OrderingMode.CHANNEL_JOINT
    if name == "indep":
        return OrderingMode.CHANNEL_INDEPENDENT
    raise ConfigError(f"mode must be 'joint' or 'indep', got {name!r}")


def _build_config(args) -> CodecConfig:
    mode = _parse_mode(args.mode)
    if args.prompt == "off":
        prompt = PromptConfig.off()
    elif args.prompt_text is not None:
        prompt = PromptConfig(text=args.prompt_text, enabled=True)
    else:
        prompt = PromptConfig.default_for(mode)
    return CodecConfig(
        mode=mode,
        patch_w=args.patch,
        patch_h=args.patch,
        prompt=prompt,
        precision=args.precision,
        workers=args.workers,
    )


def _load_input(args):
    if args.raw:
        try:
            w, h, c = (int(v) for v in args.raw.lower().split("x"))
        except ValueError:
            raise ConfigError(f"--raw wants WxHxC, got {args.raw!r}") from None
        return read_raw(args.input, w, h, c)
    return read_image(args.input)


def _add_codec_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", default="builtin:order1")
    p.add_argument("--mode", default="joint", choices=["joint", "indep"])
    p.add_argument("--patch", type=int, default=16)
    p.add_argument("--prompt", default="on", choices=["on", "off"])
    p.add_argument("--prompt-text", default=None, help="override the default prompt text")
    p.add_argument("--precision", type=int, default=16)
    p.add_argument("--workers", type=int, default=1)


def cmd_compress(args) -> int:
    image = _load_input(args)
    config = _build_config(args)
    provider = parse_provider_spec(args.provider)()
    container = compress(image, provider, config)
    if args.verify:
        restored = decompress(container, provider, workers=args.workers)
        if restored.samples != image.samples:
            print("error: verification decode does not match input", file=sys.stderr)
            return 1
    container.save(args.output)
    nbits = container.total_bytes * 8
    denom = image.subpixel_count
    print(
        f"{args.input} -> {args.output}: {container.total_bytes} bytes, "
        f"{nbits / denom:.4f} bpsp (payload {container.payload_bits / denom:.4f})"
        f"{', verified lossless' if args.verify else ''}"
    )
    return 0


def cmd_decompress(args) -> int:
    container = CompressedContainer.load(args.input)
    provider = parse_provider_spec(args.provider)()
    image = decompress(container, provider, workers=args.workers)
    write_image(args.output, image)
    print(
        f"{args.input} -> {args.output}: {image.width}x{image.height}x{image.channels}"
    )
    return 0


def cmd_bench(args) -> int:
    corpus = load_corpus(args.corpus)
    providers = [(spec, parse_provider_spec(spec)) for spec in args.provider]
    config = CodecConfig(
        patch_w=args.patch, patch_h=args.patch, precision=args.precision, workers=args.workers
    )
    report = run_ablation(corpus, providers, base_config=config)
    if args.external:
        ext = compare_external(corpus)
        report.rows.extend(ext.rows)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    print(report.format_table())
    if not report.valid:
        print("error: benchmark contains unverified rows", file=sys.stderr)
        return 1
    return 0


def cmd_trace(args) -> int:
    image = _load_input(args)
    config = _build_config(args)
    provider = parse_provider_spec(args.provider)()
    trace = dump_distribution_trace(image, provider, args.patch_index, config)
    csv_text = trace.to_csv(include_pmf=not args.no_pmf)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    print(
        f"# {len(trace.rows)} symbols, model {trace.total_model_bits:.1f} bits, "
        f"quantized {trace.total_coded_estimate_bits:.1f} bits, coded {trace.coded_bits} bits",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="p2codec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress an image to a .p2lc container")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--raw", default=None, metavar="WxHxC")
    _add_codec_options(p)
    p.add_argument("--verify", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="decode a .p2lc container")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--provider", default="builtin:order1")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("bench", help="run the ablation grid over a corpus directory")
    p.add_argument("corpus")
    p.add_argument("--provider", action="append", default=None)
    p.add_argument("--patch", type=int, default=16)
    p.add_argument("--precision", type=int, default=16)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", default=None)
    p.add_argument("--external", action="store_true", help="also time external codec binaries")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("trace", help="dump per-symbol predictive distributions")
    p.add_argument("input")
    p.add_argument("--raw", default=None, metavar="WxHxC")
    p.add_argument("--patch-index", type=int, default=0)
    p.add_argument("--csv", default=None)
    p.add_argument("--no-pmf", action="store_true", help="omit the 256 pmf columns")
    _add_codec_options(p)
    p.set_defaults(func=cmd_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench" and not args.provider:
        args.provider = ["builtin:order1"]
    try:
        return args.func(args)
    except CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
