"""Command-line interface.

    p2server pretrain  --out model.pt [--steps 300] [--d-model 128]
    p2server finetune  --model model.pt --out adapter.pt [--rank 64] [--steps 500]
    p2server serve     --model model.pt --listen 127.0.0.1:9321 [--deterministic]
"""

from __future__ import annotations

import argparse
import sys

from .model import load_checkpoint
from .server import LogitsServer, ServerConfig
from .training import FineTuneConfig, finetune, pretrain


def cmd_pretrain(args) -> int:
    model = pretrain(
        args.out,
        steps=args.steps,
        d_model=args.d_model,
        n_layer=args.n_layer,
        seed=args.seed,
    )
    n_params = sum(p.numel() for p in model.parameters())
    print(f"pretrained {n_params} parameters over {args.steps} steps -> {args.out}")
    return 0


def cmd_finetune(args) -> int:
    model = load_checkpoint(args.model)
    config = FineTuneConfig(
        rank=args.rank,
        alpha=args.alpha,
        steps=args.steps,
        lr=args.lr,
        warmup=args.warmup,
        corpus_patches=args.corpus_patches,
        seed=args.seed,
    )
    result = finetune(model, config, args.out)
    print(
        f"held-out cross-entropy {result.heldout_ce_start:.4f} -> "
        f"{result.heldout_ce_final:.4f} after {args.steps} steps; adapter at {args.out}"
    )
    return 0 if (args.steps == 0 or result.heldout_ce_final < result.heldout_ce_start) else 1


def cmd_serve(args) -> int:
    host, _, port = args.listen.rpartition(":")
    config = ServerConfig(
        checkpoint=args.model,
        adapter=args.adapter,
        deterministic=args.deterministic,
        context_window=args.context_window,
    )
    LogitsServer(config).serve_forever(host or "127.0.0.1", int(port))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="p2server", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--n-layer", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rank", type=int, default=64)
    p.add_argument("--alpha", type=int, default=None)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--corpus-patches", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("serve")
    p.add_argument("--model", required=True)
    p.add_argument("--listen", default="127.0.0.1:9321")
    p.add_argument("--adapter", default=None)
    p.add_argument("--deterministic", action="store_true", default=True)
    p.add_argument("--no-deterministic", dest="deterministic", action="store_false")
    p.add_argument("--context-window", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
