"""Acceptance suite for the logits server.

The codec side is driven exclusively through its published interfaces: the
`p2codec` CLI and the version-1 wire protocol. Run with -s for the summary
lines.
"""

import csv
import subprocess
import sys

import numpy as np
import pytest

from p2server.model import load_checkpoint
from p2server.server import LogitsServer, ServerConfig
from p2server.training import FineTuneConfig, finetune

from conftest import random_rgb, write_ppm


def announce(name: str, detail: str) -> None:
    print(f"[PASS] {name}: {detail}", file=sys.stderr)


def p2codec(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        ["p2codec", *args], capture_output=True, text=True, timeout=600
    )


@pytest.fixture(scope="module")
def server(checkpoint):
    srv = LogitsServer(ServerConfig(checkpoint=checkpoint, deterministic=True))
    srv.start()
    yield srv
    srv.stop()


class TestCriterionRemoteRoundTrips:
    def test_five_patches_both_orderings(self, server, tmp_path):
        rng = np.random.default_rng(31)
        count = 0
        for i in range(5):
            image = random_rgb(rng, 16)
            src = tmp_path / f"p{i}.ppm"
            write_ppm(src, image)
            for mode in ("joint", "indep"):
                packed = tmp_path / f"p{i}-{mode}.p2lc"
                restored = tmp_path / f"p{i}-{mode}-back.ppm"
                enc = p2codec(
                    "compress", str(src), str(packed),
                    "--provider", f"remote:{server.address}",
                    "--mode", mode, "--patch", "16", "--no-verify",
                )
                assert enc.returncode == 0, enc.stderr
                dec = p2codec(
                    "decompress", str(packed), str(restored),
                    "--provider", f"remote:{server.address}",
                )
                assert dec.returncode == 0, dec.stderr
                assert restored.read_bytes() == src.read_bytes()
                count += 1
        announce(
            "remote round trips",
            f"5 random 16x16 RGB patches x {{joint, indep}} = {count} lossless CLI round trips",
        )

    def test_init_probe_256_distinct_single_tokens(self, server):
        from test_server import RawClient

        client = RawClient(server.address)
        resp = client.init(prompt="")
        ids = resp["digital_token_ids"]
        assert len(ids) == 256 and len(set(ids)) == 256
        client.close()
        announce("tokenizer probe", "INIT returned 256 distinct single-token IDs")

    def test_ablation_grid_all_cells_lossless(self, server, tmp_path):
        from p2server.corpus import smooth_crop

        corpus = tmp_path / "corpus"
        corpus.mkdir()
        write_ppm(corpus / "img.ppm", smooth_crop(np.random.default_rng(77), 16))
        out_csv = tmp_path / "report.csv"
        bench = p2codec(
            "bench", str(corpus),
            "--provider", f"remote:{server.address}",
            "--patch", "16", "--csv", str(out_csv),
        )
        assert bench.returncode == 0, bench.stderr
        rows = [
            row
            for row in csv.DictReader(out_csv.read_text().splitlines())
            if row["image"] and not row["image"].startswith("#")
        ]
        assert len(rows) == 4  # ordering x prompt grid
        assert all(row["lossless"] == "1" for row in rows)
        configs = {row["config"].split("/", 1)[1] for row in rows}
        assert configs == {
            "indep/no-prompt", "indep/prompt", "joint/no-prompt", "joint/prompt"
        }
        announce(
            "ablation report",
            "4-config ordering x prompt grid produced, all cells lossless: "
            + ", ".join(sorted(f"{r['config'].split('/',1)[1]}={float(r['bpsp_payload']):.3f}" for r in rows)),
        )


class TestCriterionLoraFineTune:
    def test_500_steps_improve_heldout_ce(self, checkpoint, tmp_path):
        model = load_checkpoint(checkpoint)
        config = FineTuneConfig(
            rank=64,            # alpha defaults to 128
            steps=500,
            lr=3e-3,
            warmup=50,
            corpus_patches=600,
            heldout_patches=48,
            seed=5,
        )
        assert config.resolved_alpha() == 128
        result = finetune(model, config, tmp_path / "adapter.pt")
        assert result.heldout_ce_final < result.heldout_ce_start, (
            result.heldout_ce_start,
            result.heldout_ce_final,
        )
        assert result.adapter_path.exists()
        announce(
            "LoRA fine-tune",
            f"rank 64 / alpha 128, 500 steps: held-out CE "
            f"{result.heldout_ce_start:.4f} -> {result.heldout_ce_final:.4f}",
        )

    def test_prompt_gradients_zero_on_probe_batch(self, checkpoint):
        import torch

        from p2server.corpus import PatchDataset, make_finetune_patches
        from p2server.tokenizer import WordDigitTokenizer
        from p2server.training import masked_cross_entropy

        model = load_checkpoint(checkpoint)
        dataset = PatchDataset(
            WordDigitTokenizer(), make_finetune_patches(np.random.default_rng(8), 4, 4)
        )
        batch = dataset.batch([0, 1, 2, 3])
        logits, _ = model(batch.ids)
        logits.retain_grad()
        masked_cross_entropy(logits, batch).backward()
        prompt_grads = logits.grad[:, :-1, :][~batch.loss_mask]
        assert torch.all(prompt_grads == 0.0)
        announce(
            "loss masking",
            f"{int((~batch.loss_mask).sum())} prompt/pad positions with exactly zero gradient",
        )
