#!/usr/bin/env python3
"""End-to-end checks of the hma command line."""

import csv
import pathlib
import subprocess
import sys
import tempfile

BASE = """
[model]
hidden = 8
d1 = 4
d2 = 4
heads = 2
m2 = 2
[data]
n_per_env = 60
[train]
epochs = 2
batch_size = 16
[experiment]
seeds = 0
ablations = HMA
"""

failures = []


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def run(hma, *args):
    return subprocess.run([hma, *args], capture_output=True, text=True)


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def main() -> int:
    hma = sys.argv[1]
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        cfg = tmp / "base.ini"
        cfg.write_text(BASE)

        p = run(hma, "train", "--config", str(cfg), "--out", str(tmp / "t"), "--seed", "4", "--ablation", "hma,erm")
        check(p.returncode == 0, "train exits 0")
        check((tmp / "t/HMA-seed4/metrics.csv").exists() and (tmp / "t/BACKBONE-seed4/metrics.csv").exists(),
              "--seed and --ablation override the config")
        check((tmp / "t/HMA-seed4/checkpoint.hma.manifest").exists(), "checkpoint manifest written")
        manifest = (tmp / "t/HMA-seed4/checkpoint.hma.manifest").read_text()
        check(manifest.startswith("step = ") and "\nrng = " in manifest and "[config]" in manifest,
              "manifest carries step, rng state and config echo")
        check((tmp / "t/HMA-seed4/checkpoint.hma").read_bytes()[:5] == b"HMA1\n", "checkpoint starts with HMA1 tag")

        # eval from the checkpoint reproduces the final-epoch metrics.
        p = run(hma, "eval", "--config", str(cfg), "--seed", "4", "--ablation", "HMA",
                "--checkpoint", str(tmp / "t/HMA-seed4/checkpoint.hma"), "--out", str(tmp / "e"))
        check(p.returncode == 0, "eval exits 0")
        trained = [r for r in rows(tmp / "t/HMA-seed4/metrics.csv") if r["epoch"] == "2"]
        evaluated = rows(tmp / "e/eval_metrics.csv")
        check([(r["split"], r["accuracy"], r["loss"]) for r in trained] ==
              [(r["split"], r["accuracy"], r["loss"]) for r in evaluated], "eval matches training's last epoch")

        # Dataset CSV round trip through export-data and eval --data.
        p = run(hma, "export-data", "--config", str(cfg), "--seed", "4", "--path", str(tmp / "data.csv"))
        check(p.returncode == 0, "export-data exits 0")
        check((tmp / "data.csv").read_text().splitlines()[0] == "env,label,f0,f1,f2,f3", "dataset CSV header")
        p = run(hma, "eval", "--config", str(cfg), "--seed", "4", "--ablation", "HMA", "--data", str(tmp / "data.csv"),
                "--checkpoint", str(tmp / "t/HMA-seed4/checkpoint.hma"), "--out", str(tmp / "e2"))
        check(p.returncode == 0 and rows(tmp / "e2/eval_metrics.csv") == evaluated,
              "eval on exported CSV equals eval on regenerated data")

        p = run(hma, "dump-attn", "--config", str(cfg), "--seed", "4", "--ablation", "HMA", "--rows", "5",
                "--checkpoint", str(tmp / "t/HMA-seed4/checkpoint.hma"), "--out", str(tmp / "d"))
        check(p.returncode == 0, "dump-attn exits 0")
        attn = rows(tmp / "d/attn.csv")
        check(list(attn[0].keys()) == ["layer_tag", "query_index", "key_index", "head", "score"], "attn.csv header")
        tags = {r["layer_tag"] for r in attn}
        check(tags == {"rma", "sma"}, f"attention from both memory reads ({sorted(tags)})")
        sums = {}
        for r in attn:
            k = (r["layer_tag"], r["head"], r["query_index"])
            sums[k] = sums.get(k, 0.0) + float(r["score"])
        check(all(abs(s - 1) < 1e-6 for s in sums.values()), "dumped attention rows sum to one")
        sma_keys = {int(r["key_index"]) for r in attn if r["layer_tag"] == "sma"}
        check(len(sma_keys) == 5 + 2 * 2, "sma keys = batch + n*m2 slots")
        check(len(rows(tmp / "d/logits.csv")) == 5, "logits.csv has one row per datapoint")

        p = run(hma, "sweep", "--config", str(cfg), "--out", str(tmp / "s"), "--axis", "m1", "--values", "0,16")
        check(p.returncode == 0 and len(rows(tmp / "s/sweep.csv")) == 2 * 1 * 2 * 4, "sweep row count")

        bad = tmp / "bad.ini"
        bad.write_text("[model]\nwidth = 3\n")
        p = run(hma, "train", "--config", str(bad), "--out", str(tmp / "b"))
        check(p.returncode == 2 and "line 2" in p.stderr, "unknown key exits 2 naming the line")
        p = run(hma, "train", "--config", str(cfg), "--ablation", "NOPE", "--out", str(tmp / "b"))
        check(p.returncode == 2, "unknown ablation exits 2")

        nan = tmp / "nan.ini"
        nan.write_text(BASE.replace("batch_size = 16", "batch_size = 16\nlr = 1e30"))
        p = run(hma, "train", "--config", str(nan), "--out", str(tmp / "n"), "--ablation", "BACKBONE")
        check(p.returncode == 3 and "non-finite" in p.stderr, "diverging run exits 3 with a diagnostic")

        blocker = tmp / "file"
        blocker.write_text("x")
        p = run(hma, "train", "--config", str(cfg), "--out", str(blocker / "sub"))
        check(p.returncode == 1 and p.stderr.startswith("error:"), "unwritable output exits 1")

        p = run(hma, "eval", "--config", str(cfg))
        check(p.returncode != 0, "eval without --checkpoint is rejected")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
