"""Coverage over a grid of flow sizes on two-moons, several seeds each.

Thin wrapper around ``cfi coverage --sweep-blocks ... --sweep-hidden ...``.
Usage: python3 scripts/coverage_sweep.py [--out DIR] [--seeds 5]
"""
import argparse
import sys
from pathlib import Path

from cfi.cli import main

p = argparse.ArgumentParser()
p.add_argument("--out", default="runs/sweep")
p.add_argument("--seeds", type=int, default=5)
p.add_argument("--blocks", default="1,3,5")
p.add_argument("--hidden", default="4,8,12")
p.add_argument("--n", type=int, default=20000)
args = p.parse_args()
out = Path(args.out)

code = main(["gen-data", "two-moons", "--n", str(args.n), "--out", str(out), "--name", "train.csv"])
code = code or main(["gen-data", "two-moons", "--n", "20000", "--seed", "999", "--out", str(out), "--name", "test.csv"])
code = code or main(["coverage", "--problem", "two-moons", "--data", str(out / "train.csv"),
                     "--test-data", str(out / "test.csv"), "--context", "0", "--context", "1",
                     "--sweep-blocks", args.blocks, "--sweep-hidden", args.hidden,
                     "--seeds", str(args.seeds), "--batch-size", "512", "--out", str(out)])
code = code or main(["plot", "coverage", "--table", str(out / "coverage.csv"), "--out", str(out)])
sys.exit(code)
