"""Unconditional annulus: the admissible set must wrap around the inner disk.

Usage: python3 scripts/annulus.py [--out DIR] [--restarts 4]
"""
import argparse
from pathlib import Path

from cfi.data import gen_annulus, split
from cfi.experiments import PRESETS, largest_certified, sip_config, train_restarts
from cfi.plots import plot_sets
from cfi.sip import annulus_g, solve_cfi, write_result
from cfi.usets import LatentBall, empirical_coverage

p = argparse.ArgumentParser()
p.add_argument("--out", default="runs/annulus")
p.add_argument("--n", type=int, default=100000)
p.add_argument("--restarts", type=int, default=4)
p.add_argument("--seed", type=int, default=0)
args = p.parse_args()
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)

ds = gen_annulus(args.n, rng=args.seed)
tr, va = split(ds, 0.15, rng=args.seed)
fits = train_restarts(tr, va, PRESETS["annulus"], range(args.seed, args.seed + args.restarts))
fit, res = largest_certified(fits, lambda f: solve_cfi(f, annulus_g, [0.0], sip_config("annulus")))
flow = fit.flow
flow.save(out / "model.json")
write_result(res, out / "result.json")
test = gen_annulus(20000, rng=args.seed + 1000)
emp = empirical_coverage(LatentBall(res.delta, flow), test, [0.0])
print(f"delta {res.delta:.4f}  analytical {res.analytical_coverage:.3f}  empirical {emp:.3f}  "
      f"iterations {len(res.state.iterations)}")
plot_sets([res.to_dict()], flow, test, annulus_g, out / "annulus.svg", extent=(-1.6, 1.6, -1.6, 1.6))
