"""Polytope count on F2 as a function of the per-subregion sample size N."""
import argparse

import numpy as np

from preimage.approximator import LossConfig
from preimage.fixtures import F2_REGION, f2, f2_specs
from preimage.refinement import RefineConfig, approximate_preimage


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 10000])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    net = f2()
    for n in args.sizes:
        totals = []
        for seed in range(args.seeds):
            cfg = RefineConfig(seed=seed, loss=LossConfig(n_samples=n))
            totals.append(sum(len(approximate_preimage(net, s, F2_REGION, cfg)[0])
                              for s in f2_specs()))
        print(f"N={n:6d}  mean polytopes {np.mean(totals):8.1f}  per seed {totals}", flush=True)


if __name__ == "__main__":
    main()
