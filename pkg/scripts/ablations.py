"""Polytope counts on F2 for the refinement ablations, one row per seed.

Columns: default (priority queue, greedy split, optimised slopes), random
leaf selection, fixed slopes, longest-edge split.  Counts are summed over
the four one-vs-rest labels.
"""
import argparse
import json

from preimage.approximator import LossConfig
from preimage.fixtures import F2_REGION, f2, f2_specs
from preimage.refinement import RefineConfig, approximate_preimage

VARIANTS = {
    "default": {},
    "random_selection": {"selection": "random"},
    "no_alpha_opt": {"loss": LossConfig(optimize=False)},
    "longest_edge": {"split_strategy": "longest_edge"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS), choices=list(VARIANTS))
    ap.add_argument("--json", help="also write the table as JSON")
    args = ap.parse_args()

    net, rows = f2(), []
    print("seed  " + "  ".join(f"{v:>16}" for v in args.variants))
    for seed in range(args.seeds):
        row = {"seed": seed}
        for name in args.variants:
            total = 0
            for spec in f2_specs():
                dup, rep, _ = approximate_preimage(net, spec, F2_REGION,
                                                   RefineConfig(seed=seed, **VARIANTS[name]))
                total += len(dup)
            row[name] = total
        rows.append(row)
        print(f"{seed:4d}  " + "  ".join(f"{row[v]:16d}" for v in args.variants), flush=True)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
