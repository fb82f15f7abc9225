"""Coverage and polytope count per one-vs-rest label on the F2 classifier.

For each label the refinement is run at the default configuration; the table
shows the estimate-driven stopping point and the exact coverage there, plus
the first iteration at which the exact coverage crosses the target.
"""
import argparse
import time

from preimage.fixtures import F2_REGION, f2, f2_specs
from preimage.geometry import exact_volume
from preimage.oracle import exact_preimage_volume, linear_regions
from preimage.refinement import RefineConfig, init, refine_step


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--coverage", type=float, default=0.9)
    ap.add_argument("--max-iters", type=int, default=500)
    args = ap.parse_args()

    net = f2()
    regions = linear_regions(net, F2_REGION)
    print("label  oracle_frac  stop_polys  stop_cov  first_polys_at_target  seconds")
    for k, spec in enumerate(f2_specs()):
        truth = exact_preimage_volume(net, F2_REGION, spec, regions=regions)
        cfg = RefineConfig(seed=args.seed, target_coverage=args.coverage,
                           max_iterations=args.max_iters)
        t = time.perf_counter()
        st = init(net, spec, F2_REGION, cfg)
        cache = {}

        def exact_cov():
            for n in st.nodes:
                if n.path not in cache:
                    cache[n.path] = exact_volume(n.approx.polytope)
            return sum(cache[n.path] for n in st.nodes) / truth

        stop = first = None
        cov = exact_cov()
        while st.iterations < args.max_iters:
            if stop is None and st.estimated_volume() >= st.target_volume:
                stop = (st.n_polytopes, cov)
            if first is None and cov >= args.coverage:
                first = st.n_polytopes
            if stop is not None and first is not None:
                break
            refine_step(st)
            cov = exact_cov()
        stop = stop or (st.n_polytopes, cov)
        print(f"{k:5d}  {truth / F2_REGION.volume:11.4f}  {stop[0]:10d}  {stop[1]:8.4f}  "
              f"{first if first is not None else '-':>21}  {time.perf_counter() - t:7.1f}")


if __name__ == "__main__":
    main()
