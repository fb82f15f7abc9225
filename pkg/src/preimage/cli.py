"""Command-line front end: ``preimage {approximate,verify,oracle}``.

Exit codes: 0 on success (target reached / property certified), 1 on bad
arguments or unreadable files, 2 when the iteration budget runs out
(approximation short of target, verification ``Unknown``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .approximator import InputConstraints, LossConfig
from .errors import InputError, PreimageError
from .geometry import (DisjointPolytopeUnion, Hyperrectangle, Polytope, enumerate_vertices,
                       exact_volume, outer_box)
from .model import Network, OutputSpec, load_network, one_vs_rest
from .oracle import exact_preimage
from .quantverify import load_property, verify
from .refinement import RefineConfig, init, run

log = logging.getLogger("preimage")

EXIT_OK, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2
_SPLITS = {"greedy": "greedy", "longest": "longest_edge", "random": "random"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_region(text: str) -> Hyperrectangle:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise InputError(f"bad --region {text!r}: {exc}") from exc
    if len(vals) == 0 or len(vals) % 2:
        raise InputError("--region expects lo1,hi1,...,loD,hiD")
    return Hyperrectangle(vals[0::2], vals[1::2])


def load_spec(path, n_outputs: int) -> OutputSpec:
    """Spec file: a list of ``{"c": [...], "d": x}`` rows, or ``{"label": k}``."""
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, dict) and "label" in obj:
        return one_vs_rest(int(obj["label"]), n_outputs)
    if isinstance(obj, dict):
        obj = obj.get("output_spec", obj)
    return OutputSpec.from_json(obj)


def load_input_polytope(path) -> Polytope:
    with open(path) as fh:
        obj = json.load(fh)
    if "box" in obj:
        return Polytope.from_json(obj)
    return Polytope(Hyperrectangle.from_json(obj))


def _input_domain(args) -> tuple[Hyperrectangle, InputConstraints | None]:
    if args.region and args.input_polytope:
        raise InputError("give either --region or --input-polytope, not both")
    if args.region:
        return parse_region(args.region), None
    if args.input_polytope:
        poly = load_input_polytope(args.input_polytope)
        if poly.n_halfspaces == 0:
            return poly.box, None
        return outer_box(poly), InputConstraints(np.asarray(poly.A), np.asarray(poly.b))
    raise InputError("an input domain is required (--region or --input-polytope)")


def _alpha_init(text: str):
    if text == "adaptive":
        return text
    try:
        val = float(text)
    except ValueError as exc:
        raise InputError(f"--alpha-init must be 'adaptive' or a number, got {text!r}") from exc
    if not 0.0 <= val <= 1.0:
        raise InputError("--alpha-init must lie in [0, 1]")
    return val


def refine_config(args) -> RefineConfig:
    loss = LossConfig(n_samples=args.samples, optimize=args.alpha_opt == "on",
                      alpha_init=_alpha_init(args.alpha_init))
    return RefineConfig(target_coverage=args.coverage, max_iterations=args.max_iters,
                        split_strategy=_SPLITS[args.split], selection=args.selection,
                        seed=args.seed, workers=args.workers, loss=loss)


def _ordered_vertices(p: Polytope) -> np.ndarray:
    """Vertices of a 2-D polytope in counter-clockwise order."""
    v = enumerate_vertices(p)
    if v.shape[0] < 3:
        return v
    c = v.mean(axis=0)
    return v[np.argsort(np.arctan2(v[:, 1] - c[1], v[:, 0] - c[0]), kind="stable")]


def write_plot_data(dup: DisjointPolytopeUnion, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["polytope", "vertex", "x1", "x2"])
        for i, p in enumerate(dup):
            for j, (x1, x2) in enumerate(_ordered_vertices(p)):
                w.writerow([i, j, repr(float(x1)), repr(float(x2))])


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--network", required=True, help="network file (.json or .nnet)")
    p.add_argument("--format", choices=["json", "nnet"], default=None,
                   help="network format; guessed from the suffix when omitted")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _domain(p: argparse.ArgumentParser):
    p.add_argument("--region", help="input box as lo1,hi1,...,loD,hiD")
    p.add_argument("--input-polytope", help="JSON polytope or box file for the input set")
    p.add_argument("--spec", required=True, help="output spec JSON file")


def _refine_opts(p: argparse.ArgumentParser):
    p.add_argument("--coverage", type=float, default=0.9, help="target coverage r")
    p.add_argument("--max-iters", type=int, default=500, help="iteration budget R")
    p.add_argument("--samples", type=int, default=10000, help="samples per subregion")
    p.add_argument("--split", choices=sorted(_SPLITS), default="greedy")
    p.add_argument("--selection", choices=["priority", "random"], default="priority")
    p.add_argument("--alpha-opt", choices=["on", "off"], default="on")
    p.add_argument("--alpha-init", default="adaptive",
                   help="initial lower-relaxation slope: 'adaptive' or a value in [0, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="preimage", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ap = sub.add_parser("approximate", help="under-approximate a restricted preimage")
    _common(ap)
    _domain(ap)
    _refine_opts(ap)
    ap.add_argument("--track-exact", action="store_true",
                    help="record the exact union volume at every iteration (low dimension only)")

    vp = sub.add_parser("verify", help="verify a quantitative property file")
    _common(vp)
    vp.add_argument("--property", required=True, help="property JSON file")
    _refine_opts(vp)

    op = sub.add_parser("oracle", help="exact preimage by activation-pattern enumeration")
    _common(op)
    _domain(op)
    return parser


def cmd_approximate(args, net: Network, out: Path) -> int:
    root, extra = _input_domain(args)
    spec = load_spec(args.spec, net.output_dim)
    cfg = refine_config(args)
    state = init(net, spec, root, cfg, extra)

    callback, series = None, []
    if args.track_exact:
        cache: dict = {}

        def callback(st):
            # called once per history entry, in order
            for node in st.nodes:
                if node.path not in cache:
                    cache[node.path] = exact_volume(node.approx.polytope)
            series.append(float(sum(cache[n.path] for n in st.nodes)))

    dup, report = run(state, callback)
    for entry, vol in zip(report.history, series):
        entry["exact_volume"] = vol
    (out / "dup.json").write_text(dup.dumps() + "\n")
    _write_json(out / "report.json", report.to_json(str(out / "dup.json")))
    if root.dim == 2:
        write_plot_data(dup, out / "polytopes.csv")
    log.info("%d polytopes, coverage estimate %.4f after %d iterations",
             len(dup), state.coverage_estimate(), report.iterations)
    return EXIT_OK if report.reached_target else EXIT_BUDGET


def cmd_verify(args, net: Network, out: Path) -> int:
    prop = load_property(args.property)
    cfg = refine_config(args)
    verdict = verify(net, prop, args.max_iters, cfg)
    _write_json(out / "verdict.json", {**verdict.to_json(), "p": prop.proportion})
    log.info("verdict %s (certified fraction %.6f)", verdict.outcome, verdict.certified_fraction)
    return EXIT_OK if verdict.outcome == "True" else EXIT_BUDGET


def cmd_oracle(args, net: Network, out: Path) -> int:
    if args.input_polytope:
        raise InputError("the oracle works on boxes; use --region")
    root, _ = _input_domain(args)
    spec = load_spec(args.spec, net.output_dim)
    dup = exact_preimage(net, root, spec)
    vols = [exact_volume(p) for p in dup]
    (out / "oracle_dup.json").write_text(dup.dumps() + "\n")
    _write_json(out / "oracle.json", {"exact_volume": float(sum(vols)),
                                       "fraction": float(sum(vols)) / root.volume,
                                       "n_polytopes": len(dup),
                                       "volumes": vols})
    if root.dim == 2:
        write_plot_data(dup, out / "oracle_polytopes.csv")
    return EXIT_OK


_COMMANDS = {"approximate": cmd_approximate, "verify": cmd_verify, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        net = load_network(args.network, args.format)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](args, net, out)
    except (PreimageError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"preimage: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
