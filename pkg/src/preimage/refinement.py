"""Anytime refinement of the polytope union by input splitting.

The input box is split into a binary tree of sub-boxes.  Every leaf owns one
polytope under-approximation; the leaves live in a max-priority queue keyed on
the estimated volume the leaf's polytope still misses.  Each step pops the
leaf with the largest gap, bisects it, and re-approximates the two halves.
"""
from __future__ import annotations

import heapq
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .approximator import (InputConstraints, LossConfig, RegionApproximation,
                           approximate_region, with_preimage_estimate)
from .errors import InputError, RefinementError
from .geometry import (DisjointPolytopeUnion, Hyperrectangle, SeededSampler, bisect,
                       derive_seed)
from .model import Network, OutputSpec, append_spec_rows

log = logging.getLogger(__name__)

SPLIT_STRATEGIES = ("greedy", "longest_edge", "random")
SELECTIONS = ("priority", "random")

# spawn-key prefixes for auxiliary RNG streams; node paths only use 0/1
_SPLIT_STREAM = 2
_SELECT_STREAM = 3


@dataclass(frozen=True)
class RefineConfig:
    target_coverage: float = 0.9
    max_iterations: int = 500
    split_strategy: str = "greedy"
    selection: str = "priority"
    seed: int = 0
    workers: int = 1
    loss: LossConfig = field(default_factory=LossConfig)
    # re-estimate the preimage volume from the leaves' own samples each step
    # instead of fixing it from the root sample set
    stratified_target: bool = False

    def __post_init__(self):
        if not 0.0 < self.target_coverage <= 1.0:
            raise InputError("target coverage must lie in (0, 1]")
        if self.max_iterations < 0:
            raise InputError("max_iterations must be non-negative")
        if self.split_strategy not in SPLIT_STRATEGIES:
            raise InputError(f"unknown split strategy {self.split_strategy!r}")
        if self.selection not in SELECTIONS:
            raise InputError(f"unknown selection rule {self.selection!r}")
        if self.workers < 1:
            raise InputError("workers must be at least 1")


@dataclass
class SubregionNode:
    approx: RegionApproximation
    priority: float
    depth: int
    path: tuple = ()

    @property
    def region(self) -> Hyperrectangle:
        return self.approx.region

    @property
    def est_polytope_volume(self) -> float:
        return self.approx.est_polytope_frac * self.region.volume


@dataclass
class RefinementState:
    net: Network
    spec: OutputSpec
    spec_net: Network
    root: Hyperrectangle
    cfg: RefineConfig
    extra: InputConstraints | None
    queue: list = field(default_factory=list)
    iterations: int = 0
    target_volume: float = 0.0
    est_preimage_volume_root: float = 0.0
    fixed_target: bool = False
    _seq: int = 0

    @property
    def nodes(self) -> list[SubregionNode]:
        return [entry[2] for entry in self.queue]

    @property
    def n_polytopes(self) -> int:
        return len(self.queue)

    def estimated_volume(self) -> float:
        return float(sum(n.est_polytope_volume for n in self.nodes))

    def estimated_preimage_volume(self) -> float:
        """Stratified estimate: leaf preimage fractions weighted by leaf volume.

        Every leaf carries its own sample set, so this sharpens the single
        root estimate as the tree grows.
        """
        return float(sum(n.approx.est_preimage_frac * n.region.volume for n in self.nodes))

    def preimage_volume_estimate(self) -> float:
        if self.cfg.stratified_target:
            return self.estimated_preimage_volume()
        return self.est_preimage_volume_root

    def coverage_estimate(self) -> float:
        pre = self.preimage_volume_estimate()
        if pre <= 0.0:
            return 1.0
        return self.estimated_volume() / pre

    def update_target(self):
        if not self.fixed_target:
            self.target_volume = self.cfg.target_coverage * self.preimage_volume_estimate()

    def dup(self) -> DisjointPolytopeUnion:
        ordered = sorted(self.nodes, key=lambda n: n.path)
        return DisjointPolytopeUnion(tuple(n.approx.polytope for n in ordered))

    def push(self, node: SubregionNode):
        heapq.heappush(self.queue, (-node.priority, self._seq, node))
        self._seq += 1


@dataclass
class RunReport:
    iterations: int
    history: list
    reached_target: bool
    empty_target: bool
    target_volume: float
    est_preimage_volume: float
    n_polytopes: int
    elapsed_ms: float

    def to_json(self, dup_path: str | None = None) -> dict:
        out = {
            "iterations": self.iterations,
            "history": self.history,
            "reached_target": self.reached_target,
            "empty_target": self.empty_target,
            "target_volume": self.target_volume,
            "est_preimage_volume": self.est_preimage_volume,
            "n_polytopes": self.n_polytopes,
            "elapsed_ms": self.elapsed_ms,
        }
        if dup_path is not None:
            out["dup_path"] = dup_path
        return out


def _priority(approx: RegionApproximation, root: Hyperrectangle) -> float:
    return approx.gap * approx.region.volume / root.volume


def _make_node(approx: RegionApproximation, root: Hyperrectangle, path: tuple) -> SubregionNode:
    return SubregionNode(approx, _priority(approx, root), len(path), path)


def _approximate(state: RefinementState, region: Hyperrectangle, path: tuple,
                 estimate_preimage: bool = True) -> RegionApproximation:
    sampler = SeededSampler(derive_seed(state.cfg.seed, path))
    return approximate_region(region, state.spec_net, state.cfg.loss, sampler,
                              state.extra, estimate_preimage)


def init(net: Network, spec: OutputSpec, root: Hyperrectangle, cfg: RefineConfig,
         extra: InputConstraints | None = None,
         target_volume: float | None = None) -> RefinementState:
    if root.dim != net.input_dim:
        raise InputError("root box dimension does not match network input")
    if not np.all(root.widths > 0):
        raise InputError("root box must be non-degenerate")
    spec_net = append_spec_rows(net, spec)
    state = RefinementState(net, spec, spec_net, root, cfg, extra)
    approx = _approximate(state, root, ())
    state.est_preimage_volume_root = approx.est_preimage_frac * root.volume
    state.push(_make_node(approx, root, ()))
    if target_volume is None:
        state.update_target()
    else:
        state.target_volume, state.fixed_target = float(target_volume), True
    return state


def _splittable(region: Hyperrectangle) -> list[int]:
    return [i for i in range(region.dim) if region.upper[i] > region.lower[i]]


def _map(state: RefinementState, fn, items):
    if state.cfg.workers == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=state.cfg.workers) as pool:
        return list(pool.map(fn, items))


def _aux_rng(state: RefinementState, stream: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(state.cfg.seed, (stream, state.iterations)))


def _candidate_pairs(state: RefinementState, node: SubregionNode, dims: list[int],
                     estimate_preimage: bool):
    def build(task):
        dim, side = task
        half = bisect(node.region, dim)[side]
        return _approximate(state, half, node.path + (side,), estimate_preimage)

    tasks = [(dim, side) for dim in dims for side in (0, 1)]
    out = _map(state, build, tasks)
    return {dim: (out[2 * k], out[2 * k + 1]) for k, dim in enumerate(dims)}


def select_split_feature(state: RefinementState, node: SubregionNode,
                         strategy: str | None = None):
    """Dimension to bisect, plus the child approximations when already built."""
    strategy = strategy or state.cfg.split_strategy
    dims = _splittable(node.region)
    if not dims:
        raise RefinementError("subregion is degenerate in every dimension")
    if strategy == "longest_edge":
        widths = node.region.widths
        return int(dims[int(np.argmax(widths[dims]))]), None
    if strategy == "random":
        return int(dims[int(_aux_rng(state, _SPLIT_STREAM).integers(len(dims)))]), None
    if strategy != "greedy":
        raise InputError(f"unknown split strategy {strategy!r}")
    pairs = _candidate_pairs(state, node, dims, estimate_preimage=False)
    scores = [pairs[d][0].est_polytope_frac * pairs[d][0].region.volume
              + pairs[d][1].est_polytope_frac * pairs[d][1].region.volume for d in dims]
    # ties (typically all-zero scores on heavily unstable boxes) go to the
    # widest edge, then the lowest index, so the box cannot degenerate into slivers
    widths = node.region.widths
    pick = max(dims, key=lambda d: (scores[dims.index(d)], widths[d], -d))
    return pick, pairs[pick]


def _pop(state: RefinementState) -> SubregionNode:
    if not state.queue:
        raise RefinementError("priority queue is empty")
    if state.cfg.selection == "random":
        idx = int(_aux_rng(state, _SELECT_STREAM).integers(len(state.queue)))
        entry = state.queue.pop(idx)
        heapq.heapify(state.queue)
        return entry[2]
    return heapq.heappop(state.queue)[2]


def refine_step(state: RefinementState) -> RefinementState:
    node = _pop(state)
    dim, pair = select_split_feature(state, node)
    if pair is None:
        halves = bisect(node.region, dim)
        pair = tuple(_map(state, lambda side: _approximate(state, halves[side], node.path + (side,)),
                          [0, 1]))
    else:
        pair = tuple(with_preimage_estimate(a, state.spec_net, state.cfg.loss, state.extra)
                     for a in pair)
    for side, approx in enumerate(pair):
        state.push(_make_node(approx, state.root, node.path + (side,)))
    state.iterations += 1
    state.update_target()
    return state


def run(state: RefinementState, callback=None) -> tuple[DisjointPolytopeUnion, RunReport]:
    """Refine until the estimated union volume reaches the target or the budget runs out.

    ``callback(state)`` is invoked after initialisation and after every step.
    """
    start = time.perf_counter()
    history = []

    def record():
        history.append({
            "iteration": state.iterations,
            "coverage_est": state.coverage_estimate(),
            "est_volume": state.estimated_volume(),
            "target_volume": state.target_volume,
            "n_polytopes": state.n_polytopes,
            "elapsed_ms": (time.perf_counter() - start) * 1e3,
        })
        if callback is not None:
            callback(state)

    empty = state.est_preimage_volume_root <= 0.0
    if empty:
        log.info("estimated preimage volume is zero; nothing to approximate")
    record()
    while (not empty and state.estimated_volume() < state.target_volume
           and state.iterations < state.cfg.max_iterations):
        refine_step(state)
        record()
    reached = empty or state.estimated_volume() >= state.target_volume
    report = RunReport(state.iterations, history, reached, empty, state.target_volume,
                       state.preimage_volume_estimate(), state.n_polytopes,
                       (time.perf_counter() - start) * 1e3)
    return state.dup(), report


def approximate_preimage(net: Network, spec: OutputSpec, root: Hyperrectangle,
                         cfg: RefineConfig | None = None, callback=None):
    """Convenience wrapper: ``init`` followed by ``run``."""
    cfg = cfg or RefineConfig()
    state = init(net, spec, root, cfg)
    dup, report = run(state, callback)
    return dup, report, state
