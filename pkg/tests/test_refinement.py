import json
import math

import numpy as np
import pytest

from helpers import ExactTracker, unsound_count
from preimage.approximator import LossConfig
from preimage.errors import InputError, RefinementError
from preimage.fixtures import F1_REGION, F1_SPEC, F2_REGION, f1, f2, f2_specs, identity_net
from preimage.geometry import Hyperrectangle, bisect
from preimage.model import Layer, Network, OutputSpec
from preimage.oracle import exact_preimage_volume
from preimage.refinement import (RefineConfig, approximate_preimage, init, refine_step, run,
                                 select_split_feature)

FAST = LossConfig(n_samples=2000, steps=10)
FIXED = LossConfig(optimize=False, alpha_init=0.5)


def test_config_validation():
    for bad in [dict(target_coverage=0.0), dict(target_coverage=1.5), dict(max_iterations=-1),
                dict(split_strategy="widest"), dict(selection="fifo"), dict(workers=0)]:
        with pytest.raises(InputError):
            RefineConfig(**bad)


def test_init_rejects_degenerate_root():
    with pytest.raises(InputError):
        init(f1(), F1_SPEC, Hyperrectangle([0, 0], [0, 1]), RefineConfig())
    with pytest.raises(InputError):
        init(f1(), F1_SPEC, Hyperrectangle([0], [1]), RefineConfig())


def test_linear_net_exits_immediately():
    spec = OutputSpec([[1.0, -1.0]], [0.0])
    for r in (0.5, 0.9, 1.0):
        st = init(identity_net(2), spec, F1_REGION, RefineConfig(target_coverage=r))
        assert st.coverage_estimate() == 1.0
        dup, rep = run(st)
        assert rep.iterations == 0 and len(dup) == 1 and rep.reached_target


def test_init_deterministic():
    a = init(f1(), F1_SPEC, F1_REGION, RefineConfig(seed=7))
    b = init(f1(), F1_SPEC, F1_REGION, RefineConfig(seed=7))
    assert a.dup().dumps() == b.dup().dumps()
    assert a.est_preimage_volume_root == b.est_preimage_volume_root


def test_empty_preimage_terminates():
    spec = OutputSpec([[1.0]], [-100.0])
    assert exact_preimage_volume(f1(), F1_REGION, spec) == 0.0
    dup, rep, st = approximate_preimage(f1(), spec, F1_REGION)
    assert st.est_preimage_volume_root == 0.0
    assert rep.empty_target and rep.iterations == 0


# ---------------------------------------------------------------- split selection

def test_longest_edge():
    net = Network((Layer(np.eye(2), np.zeros(2), False),), 2)
    st = init(net, OutputSpec([[1.0, 0.0]], [0.0]), Hyperrectangle([0, 0], [4, 1]), RefineConfig())
    assert select_split_feature(st, st.nodes[0], "longest_edge") == (0, None)


def test_greedy_matches_exhaustive_evaluation():
    # x2 >= 0.3 only depends on x2 on a ReLU net; check greedy against re-evaluation
    net = Network((Layer([[0.0, 1.0], [1.0, 0.0]], [-0.3, 0.0], True),
                   Layer([[1.0, 0.0]], [0.0], False)), 2)
    spec = OutputSpec([[1.0]], [-0.2])
    root = Hyperrectangle([-1, -1], [1, 1])
    st = init(net, spec, root, RefineConfig(loss=FAST))
    dim, pair = select_split_feature(st, st.nodes[0])
    from preimage.refinement import _approximate
    scores = []
    for d in range(2):
        halves = bisect(root, d)
        scores.append(sum(_approximate(st, halves[s], (s,)).est_polytope_frac * halves[s].volume
                          for s in (0, 1)))
    assert dim == int(np.argmax(scores))
    assert scores[dim] > min(scores)
    assert pair[0].region == bisect(root, dim)[0]


def test_greedy_tie_goes_to_dim_zero():
    # symmetric box, spec true everywhere: every candidate pair scores the whole box
    net = Network((Layer([[1.0, 1.0]], [0.0], True), Layer([[1.0]], [0.0], False)), 2)
    st = init(net, OutputSpec([[1.0]], [1.0]), Hyperrectangle([-1, -1], [1, 1]), RefineConfig())
    dim, _ = select_split_feature(st, st.nodes[0])
    assert dim == 0


def test_greedy_tie_prefers_wider_edge():
    net = Network((Layer([[1.0, 1.0]], [0.0], True), Layer([[1.0]], [0.0], False)), 2)
    st = init(net, OutputSpec([[1.0]], [1.0]), Hyperrectangle([0, 0], [1, 3]), RefineConfig())
    dim, _ = select_split_feature(st, st.nodes[0])
    assert dim == 1


def test_degenerate_node_raises():
    st = init(f1(), F1_SPEC, F1_REGION, RefineConfig())
    node = st.nodes[0]
    from dataclasses import replace
    flat = replace(node.approx, region=Hyperrectangle([0, 0], [0, 0]))
    node = replace(node, approx=flat)
    with pytest.raises(RefinementError):
        select_split_feature(st, node, "longest_edge")


def test_random_split_deterministic():
    cfg = RefineConfig(split_strategy="random", seed=3, max_iterations=6, loss=FAST)
    a, _, _ = approximate_preimage(f2(), f2_specs()[0], F2_REGION, cfg)
    b, _, _ = approximate_preimage(f2(), f2_specs()[0], F2_REGION, cfg)
    assert a.dumps() == b.dumps()


# ---------------------------------------------------------------- refine_step

def _leaf_boxes(st):
    return sorted((tuple(n.region.lower), tuple(n.region.upper)) for n in st.nodes)


def test_step_replaces_parent_by_its_bisection():
    st = init(f2(), f2_specs()[0], F2_REGION, RefineConfig(loss=FAST, split_strategy="longest_edge"))
    parent = st.nodes[0].region
    refine_step(st)
    halves = bisect(parent, 0)
    assert _leaf_boxes(st) == sorted((tuple(h.lower), tuple(h.upper)) for h in halves)
    assert st.n_polytopes == 2


@pytest.mark.parametrize("strategy", ["greedy", "longest_edge", "random"])
def test_tiling_and_soundness_every_step(strategy):
    net, spec = f2(), f2_specs()[2]
    st = init(net, spec, F2_REGION, RefineConfig(loss=FAST, split_strategy=strategy, seed=1))
    for it in range(12):
        n_before = st.n_polytopes
        refine_step(st)
        assert st.n_polytopes == n_before + 1
        dup = st.dup()
        assert dup.boxes_disjoint()
        assert sum(p.box.volume for p in dup) == pytest.approx(F2_REGION.volume, rel=1e-12)
        assert unsound_count(dup, net, spec, F2_REGION, 5000, it) == 0


def test_exact_volume_monotone_with_fixed_alpha():
    track = ExactTracker()
    st = init(f2(), f2_specs()[3], F2_REGION,
              RefineConfig(target_coverage=1.0, max_iterations=15, loss=FIXED))
    run(st, track)
    assert np.all(np.diff(track.series) >= -1e-12)


def test_child_priority_bounded_by_parent():
    # Hoeffding: each fraction estimate is within t of its mean w.p. 1 - 1e-3
    n = 10 ** 4
    t = math.sqrt(math.log(2 / 1e-3) / (2 * n))
    st = init(f2(), f2_specs()[0], F2_REGION, RefineConfig(loss=FIXED, split_strategy="longest_edge"))
    for _ in range(10):
        parent = max(st.nodes, key=lambda nd: nd.priority)
        refine_step(st)
        kids = [nd for nd in st.nodes if nd.path[:-1] == parent.path and len(nd.path) == len(parent.path) + 1]
        assert len(kids) == 2
        slack = 2 * t * parent.region.volume / F2_REGION.volume
        for k in kids:
            assert k.priority <= parent.priority + slack


def test_priority_formula():
    st = init(f2(), f2_specs()[1], F2_REGION, RefineConfig(loss=FAST))
    for _ in range(4):
        refine_step(st)
    for nd in st.nodes:
        a = nd.approx
        want = max(0.0, a.est_preimage_frac - a.est_polytope_frac) * nd.region.volume / F2_REGION.volume
        assert nd.priority == pytest.approx(want, abs=1e-15)
        assert nd.priority >= 0.0


# ---------------------------------------------------------------- run

def test_f1_reaches_target_and_is_sound():
    dup, rep, st = approximate_preimage(f1(), F1_SPEC, F1_REGION, RefineConfig(seed=7))
    assert rep.reached_target
    assert st.coverage_estimate() >= 0.9
    assert dup.boxes_disjoint()
    assert unsound_count(dup, f1(), F1_SPEC, F1_REGION, 10 ** 5, 0) == 0


def test_zero_budget_returns_root_polytope():
    dup, rep, _ = approximate_preimage(f2(), f2_specs()[0], F2_REGION, RefineConfig(max_iterations=0))
    assert len(dup) == 1 and rep.iterations == 0
    assert dup.polytopes[0].box == F2_REGION


def test_history_and_report_json():
    seen = []
    cfg = RefineConfig(max_iterations=3, target_coverage=1.0, loss=FAST)
    dup, rep, _ = approximate_preimage(f2(), f2_specs()[0], F2_REGION, cfg, callback=seen.append)
    assert len(rep.history) == len(seen) == 4
    assert [h["n_polytopes"] for h in rep.history] == [1, 2, 3, 4]
    assert all(h["elapsed_ms"] >= 0 for h in rep.history)
    obj = json.loads(json.dumps(rep.to_json("out/dup.json")))
    assert obj["dup_path"] == "out/dup.json" and obj["iterations"] == 3


@pytest.mark.parametrize("strategy", ["greedy", "longest_edge"])
def test_worker_count_does_not_change_result(strategy):
    base = dict(max_iterations=8, loss=FAST, split_strategy=strategy, seed=5)
    a, _, _ = approximate_preimage(f2(), f2_specs()[0], F2_REGION, RefineConfig(workers=1, **base))
    b, _, _ = approximate_preimage(f2(), f2_specs()[0], F2_REGION, RefineConfig(workers=4, **base))
    assert a.dumps() == b.dumps()


def test_random_selection_runs_and_is_sound():
    net, spec = f2(), f2_specs()[1]
    cfg = RefineConfig(selection="random", seed=2, max_iterations=20, loss=FAST)
    dup, rep, _ = approximate_preimage(net, spec, F2_REGION, cfg)
    assert dup.boxes_disjoint()
    assert unsound_count(dup, net, spec, F2_REGION, 10 ** 4, 1) == 0


def test_stratified_target_tracks_leaves():
    cfg = RefineConfig(stratified_target=True, max_iterations=5, target_coverage=1.0, loss=FAST)
    _, rep, st = approximate_preimage(f2(), f2_specs()[0], F2_REGION, cfg)
    assert st.target_volume == pytest.approx(st.estimated_preimage_volume())
    assert rep.est_preimage_volume == pytest.approx(st.estimated_preimage_volume())
