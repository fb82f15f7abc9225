import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial import HalfspaceIntersection

from preimage.errors import CapabilityError, InputError
from preimage.geometry import (DisjointPolytopeUnion, Hyperrectangle, Polytope, SeededSampler,
                               bisect, contains, derive_seed, dup_exact_volume, enumerate_vertices,
                               estimate_volume_fraction, exact_volume, exact_volume_info,
                               is_full_dimensional, outer_box, sample_uniform)

UNIT2 = Hyperrectangle([0.0, 0.0], [1.0, 1.0])
TRIANGLE = Polytope(UNIT2, [[-1.0, -1.0]], [1.0])


def simplex(d):
    return Polytope(Hyperrectangle(np.zeros(d), np.ones(d)), -np.ones((1, d)), [1.0])


# ---------------------------------------------------------------- containers

def test_box_invariant():
    with pytest.raises(InputError):
        Hyperrectangle([1.0], [0.0])
    with pytest.raises(InputError):
        Hyperrectangle([0.0, 0.0], [1.0])


def test_contains_examples():
    assert contains(Polytope(UNIT2), [0.5, 0.5])
    half = Polytope(UNIT2, [[1.0, -1.0]], [0.0])
    assert not contains(half, [0.2, 0.8])
    assert contains(half, [0.4, 0.4])              # a.x + b == 0: closed set
    assert not contains(Polytope(UNIT2), [1.0 + 1e-12, 0.5])


def test_json_roundtrip():
    dup = DisjointPolytopeUnion((TRIANGLE, Polytope(Hyperrectangle([1, 0], [2, 1]))))
    back = DisjointPolytopeUnion.from_json(json.loads(dup.dumps()))
    assert back.dumps() == dup.dumps()
    obj = json.loads(dup.dumps())
    assert set(obj["polytopes"][0]) == {"box", "halfspaces"}
    assert obj["polytopes"][0]["halfspaces"][0] == {"a": [-1.0, -1.0], "b": 1.0}


def test_boxes_disjoint():
    a = Polytope(Hyperrectangle([0, 0], [1, 1]))
    b = Polytope(Hyperrectangle([1, 0], [2, 1]))        # shares a face only
    c = Polytope(Hyperrectangle([0.5, 0.5], [1.5, 1.5]))
    assert DisjointPolytopeUnion((a, b)).boxes_disjoint()
    assert not DisjointPolytopeUnion((a, b, c)).boxes_disjoint()


# ---------------------------------------------------------------- sampling

def test_sampling_inside_and_deterministic():
    s1 = sample_uniform(UNIT2, 4, SeededSampler(7))
    s2 = sample_uniform(UNIT2, 4, SeededSampler(7))
    assert s1.shape == (4, 2)
    assert np.all(UNIT2.contains(s1))
    np.testing.assert_array_equal(s1, s2)


def test_sampler_counter_resumes_stream():
    full = SeededSampler(3).uniform((6, 2))
    s = SeededSampler(3)
    s.uniform((2, 2))
    resumed = SeededSampler(3, counter=s.counter).uniform((4, 2))
    np.testing.assert_array_equal(full[2:], resumed)


def test_sampling_degenerate_box():
    pts = sample_uniform(Hyperrectangle([0.0, 0.0], [0.0, 1.0]), 100, SeededSampler(1))
    assert np.all(pts[:, 0] == 0.0)


def test_sampling_mean():
    pts = sample_uniform(Hyperrectangle([0.0], [2.0]), 10 ** 5, SeededSampler(11))
    assert abs(pts.mean() - 1.0) <= 0.01


def test_derive_seed_distinct_paths():
    seeds = {derive_seed(0, p) for p in [(), (0,), (1,), (0, 0), (0, 1), (1, 0)]}
    assert len(seeds) == 6
    assert derive_seed(5, (0, 1)) == derive_seed(5, (0, 1))


def test_estimate_volume_fraction_examples():
    samples = sample_uniform(UNIT2, 1000, SeededSampler(2))
    assert estimate_volume_fraction(Polytope(UNIT2), samples) == 1.0
    infeasible = Polytope(UNIT2, [[0.0, 0.0]], [-1.0])
    assert estimate_volume_fraction(infeasible, samples) == 0.0
    with pytest.raises(InputError):
        estimate_volume_fraction(Polytope(UNIT2), np.zeros((0, 2)))
    box = Hyperrectangle([-1, -1], [1, 1])
    half = Polytope(box, [[1.0, 0.0]], [0.0])
    est = estimate_volume_fraction(half, sample_uniform(box, 10 ** 5, SeededSampler(3)))
    assert abs(est - 0.5) <= 0.01


# ---------------------------------------------------------------- exact volume

def test_exact_volume_unit_cube():
    assert exact_volume(Polytope(Hyperrectangle(np.zeros(3), np.ones(3)))) == pytest.approx(1.0, rel=1e-12)


def test_exact_volume_triangle():
    assert exact_volume(TRIANGLE) == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_exact_volume_simplex(d):
    assert abs(exact_volume(simplex(d)) - 1.0 / math.factorial(d)) <= 1e-9


def test_exact_volume_empty_and_flat():
    assert exact_volume(Polytope(UNIT2, [[0.0, 0.0]], [-1.0])) == 0.0
    flat = Polytope(UNIT2, [[1.0, -1.0], [-1.0, 1.0]], [0.0, 0.0])     # the diagonal
    assert exact_volume(flat) == 0.0
    assert not is_full_dimensional(flat)
    assert exact_volume(Polytope(Hyperrectangle([0, 0], [0, 1]))) == 0.0


def test_exact_volume_cap():
    big = Polytope(Hyperrectangle(np.zeros(11), np.ones(11)))
    with pytest.raises(CapabilityError):
        exact_volume(big)
    assert exact_volume(big, cap=11) == pytest.approx(1.0)


def test_exact_volume_info_flags():
    info = exact_volume_info(TRIANGLE)
    assert not info.degenerate and info.volume == pytest.approx(0.5)


def test_dup_exact_volume():
    dup = DisjointPolytopeUnion((TRIANGLE, Polytope(Hyperrectangle([1, 0], [2, 1]))))
    assert dup_exact_volume(dup) == pytest.approx(1.5)


def _random_polytope(seed, d, m):
    rng = np.random.default_rng(seed)
    box = Hyperrectangle(-np.ones(d), np.ones(d))
    A = rng.normal(size=(m, d))
    b = rng.uniform(0.2, 1.0, m)          # origin strictly inside
    return Polytope(box, A, b)


def _scipy_volume(p):
    """Independent route: scipy's halfspace intersection around the origin."""
    from scipy.spatial import ConvexHull
    d = p.dim
    # scipy wants  A x + b <= 0
    hs = [np.append(-a, -b) for a, b in zip(p.A, p.b)]
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        hs.append(np.append(e, -p.box.upper[i]))
        hs.append(np.append(-e, p.box.lower[i]))
    hi = HalfspaceIntersection(np.array(hs), np.zeros(d))
    return ConvexHull(hi.intersections).volume


@given(st.integers(0, 10 ** 6), st.integers(2, 4), st.integers(1, 6))
def test_exact_volume_matches_halfspace_intersection(seed, d, m):
    p = _random_polytope(seed, d, m)
    assert exact_volume(p) == pytest.approx(_scipy_volume(p), rel=1e-9, abs=1e-12)


@given(st.integers(0, 10 ** 6), st.integers(2, 4), st.integers(0, 4))
def test_exact_volume_monotone_under_constraints(seed, d, m):
    p = _random_polytope(seed, d, m)
    rng = np.random.default_rng(seed + 1)
    q = p.with_halfspaces(rng.normal(size=(1, d)), rng.normal(size=1))
    assert exact_volume(q) <= exact_volume(p) + 1e-12


@given(st.integers(0, 10 ** 6), st.integers(2, 3))
def test_box_volume_is_product_of_edges(seed, d):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-5, 5, d)
    box = Hyperrectangle(lo, lo + rng.uniform(0.01, 4, d))
    assert exact_volume(Polytope(box)) == pytest.approx(box.volume, rel=1e-12)


def test_estimate_converges_to_exact():
    for seed in range(3):
        p = _random_polytope(seed, 2, 4)
        samples = sample_uniform(p.box, 10 ** 5, SeededSampler(seed))
        est = estimate_volume_fraction(p, samples)
        assert abs(est - exact_volume(p) / p.box.volume) <= 0.01


# ---------------------------------------------------------------- vertices and boxes

def _as_set(v):
    return {tuple(np.round(r, 9)) for r in v}


def test_vertices_box_and_triangle():
    assert len(enumerate_vertices(Polytope(UNIT2))) == 4
    assert _as_set(enumerate_vertices(TRIANGLE)) == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)}
    assert enumerate_vertices(Polytope(UNIT2, [[0.0, 0.0]], [-1.0])).shape[0] == 0


@given(st.integers(0, 10 ** 6), st.integers(1, 6))
def test_vertices_are_feasible_and_active(seed, m):
    p = _random_polytope(seed, 2, m)
    A = np.vstack([p.A, np.eye(2), -np.eye(2)])
    b = np.concatenate([p.b, -p.box.lower, p.box.upper])
    for v in enumerate_vertices(p):
        slack = A @ v + b
        assert slack.min() >= -1e-8
        assert np.sum(np.abs(slack) <= 1e-8) >= 2


def test_vertices_deduplicated():
    # a vertex where three constraints meet is reported once
    p = Polytope(UNIT2, [[-1.0, -1.0], [-1.0, 0.0]], [1.0, 1.0])
    v = enumerate_vertices(p)
    d = np.linalg.norm(v[:, None] - v[None], axis=-1)
    assert np.all(d[np.triu_indices(len(v), 1)] > 1e-9)


def test_outer_box_examples():
    assert outer_box(TRIANGLE) == UNIT2
    assert outer_box(Polytope(UNIT2)) == UNIT2
    with pytest.raises(InputError):
        outer_box(Polytope(UNIT2, [[0.0, 0.0]], [-1.0]))
    cut = Polytope(Hyperrectangle([0, 0], [2, 2]), [[-1.0, 0.0]], [0.5])   # x1 <= 0.5
    ob = outer_box(cut)
    np.testing.assert_allclose(ob.upper, [0.5, 2.0])


def test_outer_box_contains_samples():
    p = _random_polytope(4, 2, 5)
    box = outer_box(p)
    pts = sample_uniform(p.box, 10 ** 4, SeededSampler(0))
    inside = pts[contains(p, pts)]
    assert inside.shape[0] > 0
    assert np.all(box.contains(inside))


# ---------------------------------------------------------------- bisection

def test_bisect_example():
    lo, hi = bisect(Hyperrectangle([0, 0], [2, 1]), 0)
    assert lo == Hyperrectangle([0, 0], [1, 1])
    assert hi == Hyperrectangle([1, 0], [2, 1])
    assert lo.volume == hi.volume == 1.0


def test_bisect_errors():
    with pytest.raises(InputError):
        bisect(Hyperrectangle([0, 0], [0, 1]), 0)
    with pytest.raises(InputError):
        bisect(UNIT2, 2)


@given(st.integers(0, 10 ** 6), st.integers(0, 2))
def test_bisect_partitions_membership(seed, dim):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 2, 3)
    box = Hyperrectangle(lo, lo + rng.uniform(0.1, 3, 3))
    a, b = bisect(box, dim)
    assert a.upper[dim] == b.lower[dim]
    assert a.volume + b.volume == pytest.approx(box.volume, rel=1e-12)
    pts = rng.uniform(box.lower - 0.5, box.upper + 0.5, (1000, 3))
    np.testing.assert_array_equal(a.contains(pts) | b.contains(pts), box.contains(pts))
    # interiors disjoint: only the shared face may be in both
    both = a.contains(pts) & b.contains(pts)
    assert np.all(pts[both, dim] == a.upper[dim])


def test_product_grid_volume():
    # 3 x 3 grid of boxes covering [0, 3]^2
    polys = tuple(Polytope(Hyperrectangle([i, j], [i + 1, j + 1]))
                  for i, j in itertools.product(range(3), range(3)))
    dup = DisjointPolytopeUnion(polys)
    assert dup.boxes_disjoint()
    assert dup_exact_volume(dup) == pytest.approx(9.0)
