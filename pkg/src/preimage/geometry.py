"""Boxes, H-polytopes, disjoint unions, sampling and volume.

A :class:`Polytope` is always the conjunction of a bounding box and a list of
half-spaces ``a . x + b >= 0``, so every instance is bounded.  Exact volume and
vertex enumeration go through Qhull (``scipy.spatial``) after mapping the box
onto the unit cube; an LP for the Chebyshev centre supplies the interior point
Qhull needs and doubles as the emptiness / flatness test.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from .errors import CapabilityError, InputError

log = logging.getLogger(__name__)

DEFAULT_DIM_CAP = 10
VERTEX_TOL = 1e-9
# Chebyshev radius (in unit-cube coordinates) below which a set counts as flat.
FLAT_TOL = 1e-9
_COMBINATORIAL_LIMIT = 20000


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Hyperrectangle:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.reshape(self.lower, -1))
        hi = _frozen(np.reshape(self.upper, -1))
        if lo.shape != hi.shape:
            raise InputError("lower and upper must have the same length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InputError("box bounds must be finite")
        if np.any(lo > hi):
            raise InputError(f"box has lower > upper: {lo} vs {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=np.float64)
        inside = np.all((x >= self.lower) & (x <= self.upper), axis=-1)
        return bool(inside) if x.ndim == 1 else inside

    def to_json(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Hyperrectangle":
        return cls(np.array(obj["lower"], dtype=np.float64),
                   np.array(obj["upper"], dtype=np.float64))

    def __eq__(self, other):
        if not isinstance(other, Hyperrectangle):
            return NotImplemented
        return (np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))


@dataclass(frozen=True)
class Polytope:
    """``{x in box : A x + b >= 0}``; ``A`` is (m, d), ``b`` is (m,)."""

    box: Hyperrectangle
    A: np.ndarray = None
    b: np.ndarray = None

    def __post_init__(self):
        d = self.box.dim
        A = np.zeros((0, d)) if self.A is None else np.array(self.A, dtype=np.float64, ndmin=2)
        if A.size == 0:
            A = np.zeros((0, d))
        b = np.zeros(0) if self.b is None else np.array(self.b, dtype=np.float64).reshape(-1)
        if A.shape[1] != d or b.shape[0] != A.shape[0]:
            raise InputError(f"halfspace shapes {A.shape}/{b.shape} do not fit dimension {d}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def n_halfspaces(self) -> int:
        return self.A.shape[0]

    def with_halfspaces(self, A, b) -> "Polytope":
        A = np.array(A, dtype=np.float64, ndmin=2).reshape(-1, self.dim)
        b = np.array(b, dtype=np.float64).reshape(-1)
        return Polytope(self.box, np.vstack([self.A, A]), np.concatenate([self.b, b]))

    def to_json(self) -> dict:
        return {"box": self.box.to_json(),
                "halfspaces": [{"a": a.tolist(), "b": float(bb)} for a, bb in zip(self.A, self.b)]}

    @classmethod
    def from_json(cls, obj: dict) -> "Polytope":
        box = Hyperrectangle.from_json(obj["box"])
        hs = obj.get("halfspaces", [])
        A = np.array([h["a"] for h in hs], dtype=np.float64).reshape(len(hs), box.dim)
        b = np.array([h["b"] for h in hs], dtype=np.float64)
        return cls(box, A, b)


def box_polytope(box: Hyperrectangle) -> Polytope:
    return Polytope(box)


@dataclass(frozen=True)
class DisjointPolytopeUnion:
    polytopes: tuple[Polytope, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "polytopes", tuple(self.polytopes))

    def __len__(self):
        return len(self.polytopes)

    def __iter__(self):
        return iter(self.polytopes)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        hit = np.zeros(x.shape[0], dtype=bool)
        for p in self.polytopes:
            hit |= contains(p, x)
        return hit

    def boxes_disjoint(self) -> bool:
        """Pairwise interior-disjointness of member boxes, O(n^2 d)."""
        if len(self.polytopes) < 2:
            return True
        lo = np.stack([p.box.lower for p in self.polytopes])
        hi = np.stack([p.box.upper for p in self.polytopes])
        n = lo.shape[0]
        for i in range(n):
            overlap = np.all((np.minimum(hi[i], hi[i + 1:]) - np.maximum(lo[i], lo[i + 1:])) > 0, axis=1)
            if np.any(overlap):
                return False
        return True

    def to_json(self) -> dict:
        return {"polytopes": [p.to_json() for p in self.polytopes]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "DisjointPolytopeUnion":
        return cls(tuple(Polytope.from_json(p) for p in obj["polytopes"]))


class SeededSampler:
    """Reproducible uniform sample stream.

    The stream is fully determined by ``seed`` and ``counter`` (number of
    doubles already drawn), independent of platform and call pattern.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed)
        self._bitgen = np.random.PCG64(self.seed)
        if counter:
            self._bitgen.advance(counter)
        self._rng = np.random.Generator(self._bitgen)
        self.counter = int(counter)

    def uniform(self, shape) -> np.ndarray:
        u = self._rng.random(shape)
        self.counter += u.size
        return u


def derive_seed(root_seed: int, path: tuple = ()) -> int:
    """64-bit seed for a node path, stable across runs and worker counts."""
    ss = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_uniform(box: Hyperrectangle, n: int, sampler: SeededSampler) -> np.ndarray:
    if n < 1:
        raise InputError("need at least one sample")
    u = sampler.uniform((n, box.dim))
    return box.lower + u * box.widths


def contains(p: Polytope, x) -> np.ndarray | bool:
    """Closed-set membership for a point (d,) or a batch (N, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != p.dim:
        raise InputError(f"point dimension {pts.shape[1]} != polytope dimension {p.dim}")
    ok = p.box.contains(pts)
    if p.n_halfspaces:
        ok = ok & np.all(pts @ p.A.T + p.b >= 0.0, axis=1)
    return bool(ok[0]) if single else ok


def estimate_volume_fraction(p: Polytope, samples) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise InputError("need a non-empty (N, d) sample array")
    return float(np.mean(contains(p, samples)))


def bisect(box: Hyperrectangle, dim: int) -> tuple[Hyperrectangle, Hyperrectangle]:
    if not 0 <= dim < box.dim:
        raise InputError(f"dimension {dim} out of range")
    lo, hi = box.lower[dim], box.upper[dim]
    if not hi > lo:
        raise InputError(f"box is degenerate in dimension {dim}")
    mid = (lo + hi) / 2.0
    upper_l = box.upper.copy()
    upper_l[dim] = mid
    lower_u = box.lower.copy()
    lower_u[dim] = mid
    return Hyperrectangle(box.lower, upper_l), Hyperrectangle(lower_u, box.upper)


# ------------------------------------------------------------ exact geometry

@dataclass
class _Reduced:
    """Polytope restated on the unit cube over its non-degenerate dimensions."""

    free: np.ndarray          # indices of dims with positive width
    A: np.ndarray             # (m, k) in unit-cube coordinates
    b: np.ndarray
    empty: bool = False
    scale: float = 1.0        # product of free widths
    notes: list = field(default_factory=list)

    def lift(self, box: Hyperrectangle, y: np.ndarray) -> np.ndarray:
        x = np.tile(box.lower, (y.shape[0], 1))
        x[:, self.free] = box.lower[self.free] + y * box.widths[self.free]
        return x


def _reduce(p: Polytope) -> _Reduced:
    box = p.box
    w = box.widths
    free = np.flatnonzero(w > 0)
    A = p.A[:, free] * w[free]
    b = p.b + p.A @ box.lower
    red = _Reduced(free, A, b, scale=float(np.prod(w[free])) if free.size else 1.0)
    if A.shape[0]:
        # extremes over the unit cube decide redundancy / emptiness cheaply
        lo = np.minimum(A, 0.0).sum(axis=1) + b
        hi = np.maximum(A, 0.0).sum(axis=1) + b
        if np.any(hi < 0.0):
            red.empty = True
            return red
        keep = lo < 0.0
        red.A, red.b = A[keep], b[keep]
    return red


def _unit_cube_constraints(k: int) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(k)
    return np.vstack([eye, -eye]), np.concatenate([np.zeros(k), np.ones(k)])


def chebyshev_center(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray | None, float]:
    """Largest inscribed ball of ``{y : A y + b >= 0}``; radius -1 if infeasible."""
    m, k = A.shape
    norms = np.linalg.norm(A, axis=1)
    # max r  s.t.  -A y + norms r <= b
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A, norms[:, None]])
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=[(None, None)] * k + [(0, None)],
                  method="highs")
    if res.status != 0:
        return None, -1.0
    return res.x[:k], float(res.x[-1])


def _dedup(points: np.ndarray, tol: float = VERTEX_TOL) -> np.ndarray:
    kept: list[np.ndarray] = []
    for pt in points:
        if all(np.linalg.norm(pt - q) > tol for q in kept):
            kept.append(pt)
    return np.array(kept).reshape(len(kept), points.shape[1])


def _combinatorial_vertices(A: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    m, k = A.shape
    if math.comb(m, k) > _COMBINATORIAL_LIMIT:
        return np.zeros((0, k))
    found = []
    for idx in itertools.combinations(range(m), k):
        sub = A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        y = np.linalg.solve(sub, -b[list(idx)])
        if np.all(A @ y + b >= -tol):
            found.append(y)
    if not found:
        return np.zeros((0, k))
    return _dedup(np.array(found))


def _unit_vertices(red: _Reduced) -> tuple[np.ndarray, float]:
    """Vertices in unit-cube coordinates and the Chebyshev radius."""
    k = red.free.size
    if red.empty:
        return np.zeros((0, k)), -1.0
    if k == 0:
        return np.zeros((1, 0)), 0.0
    cA, cb = _unit_cube_constraints(k)
    if red.A.shape[0] == 0:
        corners = np.array(list(itertools.product([0.0, 1.0], repeat=k)))
        return corners, 0.5
    A = np.vstack([cA, red.A])
    b = np.concatenate([cb, red.b])
    center, radius = chebyshev_center(A, b)
    if center is None:
        return np.zeros((0, k)), -1.0
    if radius <= FLAT_TOL or k == 1:
        if k == 1:
            lo = max([-bb / a for a, bb in zip(A[:, 0], b) if a > 0], default=0.0)
            hi = min([-bb / a for a, bb in zip(A[:, 0], b) if a < 0], default=1.0)
            if hi < lo - VERTEX_TOL:
                return np.zeros((0, 1)), -1.0
            pts = np.array([[lo], [hi]]) if hi - lo > VERTEX_TOL else np.array([[lo]])
            return pts, max(hi - lo, 0.0) / 2.0
        return _combinatorial_vertices(A, b), radius
    try:
        hs = HalfspaceIntersection(np.hstack([-A, -b[:, None]]), center)
    except QhullError as exc:
        red.notes.append(f"qhull halfspace intersection failed: {exc}")
        return _combinatorial_vertices(A, b), radius
    pts = hs.intersections
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    return _dedup(pts), radius


def _check_cap(p: Polytope, cap: int):
    if p.dim > cap:
        raise CapabilityError(f"dimension {p.dim} exceeds exact-geometry cap {cap}")


def enumerate_vertices(p: Polytope, cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
    """Extreme points of ``p`` as an (n, d) array; empty array if ``p`` is empty."""
    _check_cap(p, cap)
    red = _reduce(p)
    y, _ = _unit_vertices(red)
    if y.shape[0] == 0:
        return np.zeros((0, p.dim))
    return _dedup(red.lift(p.box, y))


def is_full_dimensional(p: Polytope, cap: int = DEFAULT_DIM_CAP) -> bool:
    _check_cap(p, cap)
    red = _reduce(p)
    if red.empty or red.free.size < p.dim:
        return False
    if red.A.shape[0] == 0:
        return True
    cA, cb = _unit_cube_constraints(p.dim)
    _, r = chebyshev_center(np.vstack([cA, red.A]), np.concatenate([cb, red.b]))
    return r > FLAT_TOL


@dataclass(frozen=True)
class VolumeResult:
    volume: float
    degenerate: bool = False
    note: str = ""


def exact_volume_info(p: Polytope, cap: int = DEFAULT_DIM_CAP) -> VolumeResult:
    _check_cap(p, cap)
    if p.box.volume == 0.0:
        return VolumeResult(0.0)
    red = _reduce(p)
    if red.empty:
        return VolumeResult(0.0)
    if red.A.shape[0] == 0:
        return VolumeResult(p.box.volume)
    k = p.dim
    y, radius = _unit_vertices(red)
    if radius <= FLAT_TOL or y.shape[0] <= k:
        return VolumeResult(0.0)
    if k == 1:
        return VolumeResult(float(y.max() - y.min()) * red.scale)
    try:
        hull = ConvexHull(y)
    except QhullError as exc:
        log.warning("degenerate hull, reporting zero volume: %s", exc)
        return VolumeResult(0.0, degenerate=True, note=str(exc))
    return VolumeResult(float(hull.volume) * red.scale)


def exact_volume(p: Polytope, cap: int = DEFAULT_DIM_CAP) -> float:
    """Lebesgue volume via vertex enumeration and Qhull's simplicial hull volume."""
    return exact_volume_info(p, cap).volume


def outer_box(p: Polytope, cap: int = DEFAULT_DIM_CAP) -> Hyperrectangle:
    verts = enumerate_vertices(p, cap)
    if verts.shape[0] == 0:
        raise InputError("outer box of an empty polytope is undefined")
    snap = VERTEX_TOL * np.maximum(p.box.widths, 1.0)
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    lo = np.where(lo - p.box.lower <= snap, p.box.lower, lo)
    hi = np.where(p.box.upper - hi <= snap, p.box.upper, hi)
    return Hyperrectangle(lo, np.maximum(hi, lo))


def dup_exact_volume(dup: DisjointPolytopeUnion, cap: int = DEFAULT_DIM_CAP) -> float:
    return float(sum(exact_volume(p, cap) for p in dup))
