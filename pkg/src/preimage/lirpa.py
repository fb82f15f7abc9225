"""CROWN-style backward linear bound propagation over a box.

Networks are handled as a list of affine layers with ReLU after every layer
but the last.  Bounds on the network output (or on any hidden pre-activation,
treating that layer as the output) are obtained by substituting, from the top
down, the affine maps exactly and each ReLU by one of its two relaxation lines.
The line is picked per neuron by the sign of the running coefficient, which
makes the back-substitution exact for the relaxed network.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import Hyperrectangle
from .model import Network


@dataclass(frozen=True)
class AffineBound:
    """Rows ``A x + b``; ``A`` is (K, d)."""

    A: np.ndarray
    b: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return x @ self.A.T + self.b


@dataclass(frozen=True)
class NeuronBounds:
    """Concrete pre-activation bounds, one (lower, upper) pair per hidden layer."""

    lower: tuple[np.ndarray, ...]
    upper: tuple[np.ndarray, ...]

    @property
    def n_layers(self) -> int:
        return len(self.lower)

    def unstable(self, layer: int) -> np.ndarray:
        return (self.lower[layer] < 0.0) & (self.upper[layer] > 0.0)

    @property
    def unstable_masks(self) -> tuple[np.ndarray, ...]:
        return tuple(self.unstable(i) for i in range(self.n_layers))

    @property
    def n_unstable(self) -> int:
        return int(sum(m.sum() for m in self.unstable_masks))

    def contained_in(self, other: "NeuronBounds", tol: float = 0.0) -> bool:
        return all(np.all(lo >= olo - tol) and np.all(hi <= ohi + tol)
                   for lo, hi, olo, ohi in zip(self.lower, self.upper, other.lower, other.upper))


@dataclass(frozen=True)
class AlphaAssignment:
    """Lower-relaxation slopes for the unstable neurons.

    ``values[j]`` is a (K, n_j) array: one slope per output row and neuron of
    hidden layer ``j``; ``masks[j]`` marks the unstable neurons, the only
    entries that carry meaning.
    """

    values: tuple[np.ndarray, ...]
    masks: tuple[np.ndarray, ...]

    @property
    def n_rows(self) -> int:
        return self.values[0].shape[0] if self.values else 0

    def keys(self) -> list[tuple[int, int]]:
        return [(j, int(i)) for j, m in enumerate(self.masks) for i in np.flatnonzero(m)]

    @property
    def size(self) -> int:
        return int(sum(m.sum() for m in self.masks))

    def flat(self) -> np.ndarray:
        """Meaningful entries only, row-major per layer."""
        if not self.values:
            return np.zeros(0)
        return np.concatenate([v[:, m].ravel() for v, m in zip(self.values, self.masks)])

    def with_flat(self, flat: np.ndarray) -> "AlphaAssignment":
        out, pos = [], 0
        for v, m in zip(self.values, self.masks):
            n = v.shape[0] * int(m.sum())
            nv = v.copy()
            nv[:, m] = np.reshape(flat[pos:pos + n], (v.shape[0], int(m.sum())))
            out.append(nv)
            pos += n
        return AlphaAssignment(tuple(out), self.masks)

    def clipped(self) -> "AlphaAssignment":
        return AlphaAssignment(tuple(np.clip(v, 0.0, 1.0) for v in self.values), self.masks)

    def validate(self, nb: NeuronBounds, n_rows: int | None = None):
        if len(self.masks) != nb.n_layers:
            raise InputError("alpha covers a different number of layers than the bounds")
        for j, (v, m) in enumerate(zip(self.values, self.masks)):
            if not np.array_equal(m, nb.unstable(j)):
                raise InputError(f"alpha keys in layer {j} do not match the unstable neurons")
            if n_rows is not None and v.shape[0] != n_rows:
                raise InputError(f"alpha has {v.shape[0]} rows, expected {n_rows}")
            if np.any((v[:, m] < 0.0) | (v[:, m] > 1.0)):
                raise InputError("alpha entries must lie in [0, 1]")


def relax_relu(l: float, u: float, alpha: float):
    """Linear lower/upper bounds of ReLU on [l, u] as (slope, intercept) pairs."""
    if l > u:
        raise InputError(f"lower bound {l} exceeds upper bound {u}")
    if not 0.0 <= alpha <= 1.0:
        raise InputError("alpha must lie in [0, 1]")
    if u <= 0.0:
        return (0.0, 0.0), (0.0, 0.0)
    if l >= 0.0:
        return (1.0, 0.0), (1.0, 0.0)
    slope = u / (u - l)
    return (alpha, 0.0), (slope, -slope * l)


def _relax_arrays(l: np.ndarray, u: np.ndarray, alpha: np.ndarray):
    """Vectorised :func:`relax_relu`; ``alpha`` broadcasts against (…, n)."""
    active = l >= 0.0
    unstable = (l < 0.0) & (u > 0.0)
    denom = np.where(unstable, u - l, 1.0)
    up_slope = np.where(active, 1.0, np.where(unstable, u / denom, 0.0))
    up_icpt = np.where(unstable, -u * l / denom, 0.0)
    lo_slope = np.where(active, 1.0, np.where(unstable, alpha, 0.0))
    lo_icpt = np.zeros_like(lo_slope)
    return lo_slope, lo_icpt, up_slope, up_icpt


def concretize(bound: AffineBound, box: Hyperrectangle) -> tuple[np.ndarray, np.ndarray]:
    """Per-row min and max of ``A x + b`` over ``box`` by sign splitting."""
    A = np.atleast_2d(bound.A)
    if A.shape[1] != box.dim:
        raise InputError("bound width does not match box dimension")
    pos, neg = np.maximum(A, 0.0), np.minimum(A, 0.0)
    lo = pos @ box.lower + neg @ box.upper + bound.b
    hi = pos @ box.upper + neg @ box.lower + bound.b
    return lo, hi


def default_alpha(l: np.ndarray, u: np.ndarray, init="adaptive") -> np.ndarray:
    """Initial lower slopes: 1 where ``u >= |l|`` else 0, or a fixed value."""
    if init == "adaptive":
        return (u >= -l).astype(np.float64)
    value = float(init)
    if not 0.0 <= value <= 1.0:
        raise InputError("fixed alpha must lie in [0, 1]")
    return np.full_like(l, value, dtype=np.float64)


@dataclass
class _Trace:
    """What the reverse pass needs from one backward substitution."""

    lam: list          # running coefficient on a^(j), per hidden layer j
    use_lower: list    # boolean mask: lower relaxation chosen
    slope: list
    icpt: list


def _substitute(net_layers, n_hidden: int, lam: np.ndarray, const: np.ndarray,
                bounds_lo, bounds_hi, alphas, upper: bool, trace: _Trace | None = None):
    """Push ``lam . a^(n_hidden-1) + const`` down to the input.

    ``lam`` is (K, n) over the post-activations of hidden layer
    ``n_hidden - 1``; ``alphas[j]`` broadcasts to (K, n_j).
    """
    for j in range(n_hidden - 1, -1, -1):
        lo_s, lo_c, up_s, up_c = _relax_arrays(bounds_lo[j], bounds_hi[j], alphas[j])
        use_lower = (lam >= 0.0) != upper
        slope = np.where(use_lower, lo_s, up_s)
        icpt = np.where(use_lower, lo_c, up_c)
        if trace is not None:
            trace.lam.append(lam)
            trace.use_lower.append(use_lower)
            trace.slope.append(slope)
            trace.icpt.append(icpt)
        const = const + np.sum(lam * icpt, axis=1)
        mu = lam * slope
        layer = net_layers[j]
        const = const + mu @ layer.bias
        lam = mu @ layer.weights
    return lam, const


def intermediate_bounds(net: Network, box: Hyperrectangle, alpha_init="adaptive") -> NeuronBounds:
    """Concrete bounds for every hidden pre-activation, layer by layer.

    Each layer is bounded by treating it as the output; earlier layers use
    their already computed bounds and the ``alpha_init`` slope rule.
    """
    if box.dim != net.input_dim:
        raise InputError("box dimension does not match network input")
    lows, highs, alphas = [], [], []
    for j, layer in enumerate(net.hidden_layers):
        if j == 0:
            lo, hi = concretize(AffineBound(layer.weights, layer.bias), box)
        else:
            lam = layer.weights
            const = layer.bias.copy()
            A_lo, b_lo = _substitute(net.layers, j, lam, const, lows, highs, alphas, upper=False)
            A_hi, b_hi = _substitute(net.layers, j, lam, const, lows, highs, alphas, upper=True)
            lo, _ = concretize(AffineBound(A_lo, b_lo), box)
            _, hi = concretize(AffineBound(A_hi, b_hi), box)
        hi = np.maximum(hi, lo)
        lows.append(lo)
        highs.append(hi)
        alphas.append(default_alpha(lo, hi, alpha_init)[None, :])
    return NeuronBounds(tuple(lows), tuple(highs))


def initial_alpha(nb: NeuronBounds, n_rows: int, init="adaptive") -> AlphaAssignment:
    values = tuple(np.tile(default_alpha(lo, hi, init), (n_rows, 1))
                   for lo, hi in zip(nb.lower, nb.upper))
    return AlphaAssignment(values, nb.unstable_masks)


def _check_inputs(spec_net: Network, box: Hyperrectangle, nb: NeuronBounds, alpha):
    if box.dim != spec_net.input_dim:
        raise InputError("box dimension does not match network input")
    if nb.n_layers != len(spec_net.hidden_layers):
        raise InputError("neuron bounds do not match the network depth")
    if alpha is not None:
        alpha.validate(nb, spec_net.output_dim)


def backward_bounds(spec_net: Network, box: Hyperrectangle, nb: NeuronBounds,
                    alpha: AlphaAssignment | None = None, upper: bool = False,
                    _trace: _Trace | None = None) -> AffineBound:
    """Affine lower (or upper) bounds on every output row of ``spec_net``."""
    _check_inputs(spec_net, box, nb, alpha)
    K = spec_net.output_dim
    if alpha is None:
        alpha = initial_alpha(nb, K)
    last = spec_net.layers[-1]
    n_hidden = len(spec_net.hidden_layers)
    A, b = _substitute(spec_net.layers, n_hidden, last.weights, last.bias.copy(),
                       nb.lower, nb.upper, alpha.values, upper, _trace)
    return AffineBound(np.array(A, dtype=np.float64), np.array(b, dtype=np.float64))


def backward_lower_bounds(spec_net: Network, box: Hyperrectangle, nb: NeuronBounds,
                          alpha: AlphaAssignment) -> AffineBound:
    return backward_bounds(spec_net, box, nb, alpha, upper=False)


def lower_bounds_with_vjp(spec_net: Network, box: Hyperrectangle, nb: NeuronBounds,
                          alpha: AlphaAssignment):
    """Lower bounds plus a function mapping cotangents on (A, b) to d/d alpha.

    The reverse pass retraces the back-substitution: with the relaxation
    choice fixed, every step is bilinear in (coefficient, slope), and alpha
    enters only as the slope of lower-relaxed unstable neurons.
    """
    trace = _Trace([], [], [], [])
    bound = backward_bounds(spec_net, box, nb, alpha, upper=False, _trace=trace)
    # trace lists run from the top hidden layer down; index them by layer
    n_hidden = len(spec_net.hidden_layers)
    by_layer = {n_hidden - 1 - t: t for t in range(len(trace.lam))}
    layers = spec_net.layers

    def vjp(gA: np.ndarray, gb: np.ndarray) -> AlphaAssignment:
        grads = [np.zeros_like(v) for v in alpha.values]
        g_lam = np.asarray(gA, dtype=np.float64)
        gb = np.asarray(gb, dtype=np.float64)
        for j in range(n_hidden):
            t = by_layer[j]
            layer = layers[j]
            g_mu = g_lam @ layer.weights.T + gb[:, None] * layer.bias[None, :]
            lam = trace.lam[t]
            choose = trace.use_lower[t] & alpha.masks[j][None, :]
            grads[j] = np.where(choose, g_mu * lam, 0.0)
            g_lam = g_mu * trace.slope[t] + gb[:, None] * trace.icpt[t]
        return AlphaAssignment(tuple(grads), alpha.masks)

    return bound, vjp
