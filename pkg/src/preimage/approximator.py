"""Single-region polytope under-approximation with slope optimisation.

For a box region the polytope is the conjunction of the K lower-bound
half-spaces produced by :mod:`preimage.lirpa` with the box itself.  The
relaxation slopes are tuned by projected gradient ascent on a smooth
surrogate of the fraction of sampled points that land inside the polytope.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .geometry import Hyperrectangle, Polytope, SeededSampler, contains, sample_uniform
from .lirpa import (AffineBound, AlphaAssignment, NeuronBounds, backward_bounds,
                    initial_alpha, intermediate_bounds, lower_bounds_with_vjp)
from .model import Network, forward


@dataclass(frozen=True)
class LossConfig:
    n_samples: int = 10000
    learning_rate: float = 0.1
    steps: int = 20
    sigmoid_scale: float = 1.0
    optimize: bool = True
    alpha_init: str | float = "adaptive"
    optimizer: str = "adam"     # "adam" or "sgd"

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.n_samples < 1 or self.steps < 0 or self.learning_rate <= 0 or self.sigmoid_scale <= 0:
            raise ValueError("loss configuration values must be positive")


@dataclass(frozen=True)
class InputConstraints:
    """Extra half-spaces ``A x + b >= 0`` (a general polytope input set)."""

    A: np.ndarray
    b: np.ndarray

    def holds(self, x: np.ndarray) -> np.ndarray:
        return np.all(x @ self.A.T + self.b >= 0.0, axis=1)


@dataclass(frozen=True)
class RegionApproximation:
    region: Hyperrectangle
    polytope: Polytope
    alpha: AlphaAssignment
    est_polytope_frac: float
    est_preimage_frac: float | None
    sample_seed: int
    n_unstable: int = 0

    @property
    def gap(self) -> float:
        if self.est_preimage_frac is None:
            raise ValueError("preimage fraction was not estimated")
        return max(0.0, self.est_preimage_frac - self.est_polytope_frac)


def build_polytope(region: Hyperrectangle, spec_net: Network, nb: NeuronBounds,
                   alpha: AlphaAssignment | None,
                   extra: InputConstraints | None = None) -> Polytope:
    bound = backward_bounds(spec_net, region, nb, alpha)
    poly = Polytope(region, bound.A, bound.b)
    if extra is not None:
        poly = poly.with_halfspaces(extra.A, extra.b)
    return poly


def _margins(bound: AffineBound, samples: np.ndarray) -> np.ndarray:
    # (K, N) layout: reductions over the short constraint axis stay vectorised
    return bound.A @ samples.T + bound.b[:, None]


def _surrogate(bound: AffineBound, samples: np.ndarray, scale: float, g=None):
    """Loss value and its cotangents on the bound rows (A, b)."""
    if g is None:
        g = _margins(bound, samples)
    # smooth min over constraints, written out to avoid per-call overhead
    gmin = np.minimum.reduce(g, axis=0)
    e = np.exp(gmin - g)
    tot = np.add.reduce(e, axis=0)
    s = expit(scale * (gmin - np.log(tot)))
    n = samples.shape[0]
    loss = -float(s.mean())
    # d loss / d g_{kj} = -(1/N) scale s (1 - s) softmax(-g)_k
    dg = e * (-(scale / n) * s * (1.0 - s) / tot)
    return loss, dg @ samples, dg.sum(axis=1)


def surrogate_loss(alpha: AlphaAssignment, samples: np.ndarray, spec_net: Network,
                   nb: NeuronBounds, region: Hyperrectangle | None = None,
                   sigmoid_scale: float = 1.0) -> tuple[float, AlphaAssignment]:
    """Negated mean sigmoid of the soft-min lower bound, and its alpha gradient."""
    samples = np.atleast_2d(samples)
    if region is None:
        region = Hyperrectangle(samples.min(axis=0), samples.max(axis=0))
    bound, vjp = lower_bounds_with_vjp(spec_net, region, nb, alpha)
    loss, gA, gb = _surrogate(bound, samples, sigmoid_scale)
    return loss, vjp(gA, gb)


def _fraction(g: np.ndarray) -> float:
    return float(np.count_nonzero(np.minimum.reduce(g, axis=0) >= 0.0)) / g.shape[1]


def optimize_alpha(region: Hyperrectangle, spec_net: Network, nb: NeuronBounds,
                   alpha0: AlphaAssignment, cfg: LossConfig,
                   samples: np.ndarray) -> AlphaAssignment:
    """Projected gradient ascent on the surrogate; returns the best iterate.

    With ``optimizer="adam"`` the step is the Adam-normalised gradient, which
    keeps the per-slope step near ``learning_rate`` even where the sigmoid is
    saturated and raw gradients vanish.

    Iterates are ranked by the indicator fraction on ``samples`` with the
    surrogate loss as tie-break, so the result never does worse than ``alpha0``
    on those samples.
    """
    if alpha0.size == 0 or cfg.steps == 0 or samples.shape[0] == 0:
        return alpha0
    alpha = alpha0
    best, best_key = alpha0, None
    m = v = None
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for step in range(cfg.steps + 1):
        bound, vjp = lower_bounds_with_vjp(spec_net, region, nb, alpha)
        g = _margins(bound, samples)
        loss, gA, gb = _surrogate(bound, samples, cfg.sigmoid_scale, g)
        key = (_fraction(g), -loss)
        if best_key is None or key > best_key:
            best, best_key = alpha, key
        if step == cfg.steps:
            break
        grad = vjp(gA, gb).flat()
        if cfg.optimizer == "adam":
            if m is None:
                m, v = np.zeros_like(grad), np.zeros_like(grad)
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad * grad
            t = step + 1
            grad = (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
        alpha = alpha.with_flat(alpha.flat() - cfg.learning_rate * grad).clipped()
    return best


def estimate_preimage_fraction(spec_net: Network, samples: np.ndarray,
                               extra: InputConstraints | None = None) -> float:
    y = forward(spec_net, samples)
    ok = np.all(y >= 0.0, axis=1)
    if extra is not None:
        ok &= extra.holds(samples)
    return float(np.mean(ok))


def approximate_region(region: Hyperrectangle, spec_net: Network, cfg: LossConfig,
                       sampler: SeededSampler, extra: InputConstraints | None = None,
                       estimate_preimage: bool = True) -> RegionApproximation:
    """Bound, optimise slopes, build the polytope and estimate both volumes.

    All estimates share one sample set drawn from ``sampler``.
    """
    seed = sampler.seed
    nb = intermediate_bounds(spec_net, region, cfg.alpha_init)
    alpha = initial_alpha(nb, spec_net.output_dim, cfg.alpha_init)
    samples = sample_uniform(region, cfg.n_samples, sampler)
    if cfg.optimize and nb.n_unstable:
        in_set = samples if extra is None else samples[extra.holds(samples)]
        alpha = optimize_alpha(region, spec_net, nb, alpha, cfg, in_set)
    poly = build_polytope(region, spec_net, nb, alpha, extra)
    poly_frac = float(np.mean(contains(poly, samples)))
    pre_frac = estimate_preimage_fraction(spec_net, samples, extra) if estimate_preimage else None
    return RegionApproximation(region, poly, alpha, poly_frac, pre_frac, seed, nb.n_unstable)


def with_preimage_estimate(approx: RegionApproximation, spec_net: Network, cfg: LossConfig,
                           extra: InputConstraints | None = None) -> RegionApproximation:
    """Fill in the preimage fraction using the region's own sample set."""
    samples = sample_uniform(approx.region, cfg.n_samples, SeededSampler(approx.sample_seed))
    return replace(approx, est_preimage_frac=estimate_preimage_fraction(spec_net, samples, extra))
