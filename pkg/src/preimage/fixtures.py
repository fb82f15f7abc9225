"""Small reference networks used by tests, scripts and the CLI demos."""
from __future__ import annotations

import numpy as np

from .geometry import Hyperrectangle
from .model import Layer, Network, OutputSpec, one_vs_rest

# Weight seed for the canonical F2 network; chosen so that each of the four
# one-vs-rest labels owns a sizeable share of the [0, 2]^2 domain.
F2_SEED = 17


def identity_net(d: int = 2) -> Network:
    return Network((Layer(np.eye(d), np.zeros(d), has_relu=False),), d)


def relu_1d() -> Network:
    """f(x) = ReLU(x) on the real line."""
    return Network((Layer([[1.0]], [0.0], True), Layer([[1.0]], [0.0], False)), 1)


def f1() -> Network:
    """2-2-1 net: y = ReLU(x1 - x2) - ReLU(x1 + x2 - 1) + 0.25."""
    return Network((
        Layer([[1.0, -1.0], [1.0, 1.0]], [0.0, -1.0], True),
        Layer([[1.0, -1.0]], [0.25], False),
    ), 2)


F1_REGION = Hyperrectangle([0.0, 0.0], [1.0, 1.0])
F1_SPEC = OutputSpec([[1.0]], [0.0])


def f2(seed: int = F2_SEED) -> Network:
    """2-10-10-4 ReLU classifier on [0, 2]^2 with seeded random weights.

    Two inputs, two hidden layers of 10 ReLUs and four class scores.  Inputs
    are centred on the domain midpoint by the first-layer bias so that the
    decision boundaries cross the domain.
    """
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, 1.0, (10, 2)) * 2.0
    b1 = -w1 @ np.array([1.0, 1.0]) + rng.normal(0.0, 0.5, 10)
    w2 = rng.normal(0.0, np.sqrt(2.0 / 10), (10, 10))
    b2 = rng.normal(0.0, 0.3, 10)
    w3 = rng.normal(0.0, np.sqrt(2.0 / 10), (4, 10))
    b3 = rng.normal(0.0, 0.1, 4)
    return Network((Layer(w1, b1, True), Layer(w2, b2, True), Layer(w3, b3, False)), 2)


F2_REGION = Hyperrectangle([0.0, 0.0], [2.0, 2.0])


def f2_specs() -> list[OutputSpec]:
    return [one_vs_rest(k, 4) for k in range(4)]
