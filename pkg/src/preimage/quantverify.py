"""Sound quantitative verification of ``(I, O, p)`` properties.

A property holds when at least a fraction ``p`` of the input set ``I`` is
mapped into the output set ``O``.  The refinement loop grows a polytope
under-approximation of the preimage; once its Monte-Carlo volume estimate
reaches ``p * vol(I)`` the union is measured exactly, and only an exact
measurement can certify the property.  The procedure is sound but not
complete, so the only outcomes are ``"True"`` and ``"Unknown"``.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from .approximator import InputConstraints
from .errors import InputError
from .geometry import Hyperrectangle, Polytope, exact_volume, outer_box
from .model import Network, OutputSpec
from .refinement import RefineConfig, init, refine_step

log = logging.getLogger(__name__)

# The exact check is attempted once the estimate is within this many standard
# errors of the target, so sampling noise cannot hide an exactly-met threshold.
GUARD_SIGMAS = 3.0
# Round-off allowance on the exact comparison, relative to vol(I); Qhull volumes
# carry errors of a few ulps (a half-box measures 0.49999999999999994).
CERTIFY_RTOL = 1e-12


@dataclass(frozen=True)
class QuantitativeProperty:
    input_set: Polytope
    output_set: OutputSpec
    proportion: float

    def __post_init__(self):
        if isinstance(self.input_set, Hyperrectangle):
            object.__setattr__(self, "input_set", Polytope(self.input_set))
        p = float(self.proportion)
        if not 0.0 <= p <= 1.0 or np.isnan(p):
            raise InputError(f"proportion must lie in [0, 1], got {self.proportion}")
        object.__setattr__(self, "proportion", p)

    @property
    def is_box(self) -> bool:
        return self.input_set.n_halfspaces == 0

    def to_json(self) -> dict:
        if self.is_box:
            input_set = self.input_set.box.to_json()
        else:
            input_set = self.input_set.to_json()
        return {"input_set": input_set, "output_spec": self.output_set.to_json(),
                "p": self.proportion}

    @classmethod
    def from_json(cls, obj: dict) -> "QuantitativeProperty":
        try:
            raw = obj["input_set"]
            if "box" in raw:
                input_set = Polytope.from_json(raw)
            else:
                input_set = Polytope(Hyperrectangle.from_json(raw))
            return cls(input_set, OutputSpec.from_json(obj["output_spec"]), obj["p"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed property: missing or bad field {exc}") from exc


def load_property(path) -> QuantitativeProperty:
    with open(path) as fh:
        return QuantitativeProperty.from_json(json.load(fh))


@dataclass
class Verdict:
    outcome: str                 # "True" or "Unknown"
    certified_fraction: float    # exact DUP volume / vol(I) at the last certification
    iterations_used: int
    exact_volume_calls: int
    certification_attempts: int = 0
    n_polytopes: int = 0
    input_volume: float = 0.0
    elapsed_ms: float = 0.0

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _slack(state, z: float = GUARD_SIGMAS) -> float:
    """``z`` standard errors of the summed per-leaf polytope volume estimates."""
    n = state.cfg.loss.n_samples
    var = sum((nd.approx.est_polytope_frac * (1 - nd.approx.est_polytope_frac) / n)
              * nd.region.volume ** 2 for nd in state.nodes)
    return z * float(np.sqrt(var))


def verify(net: Network, prop: QuantitativeProperty, max_iterations: int = 500,
           cfg: RefineConfig | None = None) -> Verdict:
    """Refine until the exact union volume certifies ``p``, or give up at the budget."""
    start = time.perf_counter()
    cfg = replace(cfg or RefineConfig(), max_iterations=max_iterations)
    I = prop.input_set
    if I.dim != net.input_dim:
        raise InputError("input set dimension does not match network input")
    vol_I = exact_volume(I)
    if vol_I <= 0.0:
        raise InputError("input set is empty or has zero volume")
    if prop.is_box:
        root, extra = I.box, None
    else:
        root, extra = outer_box(I), InputConstraints(np.asarray(I.A), np.asarray(I.b))
    target = prop.proportion * vol_I
    state = init(net, prop.output_set, root, cfg, extra, target_volume=target)

    cache: dict[tuple, float] = {}
    calls = attempts = 0
    certified = 0.0
    while True:
        # exact measurement only once the cheap estimate says it could succeed
        if state.estimated_volume() + _slack(state) >= target:
            attempts += 1
            total = 0.0
            for node in state.nodes:
                if node.path not in cache:
                    cache[node.path] = exact_volume(node.approx.polytope)
                    calls += 1
                total += cache[node.path]
            certified = total / vol_I
            log.debug("iteration %d: exact fraction %.6f", state.iterations, certified)
            if total >= target - CERTIFY_RTOL * vol_I:
                outcome = "True"
                break
        if state.iterations >= cfg.max_iterations:
            outcome = "Unknown"
            break
        refine_step(state)
    return Verdict(outcome, certified, state.iterations, calls, attempts, state.n_polytopes,
                   vol_I, (time.perf_counter() - start) * 1e3)
