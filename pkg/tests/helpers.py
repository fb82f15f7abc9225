"""Shared oracles for the test suite."""
import numpy as np

from preimage.approximator import surrogate_loss
from preimage.fixtures import F1_REGION, F1_SPEC, F2_REGION, f1, f2, f2_specs
from preimage.geometry import Hyperrectangle, SeededSampler, exact_volume, sample_uniform
from preimage.lirpa import initial_alpha, intermediate_bounds
from preimage.model import append_spec_rows, forward


def gradient_case(seed: int, n_samples: int = 2000):
    """A random (fixture, subregion, alpha) triple with at least one unstable neuron."""
    rng = np.random.default_rng(seed)
    while True:
        if rng.random() < 0.3:
            net, spec, root = f1(), F1_SPEC, F1_REGION
        else:
            net, spec, root = f2(), f2_specs()[int(rng.integers(4))], F2_REGION
        sn = append_spec_rows(net, spec)
        lo = rng.uniform(root.lower, root.upper)
        hi = np.minimum(lo + rng.uniform(0.2, 1.5, 2) * root.widths / 2, root.upper)
        box = Hyperrectangle(lo, hi)
        nb = intermediate_bounds(sn, box)
        if nb.n_unstable == 0:
            continue
        a0 = initial_alpha(nb, sn.output_dim)
        alpha = a0.with_flat(rng.uniform(0.05, 0.95, a0.flat().size))
        samples = sample_uniform(box, n_samples, SeededSampler(seed))
        return sn, box, nb, alpha, samples


def gradient_rel_error(seed: int, h: float = 1e-5) -> float:
    """Relative error between the analytic alpha-gradient and central differences."""
    sn, box, nb, alpha, samples = gradient_case(seed)
    _, grad = surrogate_loss(alpha, samples, sn, nb, box)
    g = grad.flat()
    flat = alpha.flat()
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        lp, _ = surrogate_loss(alpha.with_flat(up), samples, sn, nb, box)
        lm, _ = surrogate_loss(alpha.with_flat(dn), samples, sn, nb, box)
        fd[i] = (lp - lm) / (2 * h)
    scale = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12)
    return float(np.linalg.norm(fd - g) / scale)


def unsound_count(dup, net, spec, region, n: int, seed: int) -> int:
    """Uniform points of ``region`` inside the union whose output violates the output constraints."""
    x = sample_uniform(region, n, SeededSampler(seed))
    hit = x[dup.contains(x)]
    if hit.shape[0] == 0:
        return 0
    return int(np.sum(~spec.satisfied(forward(net, hit))))


class ExactTracker:
    """Per-leaf exact volume cache keyed by node path."""

    def __init__(self):
        self.cache = {}
        self.series = []

    def __call__(self, state):
        for node in state.nodes:
            if node.path not in self.cache:
                self.cache[node.path] = exact_volume(node.approx.polytope)
        self.series.append(float(sum(self.cache[n.path] for n in state.nodes)))
        return self.series[-1]


ACCEPTANCE_LINES: list[str] = []


def record(name: str, ok: bool, detail: str = "") -> bool:
    """Log one acceptance line; it is echoed now and again in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
