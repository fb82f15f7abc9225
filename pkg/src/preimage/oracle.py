"""Exact restricted preimage of small ReLU networks.

The input box is partitioned into the linear regions of the network by
walking the hidden neurons in order and splitting the current cell on the
sign of each pre-activation.  A neuron whose sign is constant on the cell
(checked on the cell's vertices) does not branch, and cells without interior
are dropped.  Inside a cell the network is affine, so the preimage of a
polyhedral output set is the cell intersected with the pulled-back output
half-spaces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, InputError
from .geometry import (DEFAULT_DIM_CAP, DisjointPolytopeUnion, Hyperrectangle, Polytope,
                       enumerate_vertices, exact_volume, is_full_dimensional)
from .model import Network, OutputSpec

DEFAULT_NEURON_CAP = 32
_SIGN_TOL = 1e-12


@dataclass(frozen=True)
class LinearRegion:
    cell: Polytope
    pattern: tuple[bool, ...]   # True = active, in network order
    A: np.ndarray               # network output = A x + c on the cell
    c: np.ndarray


def linear_regions(net: Network, region: Hyperrectangle,
                   neuron_cap: int = DEFAULT_NEURON_CAP,
                   dim_cap: int = DEFAULT_DIM_CAP) -> list[LinearRegion]:
    """All full-dimensional activation cells of ``net`` inside ``region``."""
    if net.n_hidden_neurons > neuron_cap:
        raise CapabilityError(
            f"{net.n_hidden_neurons} hidden neurons exceed the oracle cap of {neuron_cap}")
    if region.dim != net.input_dim:
        raise InputError("region dimension does not match network input")
    d = net.input_dim
    widths = [layer.rows for layer in net.hidden_layers]
    out: list[LinearRegion] = []

    # stack entries: (cell, vertices, layer, neuron, pattern, M, m, pM, pm) where
    # (M, m) is the current layer's pre-activation map in x and (pM, pm) the
    # post-activation rows of that layer fixed so far
    def start_layer(j, post_M, post_m):
        layer = net.layers[j]
        return layer.weights @ post_M, layer.weights @ post_m + layer.bias

    cell0 = Polytope(region)
    M0, m0 = start_layer(0, np.eye(d), np.zeros(d)) if widths else (None, None)
    stack = [(cell0, enumerate_vertices(cell0, dim_cap), 0, 0, (), M0, m0,
              np.zeros((0, d)), np.zeros(0))]
    while stack:
        cell, verts, j, k, pattern, M, m, pM, pm = stack.pop()
        if j == len(widths):
            last = net.layers[-1]
            A = last.weights @ pM if widths else last.weights
            c = last.weights @ pm + last.bias if widths else last.bias.copy()
            out.append(LinearRegion(cell, pattern, A, c))
            continue
        h = verts @ M[k] + m[k]
        scale = max(1.0, float(np.max(np.abs(h))))
        branches = []
        if h.max() > _SIGN_TOL * scale and h.min() < -_SIGN_TOL * scale:
            for active in (True, False):
                sgn = 1.0 if active else -1.0
                child = cell.with_halfspaces(sgn * M[k], sgn * m[k])
                if not is_full_dimensional(child, dim_cap):
                    continue
                branches.append((child, enumerate_vertices(child, dim_cap), active))
        else:
            branches.append((cell, verts, bool(h.max() > _SIGN_TOL * scale)))
        for child, cverts, active in reversed(branches):
            npM = np.vstack([pM, M[k] if active else np.zeros(d)])
            npm = np.append(pm, m[k] if active else 0.0)
            npat = pattern + (active,)
            if k + 1 < widths[j]:
                stack.append((child, cverts, j, k + 1, npat, M, m, npM, npm))
            elif j + 1 < len(widths):
                nM, nm = start_layer(j + 1, npM, npm)
                stack.append((child, cverts, j + 1, 0, npat, nM, nm,
                              np.zeros((0, d)), np.zeros(0)))
            else:
                stack.append((child, cverts, j + 1, 0, npat, None, None, npM, npm))
    return _sorted(out)


def _sorted(regions: list[LinearRegion]) -> list[LinearRegion]:
    return sorted(regions, key=lambda r: tuple(not a for a in r.pattern))


def exact_preimage(net: Network, region: Hyperrectangle, spec: OutputSpec,
                   neuron_cap: int = DEFAULT_NEURON_CAP,
                   regions: list[LinearRegion] | None = None) -> DisjointPolytopeUnion:
    """Union of polytopes equal to the restricted preimage up to measure zero."""
    if spec.output_dim != net.output_dim:
        raise InputError("spec does not match network output dimension")
    if regions is None:
        regions = linear_regions(net, region, neuron_cap)
    pieces = []
    for lr in regions:
        poly = lr.cell.with_halfspaces(spec.c @ lr.A, spec.c @ lr.c + spec.d)
        if is_full_dimensional(poly):
            pieces.append(poly)
    return DisjointPolytopeUnion(tuple(pieces))


def exact_preimage_volume(net: Network, region: Hyperrectangle, spec: OutputSpec,
                          neuron_cap: int = DEFAULT_NEURON_CAP,
                          regions: list[LinearRegion] | None = None) -> float:
    dup = exact_preimage(net, region, spec, neuron_cap, regions)
    return float(sum(exact_volume(p) for p in dup))
