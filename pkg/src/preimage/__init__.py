"""Polytope under-approximation of neural-network preimages.

Typical use::

    from preimage import approximate_preimage, load_network, one_vs_rest
    net = load_network("net.json")
    dup, report, state = approximate_preimage(net, one_vs_rest(0, 4), box)
"""
from .approximator import InputConstraints, LossConfig, RegionApproximation, approximate_region
from .errors import (CapabilityError, InputError, ParseError, PreimageError, RefinementError,
                     ValidationError)
from .geometry import (DisjointPolytopeUnion, Hyperrectangle, Polytope, dup_exact_volume,
                       exact_volume, outer_box)
from .model import Layer, Network, OutputSpec, forward, load_network, one_vs_rest, save_network
from .oracle import exact_preimage, exact_preimage_volume
from .quantverify import QuantitativeProperty, Verdict, verify
from .refinement import RefineConfig, RunReport, approximate_preimage

__version__ = "0.1.0"
