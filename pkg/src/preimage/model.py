"""Feedforward ReLU networks: representation, file I/O and exact evaluation.

Two on-disk formats are supported.

JSON (canonical)::

    {"input_dim": 2,
     "layers": [{"weights": [[...], ...], "bias": [...], "relu": true}, ...]}

NNet text (the layout used by the public ACAS Xu / VCAS controllers)::

    // any number of comment lines
    numLayers,inputSize,outputSize,maxLayerSize,
    inputSize,hidden1,...,outputSize,
    0,
    min_1,...,min_d,
    max_1,...,max_d,
    mean_1,...,mean_d,mean_out,
    range_1,...,range_d,range_out,
    <for each layer: one line per neuron with its weight row, then one line per bias>

``numLayers`` counts weight layers (hidden + output).  Every layer except the
last is followed by a ReLU.  The normalisation rows (min/max/mean/range) are
kept in ``Network.meta`` and written back unchanged, but they are *not* applied
by :func:`forward`; the network is evaluated on the stored weights as-is.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError, ParseError, ValidationError


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    has_relu: bool

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, ndmin=2)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2:
            raise ValidationError(f"weights must be a matrix, got shape {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ValidationError(
                f"bias length {b.shape[0]} does not match {w.shape[0]} weight rows")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("layer parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    def __eq__(self, other):
        if not isinstance(other, Layer):
            return NotImplemented
        return (self.has_relu == other.has_relu and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.bias, other.bias))

    def __hash__(self):
        return hash((self.weights.tobytes(), self.bias.tobytes(), self.has_relu))

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Network:
    """Layered affine + ReLU model; immutable once constructed."""

    layers: tuple[Layer, ...]
    input_dim: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if self.input_dim < 1:
            raise ValidationError("input_dim must be positive")
        if not layers:
            raise ValidationError("network needs at least one layer")
        prev = self.input_dim
        for i, layer in enumerate(layers):
            if layer.cols != prev:
                raise ValidationError(
                    f"layer {i} expects {layer.cols} inputs but previous width is {prev}")
            prev = layer.rows
        for i, layer in enumerate(layers[:-1]):
            if not layer.has_relu:
                raise ValidationError(f"hidden layer {i} must use ReLU")
        if layers[-1].has_relu:
            raise ValidationError("final layer must not have an activation")

    @property
    def output_dim(self) -> int:
        return self.layers[-1].rows

    @property
    def hidden_layers(self) -> tuple[Layer, ...]:
        return self.layers[:-1]

    @property
    def n_hidden_neurons(self) -> int:
        return sum(layer.rows for layer in self.hidden_layers)


@dataclass(frozen=True)
class OutputSpec:
    """Conjunction of output half-spaces ``c . y + d >= 0``.

    ``c`` is a (K, m) matrix and ``d`` a length-K vector.
    """

    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=np.float64, ndmin=2)
        d = np.array(self.d, dtype=np.float64).reshape(-1)
        if c.shape[0] < 1:
            raise ValidationError("output spec needs at least one constraint")
        if d.shape[0] != c.shape[0]:
            raise ValidationError("one offset per constraint row required")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
            raise ValidationError("output spec coefficients must be finite")
        c.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def n_constraints(self) -> int:
        return self.c.shape[0]

    @property
    def output_dim(self) -> int:
        return self.c.shape[1]

    def satisfied(self, y: np.ndarray) -> np.ndarray:
        """Closed-set membership test for a batch of outputs (N, m)."""
        y = np.atleast_2d(y)
        return np.all(y @ self.c.T + self.d >= 0.0, axis=1)

    def to_json(self) -> list:
        return [{"c": row.tolist(), "d": float(off)} for row, off in zip(self.c, self.d)]

    @classmethod
    def from_json(cls, rows: Sequence[dict]) -> "OutputSpec":
        try:
            c = [list(map(float, r["c"])) for r in rows]
            d = [float(r["d"]) for r in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed output spec: {exc}") from exc
        if not c:
            raise ValidationError("output spec needs at least one constraint")
        if len({len(r) for r in c}) != 1:
            raise ValidationError("all constraint rows must have the same length")
        return cls(np.array(c), np.array(d))


def one_vs_rest(label: int, n_outputs: int) -> OutputSpec:
    """Spec ``y[label] - y[i] >= 0`` for every ``i != label``."""
    if not 0 <= label < n_outputs:
        raise InputError(f"label {label} out of range for {n_outputs} outputs")
    rows = []
    for i in range(n_outputs):
        if i == label:
            continue
        row = np.zeros(n_outputs)
        row[label], row[i] = 1.0, -1.0
        rows.append(row)
    return OutputSpec(np.array(rows), np.zeros(len(rows)))


def forward(net: Network, x) -> np.ndarray:
    """Exact evaluation; accepts one point (d,) or a batch (N, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = np.atleast_2d(x)
    if a.shape[1] != net.input_dim:
        raise InputError(f"expected input of length {net.input_dim}, got {a.shape[1]}")
    for layer in net.layers:
        a = a @ layer.weights.T + layer.bias
        if layer.has_relu:
            a = np.maximum(a, 0.0)
    return a[0] if single else a


def pre_activations(net: Network, x) -> list[np.ndarray]:
    """Pre-activation values of every hidden layer for a batch (N, d)."""
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = []
    for layer in net.hidden_layers:
        h = a @ layer.weights.T + layer.bias
        out.append(h)
        a = np.maximum(h, 0.0)
    return out


def append_spec_rows(net: Network, spec: OutputSpec) -> Network:
    """Network whose k-th output is ``c_k . f(x) + d_k``.

    The output-constraint layer is folded into the final affine layer so that the result
    keeps the affine/ReLU alternation.
    """
    if spec.output_dim != net.output_dim:
        raise InputError(
            f"spec rows have length {spec.output_dim}, network outputs {net.output_dim}")
    last = net.layers[-1]
    folded = Layer(spec.c @ last.weights, spec.c @ last.bias + spec.d, has_relu=False)
    return Network(net.layers[:-1] + (folded,), net.input_dim)


# ---------------------------------------------------------------- file I/O

def network_to_json(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {"weights": layer.weights.tolist(), "bias": layer.bias.tolist(),
             "relu": bool(layer.has_relu)}
            for layer in net.layers
        ],
    }


def network_from_json(obj: dict) -> Network:
    try:
        input_dim = int(obj["input_dim"])
        raw_layers = obj["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"missing or malformed top-level field: {exc}") from exc
    layers = []
    for i, raw in enumerate(raw_layers):
        try:
            layers.append(Layer(np.array(raw["weights"], dtype=np.float64),
                                np.array(raw["bias"], dtype=np.float64),
                                bool(raw["relu"])))
        except KeyError as exc:
            raise ParseError(f"layers[{i}]: missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise ValidationError(f"layers[{i}]: {exc}") from exc
            raise ParseError(f"layers[{i}]: {exc}") from exc
    return Network(tuple(layers), input_dim)


def _nnet_fields(line: str, lineno: int, kind=float) -> list:
    toks = [t.strip() for t in line.strip().split(",")]
    toks = [t for t in toks if t != ""]
    try:
        return [kind(t) for t in toks]
    except ValueError as exc:
        raise ParseError(f"line {lineno}: {exc}") from exc


def parse_nnet(text: str) -> Network:
    lines = text.splitlines()
    comments = []
    i = 0
    while i < len(lines) and (lines[i].startswith("//") or not lines[i].strip()):
        if lines[i].startswith("//"):
            comments.append(lines[i])
        i += 1

    def take(kind=float):
        nonlocal i
        while i < len(lines) and not lines[i].strip():
            i += 1
        if i >= len(lines):
            raise ParseError(f"line {i + 1}: unexpected end of file")
        vals = _nnet_fields(lines[i], i + 1, kind)
        i += 1
        return vals, i

    header, ln = take(int)
    if len(header) < 3:
        raise ParseError(f"line {ln}: header needs numLayers,inputSize,outputSize")
    n_layers, in_size, out_size = header[:3]
    sizes, ln = take(int)
    if len(sizes) != n_layers + 1:
        raise ValidationError(
            f"line {ln}: {len(sizes)} layer sizes declared, expected numLayers+1={n_layers + 1}")
    if sizes[0] != in_size or sizes[-1] != out_size:
        raise ValidationError(f"line {ln}: layer sizes disagree with header in/out sizes")
    flag, _ = take(int)
    mins, _ = take()
    maxs, _ = take()
    means, _ = take()
    ranges, _ = take()
    layers = []
    for k in range(n_layers):
        rows = []
        for _ in range(sizes[k + 1]):
            row, ln = take()
            if len(row) != sizes[k]:
                raise ValidationError(
                    f"line {ln}: layer {k} weight row has {len(row)} entries, expected {sizes[k]}")
            rows.append(row)
        bias = []
        for _ in range(sizes[k + 1]):
            b, ln = take()
            if len(b) != 1:
                raise ValidationError(f"line {ln}: bias line must hold one value")
            bias.append(b[0])
        layers.append(Layer(np.array(rows), np.array(bias), has_relu=k < n_layers - 1))
    while i < len(lines):
        if lines[i].strip():
            raise ValidationError(f"line {i + 1}: trailing data after last layer")
        i += 1
    meta = {"comments": comments, "flag": flag[0] if flag else 0, "mins": mins, "maxs": maxs,
            "means": means, "ranges": ranges}
    return Network(tuple(layers), in_size, meta=meta)


def _row(vals) -> str:
    return ",".join(repr(float(v)) for v in vals) + ","


def format_nnet(net: Network) -> str:
    meta = net.meta or {}
    sizes = [net.input_dim] + [layer.rows for layer in net.layers]
    d = net.input_dim
    out = list(meta.get("comments", []))
    out.append(f"{len(net.layers)},{d},{net.output_dim},{max(sizes)},")
    out.append(",".join(str(s) for s in sizes) + ",")
    out.append(f"{meta.get('flag', 0)},")
    out.append(_row(meta.get("mins", [-np.inf] * d)))
    out.append(_row(meta.get("maxs", [np.inf] * d)))
    out.append(_row(meta.get("means", [0.0] * (d + 1))))
    out.append(_row(meta.get("ranges", [1.0] * (d + 1))))
    for layer in net.layers:
        out.extend(_row(r) for r in layer.weights)
        out.extend(_row([b]) for b in layer.bias)
    return "\n".join(out) + "\n"


def _guess_format(path: Path) -> str:
    return "nnet-text" if path.suffix.lower() == ".nnet" else "json"


def load_network(path, format: str | None = None) -> Network:
    path = Path(path)
    fmt = format or _guess_format(path)
    text = path.read_text()
    if fmt == "json":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        return network_from_json(obj)
    if fmt in ("nnet", "nnet-text"):
        return parse_nnet(text)
    raise InputError(f"unknown network format {fmt!r}")


def save_network(net: Network, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or _guess_format(path)
    if fmt == "json":
        path.write_text(json.dumps(network_to_json(net)) + "\n")
    elif fmt in ("nnet", "nnet-text"):
        path.write_text(format_nnet(net))
    else:
        raise InputError(f"unknown network format {fmt!r}")
