"""Neuron-ordered representation of trained ReLU networks.

A network is a flat, topologically ordered list of neurons: the first ``m``
neurons are inputs, followed by ReLU neurons, followed by affine output
neurons.  Every neuron carries a sparse affine row over *earlier* neurons, so
arbitrary skip connections are supported and layers are only an emergent
property of the weight pattern.  Instances are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INPUT = "input"
RELU = "relu"
OUTPUT = "output"

_KINDS = (INPUT, RELU, OUTPUT)

# Serialization uses 17 significant digits, enough to round-trip IEEE doubles.
_FLOAT_FMT = "%.17g"


class NetworkParseError(ValueError):
    """Malformed network or instance file; carries the offending location."""

    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class NetworkInvariantError(ValueError):
    """Structural invariant violation, naming the offending neuron index."""

    def __init__(self, neuron_index, message):
        self.neuron_index = neuron_index
        super().__init__(f"neuron {neuron_index}: {message}")


@dataclass(frozen=True)
class Neuron:
    """One neuron: 1-based position, kind, and its sparse incoming row.

    ``weights`` is a tuple of ``(source_index, weight)`` pairs with every
    source strictly earlier in the order.  Input neurons have no weights and
    zero bias.
    """

    index: int
    kind: str
    weights: tuple[tuple[int, float], ...]
    bias: float


@dataclass(frozen=True, eq=False)
class BoxDomain:
    """Axis-aligned box ``lower <= x <= upper`` (equal coordinates allowed)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ValueError(f"box coordinate {bad}: lower {lo[bad]} > upper {hi[bad]}")

    def __len__(self):
        return self.lower.shape[0]

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def sample(self, rng, count=None) -> np.ndarray:
        """Uniform sample(s); shape (len,) or (count, len)."""
        if count is None:
            return rng.uniform(self.lower, self.upper)
        return rng.uniform(self.lower, self.upper, size=(count, len(self)))


class Network:
    """Validated, immutable network in neuron order.

    Attributes:
        input_dim (int): number of input neurons ``m``.
        neurons (tuple of Neuron): all neurons, indices contiguous from 1.
        output_indices (tuple of int): 1-based indices of the output neurons.
        n_neurons (int): total neuron count including outputs.
        n_hidden (int): count of ReLU neurons.
        n_state (int): inputs + ReLU neurons; the length of the
            post-activation vector (outputs are not part of the state).
        rows (tuple): per non-input neuron position, ``(idx, w, b)`` with
            0-based source positions as int arrays and weights as float
            arrays.
    """

    def __init__(self, input_dim, neurons, output_indices):
        self.input_dim = int(input_dim)
        self.neurons = tuple(neurons)
        self.output_indices = tuple(int(i) for i in output_indices)
        self._validate()
        self.n_neurons = len(self.neurons)
        self.n_outputs = len(self.output_indices)
        self.n_state = self.n_neurons - self.n_outputs
        self.n_hidden = self.n_state - self.input_dim
        rows = []
        for nr in self.neurons[self.input_dim:]:
            if nr.weights:
                idx = np.fromiter((j - 1 for j, _ in nr.weights), dtype=np.intp)
                w = np.fromiter((v for _, v in nr.weights), dtype=float)
            else:
                idx = np.empty(0, dtype=np.intp)
                w = np.empty(0, dtype=float)
            rows.append((idx, w, float(nr.bias)))
        self.rows = tuple(rows)

    def _validate(self):
        m = self.input_dim
        if m < 1:
            raise NetworkInvariantError(0, "input dimension must be >= 1")
        if len(self.neurons) < m:
            raise NetworkInvariantError(0, f"fewer than m={m} neurons")
        if not self.output_indices:
            raise NetworkInvariantError(0, "network declares no outputs")
        out_set = set(self.output_indices)
        seen_output = False
        for pos, nr in enumerate(self.neurons):
            idx = pos + 1
            if nr.index != idx:
                raise NetworkInvariantError(
                    nr.index, f"index not contiguous at position {pos} (expected {idx})")
            if nr.kind not in _KINDS:
                raise NetworkInvariantError(idx, f"unknown kind {nr.kind!r}")
            if idx <= m:
                if nr.kind != INPUT:
                    raise NetworkInvariantError(idx, "first m neurons must be inputs")
                if nr.weights or nr.bias != 0.0:
                    raise NetworkInvariantError(idx, "input neuron must have no weights and zero bias")
                continue
            if nr.kind == INPUT:
                raise NetworkInvariantError(idx, "input neuron after position m")
            if (nr.kind == OUTPUT) != (idx in out_set):
                raise NetworkInvariantError(idx, "kind disagrees with declared output indices")
            if nr.kind == OUTPUT:
                seen_output = True
            elif seen_output:
                raise NetworkInvariantError(idx, "relu neuron after an output neuron")
            prev = 0
            for j, _ in nr.weights:
                if not 1 <= j < idx:
                    raise NetworkInvariantError(idx, f"weight references non-earlier neuron {j}")
                if j in out_set:
                    raise NetworkInvariantError(idx, f"weight references output neuron {j}")
                if j <= prev:
                    raise NetworkInvariantError(idx, "weight sources must be strictly increasing")
                prev = j
        if set(self.output_indices) != {nr.index for nr in self.neurons if nr.kind == OUTPUT}:
            raise NetworkInvariantError(0, "output_indices do not match neurons of kind output")

    def row(self, pos):
        """Affine row ``(idx, w, b)`` of the non-input neuron at 0-based ``pos``."""
        return self.rows[pos - self.input_dim]

    def kind_at(self, pos):
        return self.neurons[pos].kind


def eval_network(net: Network, x) -> tuple[np.ndarray, np.ndarray]:
    """Exact forward evaluation.

    Returns ``(z, y)``: the post-activation vector over inputs + ReLU
    neurons, and the output vector.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.input_dim},)")
    z = np.empty(net.n_state)
    z[:net.input_dim] = x
    y = np.empty(net.n_outputs)
    for pos in range(net.input_dim, net.n_neurons):
        idx, w, b = net.row(pos)
        val = float(w @ z[idx]) + b if idx.size else b
        if net.neurons[pos].kind == RELU:
            z[pos] = val if val > 0.0 else 0.0
        else:
            y[pos - net.n_state] = val
    return z, y


def classify(net: Network, x) -> int:
    """Predicted class: argmax output, ties broken toward the lower index."""
    _, y = eval_network(net, x)
    return int(np.argmax(y))


def generate_random_network(layer_sizes, seed, weight_scale=1.0) -> Network:
    """Dense layer-to-layer network with uniform weights in ``[-scale, scale]``.

    ``layer_sizes`` is ``[inputs, hidden..., outputs]``; hidden layers are
    ReLU and the last layer is affine.  A single-element spec produces a
    network with no ReLU neurons whose outputs are a random affine map of the
    inputs.  Deterministic for a fixed seed.
    """
    sizes = [int(s) for s in layer_sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError("all layer sizes must be >= 1")
    if len(sizes) == 1:
        sizes = sizes * 2
    rng = np.random.default_rng(seed)
    m = sizes[0]
    neurons = [Neuron(i, INPUT, (), 0.0) for i in range(1, m + 1)]
    prev = list(range(1, m + 1))
    for depth, size in enumerate(sizes[1:], start=1):
        kind = OUTPUT if depth == len(sizes) - 1 else RELU
        cur = []
        for _ in range(size):
            idx = len(neurons) + 1
            w = rng.uniform(-weight_scale, weight_scale, size=len(prev))
            b = float(rng.uniform(-weight_scale, weight_scale))
            neurons.append(Neuron(idx, kind, tuple(zip(prev, w.tolist())), b))
            cur.append(idx)
        prev = cur
    return Network(m, neurons, prev)


def save_network(net: Network, path):
    """Write the human-diffable text format (17 significant digits)."""
    with open(path, "w") as fh:
        outs = ",".join(str(i) for i in net.output_indices)
        fh.write(f"m={net.input_dim} outputs={outs}\n")
        for nr in net.neurons:
            parts = [str(nr.index), nr.kind, _FLOAT_FMT % nr.bias]
            if nr.weights:
                terms = " ".join(f"({j},{_FLOAT_FMT % v})" for j, v in nr.weights)
                parts.append("w:" + terms)
            fh.write(" ".join(parts) + "\n")


def load_network(path, weight_zero_tol=None) -> Network:
    """Parse and validate a network file.

    ``weight_zero_tol``, when given, drops weights with magnitude below the
    tolerance at load time; enable it for the LP-based pipelines, which are
    sensitive to tiny coefficients.
    """
    neurons = []
    m = None
    outputs = None
    with open(path) as fh:
        lines = fh.readlines()
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if m is None:
            try:
                m_part, out_part = line.split()
                if not m_part.startswith("m=") or not out_part.startswith("outputs="):
                    raise ValueError
                m = int(m_part[2:])
                outputs = [int(s) for s in out_part[8:].split(",") if s]
            except ValueError:
                raise NetworkParseError(path, line_no, f"bad header {line!r}") from None
            if not outputs:
                raise NetworkParseError(path, line_no, "header declares no outputs")
            continue
        fields = line.split()
        if len(fields) < 3:
            raise NetworkParseError(path, line_no, f"expected 'i kind b ...', got {line!r}")
        try:
            idx = int(fields[0])
            kind = fields[1]
            bias = float(fields[2])
        except ValueError:
            raise NetworkParseError(path, line_no, f"bad index/kind/bias in {line!r}") from None
        weights = []
        rest = fields[3:]
        if rest:
            if not rest[0].startswith("w:"):
                raise NetworkParseError(path, line_no, "weight list must start with 'w:'")
            rest[0] = rest[0][2:]
            for term in rest:
                if not (term.startswith("(") and term.endswith(")")):
                    raise NetworkParseError(path, line_no, f"bad weight term {term!r}")
                try:
                    j_s, v_s = term[1:-1].split(",")
                    j, v = int(j_s), float(v_s)
                except ValueError:
                    raise NetworkParseError(path, line_no, f"bad weight term {term!r}") from None
                if weight_zero_tol is not None and abs(v) < weight_zero_tol:
                    continue
                weights.append((j, v))
        neurons.append(Neuron(idx, kind, tuple(weights), bias))
    if m is None:
        raise NetworkParseError(path, 1, "missing header line")
    if not neurons:
        raise NetworkParseError(path, len(lines) or 1, "file declares no neurons")
    return Network(m, neurons, outputs)
