"""Shared fixtures: the hand-worked example network and instance generators.

The "golden" network is a 2-input, 4-ReLU, 1-output network whose bounds,
hull cuts, and separation values are known exactly and are asserted against
hand-derived constants throughout the suite:

    h11 = max(0, -x1 + x2 + 1)      h21 = max(0, h12 + 1)
    h12 = max(0, -x1 + 0.5)         h22 = max(0, -1.5 h11 + h12 + 0.5)
    y   = h21 + h22                 x in [-1, 1]^2
"""

import numpy as np
import pytest

from relucert.network import INPUT, OUTPUT, RELU, BoxDomain, Network, Neuron
from relucert import hull


def make_golden_network() -> Network:
    neurons = [
        Neuron(1, INPUT, (), 0.0),
        Neuron(2, INPUT, (), 0.0),
        Neuron(3, RELU, ((1, -1.0), (2, 1.0)), 1.0),
        Neuron(4, RELU, ((1, -1.0),), 0.5),
        Neuron(5, RELU, ((4, 1.0),), 1.0),
        Neuron(6, RELU, ((3, -1.5), (4, 1.0)), 0.5),
        Neuron(7, OUTPUT, ((5, 1.0), (6, 1.0)), 0.0),
    ]
    return Network(2, neurons, [7])


@pytest.fixture(scope="session")
def golden_net() -> Network:
    return make_golden_network()


@pytest.fixture(scope="session")
def golden_box() -> BoxDomain:
    return BoxDomain(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))


@pytest.fixture(scope="session")
def h22_instance() -> hull.HullInstance:
    """The hull instance of the golden network's h22 neuron: weights
    (-1.5, 1), bias 0.5, over the post-activation box [0,3] x [0,1.5]."""
    return hull.make_hull_instance([-1.5, 1.0], 0.5, [0.0, 0.0], [3.0, 1.5])


def random_mixed_instance(rng, n, allow_zero_weights=False) -> hull.HullInstance:
    """A random sign-spanning hull instance with a nondegenerate box."""
    while True:
        w = rng.uniform(-2.0, 2.0, n)
        if allow_zero_weights and n > 1:
            w[rng.integers(0, n)] = 0.0
        lo = rng.uniform(-1.0, 1.0, n)
        hi = lo + rng.uniform(0.1, 2.0, n)
        vmax = float(np.maximum(w, 0.0) @ hi + np.minimum(w, 0.0) @ lo)
        vmin = float(np.maximum(w, 0.0) @ lo + np.minimum(w, 0.0) @ hi)
        if vmax - vmin < 1e-6:
            continue
        # bias placing 0 strictly inside (vmin + b, vmax + b]
        b = -float(rng.uniform(vmin + 1e-9, vmax))
        inst = hull.make_hull_instance(w, b, lo, hi)
        if hull.classify_phase(inst) == hull.MIXED and inst.size >= 1:
            return inst


def envelope_min_by_enumeration(inst, x) -> float:
    """Independent oracle: the least upper-inequality value at x, by direct
    evaluation of the defining expression over the enumerated pair family."""
    x = np.asarray(x, dtype=float)[inst.support]
    best = np.inf
    for I, h in hull.enumerate_cut_pairs(inst):
        ell = hull.corner_value(inst, I)
        val = sum(inst.w[i] * (x[i] - inst.min_corner[i]) for i in I)
        val += ell / (inst.max_corner[h] - inst.min_corner[h]) * (x[h] - inst.min_corner[h])
        best = min(best, val)
    return best


def sample_box_point(inst, rng):
    return rng.uniform(inst.lower, inst.upper)
