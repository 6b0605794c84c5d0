"""Bound propagation for ReLU networks, with dynamic hull-cut tightening.

The generic engine bounds an affine objective over the relaxation in which
every ReLU neuron is sandwiched between one affine lower and one affine
upper function of its predecessors.  A backward pass substitutes neurons in
descending order (upper function when the running coefficient is positive,
lower when negative) until only inputs remain, then maximizes the final
affine expression over the input box in closed form.  A forward pass replays
the recorded substitution choices to recover a full optimal point of the
relaxation, which the iterative scheme feeds to the single-neuron hull
separation routine to swap in violated upper inequalities.

Everything here indexes neurons by 0-based position; objectives live over
the state space (inputs + ReLU neurons, outputs elided into coefficients).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hull
from .network import BoxDomain, Network

INTERVAL = "interval"
FASTLIN = "fastlin"
DEEPPOLY = "deeppoly"

PROPAGATION_METHODS = (INTERVAL, FASTLIN, DEEPPOLY)


@dataclass(frozen=True, eq=False)
class AffineFunc:
    """Sparse affine function ``w . z[idx] + b`` of earlier neurons."""

    idx: np.ndarray
    w: np.ndarray
    b: float

    def value(self, z) -> float:
        if self.idx.size == 0:
            return self.b
        return float(self.w @ np.asarray(z)[self.idx]) + self.b


def _const_func(b):
    return AffineFunc(idx=np.empty(0, dtype=np.intp), w=np.empty(0), b=float(b))


def _row_func(idx, w, b, scale=1.0, shift=0.0):
    return AffineFunc(idx=idx, w=scale * w, b=scale * b + shift)


@dataclass(frozen=True, eq=False)
class AffineBoundPair:
    """Affine under/over-estimators of one neuron's post-activation."""

    lower: AffineFunc
    upper: AffineFunc


@dataclass(frozen=True)
class ScalarBounds:
    """Pre-activation interval ``[pre_lower, pre_upper]`` for one neuron."""

    pre_lower: float
    pre_upper: float

    def is_mixed(self) -> bool:
        return self.pre_lower < 0.0 < self.pre_upper


@dataclass(eq=False)
class LinearExpr:
    """Dense affine objective over neuron positions ``0 .. eta-1``."""

    coeffs: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)

    @property
    def eta(self) -> int:
        return self.coeffs.shape[0]

    def negated(self) -> "LinearExpr":
        return LinearExpr(-self.coeffs, -self.constant)

    def value(self, z) -> float:
        return float(self.coeffs @ np.asarray(z)[:self.eta]) + self.constant


def expr_from_row(idx, w, b, eta) -> LinearExpr:
    c = np.zeros(eta)
    c[idx] = w
    return LinearExpr(c, float(b))


@dataclass(frozen=True, eq=False)
class NeuronHull:
    """A mixed neuron's hull instance, tied to its global input positions."""

    pos: int
    inputs: np.ndarray
    inst: hull.HullInstance

    def cut_as_pair_upper(self, cut: hull.HullCut) -> AffineFunc:
        nz = np.flatnonzero(cut.coeffs)
        return AffineFunc(idx=self.inputs[nz], w=cut.coeffs[nz], b=cut.constant)


@dataclass(eq=False)
class BackwardResult:
    bound: float
    x_star: np.ndarray
    ub_used: np.ndarray  # bool per position < eta; False where never substituted
    input_expr: LinearExpr  # residual expression over inputs only


def box_maximize(expr: LinearExpr, box: BoxDomain) -> tuple[float, np.ndarray]:
    """Maximize an input-space affine expression over the box.

    Per coordinate: upper bound when the coefficient is positive, lower when
    negative, midpoint when exactly zero (keeps the returned point centered
    and deterministic).
    """
    m = len(box)
    if expr.eta > m and np.any(expr.coeffs[m:] != 0.0):
        raise ValueError("expression references non-input neurons")
    c = expr.coeffs[:m]
    x = np.where(c > 0.0, box.upper, np.where(c < 0.0, box.lower, box.midpoint()))
    return float(c @ x) + expr.constant, x


def backward_pass(box: BoxDomain, pairs: dict[int, AffineBoundPair],
                  objective: LinearExpr) -> BackwardResult:
    """Eliminate intermediate neurons from the objective, highest first.

    Raises ``KeyError`` if a substituted neuron has no bound pair.
    """
    m = len(box)
    eta = objective.eta
    c = objective.coeffs.copy()
    const = objective.constant
    ub_used = np.zeros(eta, dtype=bool)
    for i in range(eta - 1, m - 1, -1):
        ci = c[i]
        if ci == 0.0:
            continue
        if i not in pairs:
            raise KeyError(f"missing bound pair for neuron position {i}")
        pair = pairs[i]
        func = pair.upper if ci > 0.0 else pair.lower
        ub_used[i] = ci > 0.0
        c[i] = 0.0
        if func.idx.size:
            c[func.idx] += ci * func.w
        const += ci * func.b
    residual = LinearExpr(c[:m].copy(), const)
    bound, x_star = box_maximize(residual, box)
    return BackwardResult(bound=bound, x_star=x_star, ub_used=ub_used, input_expr=residual)


def forward_pass(x_star, pairs: dict[int, AffineBoundPair], ub_used, m, eta) -> np.ndarray:
    """Complete an input point to a full relaxation point.

    Each neuron takes the value of whichever bounding function the backward
    pass used for it (lower when it was never substituted); the result is an
    optimal solution of the relaxed problem the backward pass solved.
    """
    z = np.empty(eta)
    z[:m] = x_star
    for i in range(m, eta):
        pair = pairs[i]
        func = pair.upper if ub_used[i] else pair.lower
        z[i] = func.value(z)
    return z


def initial_pair(method, sb: ScalarBounds, idx, w, b) -> AffineBoundPair:
    """Menu of initial bounding functions for one ReLU neuron.

    Fixed-sign neurons are linearized exactly (the row itself, or zero).  A
    mixed neuron gets the chord of the ReLU over ``[pre_lower, pre_upper]``
    as its upper function; the lower function is the scaled row for
    ``fastlin``, and for ``deeppoly`` whichever of 0 and the row gives the
    smaller relaxation area.  The ``interval`` method uses the constant
    post-activation range instead, which makes the backward pass reproduce
    plain interval arithmetic.
    """
    lo, hi = sb.pre_lower, sb.pre_upper
    if method == INTERVAL:
        return AffineBoundPair(lower=_const_func(max(0.0, lo)), upper=_const_func(max(0.0, hi)))
    if method not in PROPAGATION_METHODS:
        raise ValueError(f"unknown bounding method {method!r}")
    if lo >= 0.0:
        row = _row_func(idx, w, b)
        return AffineBoundPair(lower=row, upper=row)
    if hi <= 0.0:
        zero = _const_func(0.0)
        return AffineBoundPair(lower=zero, upper=zero)
    slope = hi / (hi - lo)
    upper = _row_func(idx, w, b, scale=slope, shift=-slope * lo)
    if method == FASTLIN:
        lower = _row_func(idx, w, b, scale=slope)
    else:  # deeppoly: zero when the negative side dominates, else the row
        lower = _const_func(0.0) if abs(lo) >= abs(hi) else _row_func(idx, w, b)
    return AffineBoundPair(lower=lower, upper=upper)


def interval_bounds(net: Network, box: BoxDomain) -> list[ScalarBounds]:
    """Plain interval arithmetic; one pre-activation interval per neuron.

    Input positions report the box itself, outputs their affine range.
    """
    if len(box) != net.input_dim:
        raise ValueError("box dimension does not match network input")
    m = net.input_dim
    post_lo = np.empty(net.n_state)
    post_hi = np.empty(net.n_state)
    post_lo[:m], post_hi[:m] = box.lower, box.upper
    sb = [ScalarBounds(float(box.lower[i]), float(box.upper[i])) for i in range(m)]
    for pos in range(m, net.n_neurons):
        idx, w, b = net.row(pos)
        lo, hi = _interval_step(idx, w, b, post_lo, post_hi)
        sb.append(ScalarBounds(lo, hi))
        if pos < net.n_state:
            post_lo[pos] = max(0.0, lo)
            post_hi[pos] = max(0.0, hi)
    return sb


def _interval_step(idx, w, b, post_lo, post_hi):
    if idx.size == 0:
        return b, b
    wp = np.maximum(w, 0.0)
    wn = np.minimum(w, 0.0)
    lo = float(wp @ post_lo[idx] + wn @ post_hi[idx]) + b
    hi = float(wp @ post_hi[idx] + wn @ post_lo[idx]) + b
    return lo, hi


def post_activation_bounds(net: Network, sb: list[ScalarBounds]) -> tuple[np.ndarray, np.ndarray]:
    """Post-activation box implied by per-neuron pre-activation bounds.

    ``sb`` may cover only a prefix of the state neurons (mid-sweep use); the
    returned arrays match its coverage.
    """
    known = min(len(sb), net.n_state)
    post_lo = np.empty(known)
    post_hi = np.empty(known)
    m = net.input_dim
    for pos in range(known):
        lo, hi = sb[pos].pre_lower, sb[pos].pre_upper
        if pos < m:
            post_lo[pos], post_hi[pos] = lo, hi
        else:
            post_lo[pos], post_hi[pos] = max(0.0, lo), max(0.0, hi)
    return post_lo, post_hi


def build_neuron_hulls(net: Network, sb: list[ScalarBounds],
                       post_lo=None, post_hi=None, upto=None) -> dict[int, NeuronHull]:
    """Hull instances for every mixed ReLU neuron below position ``upto``."""
    if post_lo is None or post_hi is None:
        post_lo, post_hi = post_activation_bounds(net, sb)
    stop = min(upto if upto is not None else net.n_state, net.n_state, post_lo.shape[0])
    hulls = {}
    for pos in range(net.input_dim, stop):
        if sb[pos].is_mixed():
            idx, w, b = net.row(pos)
            inst = hull.make_hull_instance(w, b, post_lo[idx], post_hi[idx])
            hulls[pos] = NeuronHull(pos=pos, inputs=idx, inst=inst)
    return hulls


def tightened_bound(box: BoxDomain, pairs: dict[int, AffineBoundPair],
                    objective: LinearExpr, iterations: int,
                    hulls: dict[int, NeuronHull] | None = None) -> float:
    """Best bound over ``iterations`` rounds of separate-and-swap.

    Each round recovers the relaxation's optimal point, asks every eligible
    mixed neuron below the objective for its most violated hull inequality
    at that point, swaps any violated one in as the neuron's new upper
    function (no tolerance: any positive violation swaps), and re-runs the
    backward pass.  ``iterations=0`` is exactly the initial method.

    Swaps are scoped to this call: ``pairs`` is worked on as a copy, so one
    objective's swapped inequalities (tighter at its own optimum, possibly
    looser elsewhere) never leak into other bound computations.  This keeps
    every result at or below the plain initial-method bound.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    pairs = dict(pairs)
    m = len(box)
    res = backward_pass(box, pairs, objective)
    best = res.bound
    if not hulls:
        return best
    eligible = sorted(p for p in hulls if m <= p < objective.eta)
    for _ in range(iterations):
        z = forward_pass(res.x_star, pairs, res.ub_used, m, objective.eta)
        swapped = False
        for p in eligible:
            nh = hulls[p]
            sep = hull.separate_sort(nh.inst, z[nh.inputs], z[p])
            if sep is not None:
                pairs[p] = AffineBoundPair(lower=pairs[p].lower,
                                           upper=nh.cut_as_pair_upper(sep.cut))
                swapped = True
        if not swapped:
            break
        res = backward_pass(box, pairs, objective)
        if res.bound < best:
            best = res.bound
    return best


@dataclass(eq=False)
class BoundsResult:
    """All scalar bounds of one propagation run plus its reusable state."""

    method: str
    iterations: int
    pre: list[ScalarBounds]
    post_lower: np.ndarray
    post_upper: np.ndarray
    pairs: dict[int, AffineBoundPair] = field(repr=False)
    hulls: dict[int, NeuronHull] = field(repr=False)
    net: Network = field(repr=False)
    box: BoxDomain = field(repr=False)
    baseline: "BoundsResult | None" = field(default=None, repr=False)

    def output_bounds(self) -> list[ScalarBounds]:
        return self.pre[self.net.n_state:]

    def interval_objective_bound(self, objective: LinearExpr) -> float:
        """Interval-arithmetic bound of an objective over the post boxes."""
        c = objective.coeffs
        return float(np.maximum(c, 0.0) @ self.post_upper[:c.shape[0]]
                     + np.minimum(c, 0.0) @ self.post_lower[:c.shape[0]]) + objective.constant

    def bound_objective(self, objective: LinearExpr, iterations=None) -> float:
        """Bound a fresh state-space objective with this run's pairs/hulls.

        Takes the best of the propagated bound and the trivial interval
        bound, mirroring the per-neuron rule of the sweep.
        """
        t = self.iterations if iterations is None else iterations
        b = tightened_bound(self.box, self.pairs, objective, t, self.hulls)
        b = min(b, self.interval_objective_bound(objective))
        if self.baseline is not None:
            b = min(b, self.baseline.bound_objective(objective))
        return b


def compute_all_bounds(net: Network, box: BoxDomain, method=DEEPPOLY,
                       iterations=1) -> BoundsResult:
    """Forward sweep computing pre-activation bounds for every neuron.

    For each non-input neuron the pre-activation row is bounded from above
    and below with :func:`tightened_bound` (so separation cuts refine the
    bounds when ``iterations > 0``), and the result is intersected with the
    plain interval-arithmetic bound.  The neuron's bounding pair and, when
    it is mixed, its hull instance are then built for use by all later
    neurons; each bound computation works on its own copy of the pairs, so
    the stored bounding functions stay the initial-method ones.  Output
    neurons contribute no state; their rows are bounded the same way (the
    final affine layer is treated as an objective, never relaxed).

    A tightened sweep (``iterations > 0``) also runs the plain
    ``iterations=0`` sweep and takes the elementwise best of the two chains.
    Tighter intermediate bounds do not always give a tighter final menu
    bound (the area rule for the lower function is not monotone in them), so
    without this the tightened method could occasionally report a weaker
    bound than its own baseline.
    """
    m = net.input_dim
    if len(box) != m:
        raise ValueError("box dimension does not match network input")
    baseline = compute_all_bounds(net, box, method, 0) if iterations > 0 else None
    pre: list[ScalarBounds] = [ScalarBounds(float(box.lower[i]), float(box.upper[i]))
                               for i in range(m)]
    post_lo = np.empty(net.n_state)
    post_hi = np.empty(net.n_state)
    post_lo[:m], post_hi[:m] = box.lower, box.upper
    pairs: dict[int, AffineBoundPair] = {}
    hulls: dict[int, NeuronHull] = {}
    for pos in range(m, net.n_neurons):
        idx, w, b = net.row(pos)
        ilo, ihi = _interval_step(idx, w, b, post_lo, post_hi)
        obj = expr_from_row(idx, w, b, eta=min(pos, net.n_state))
        hi = tightened_bound(box, pairs, obj, iterations, hulls)
        lo = -tightened_bound(box, pairs, obj.negated(), iterations, hulls)
        lo, hi = max(lo, ilo), min(hi, ihi)
        if baseline is not None:
            lo = max(lo, baseline.pre[pos].pre_lower)
            hi = min(hi, baseline.pre[pos].pre_upper)
        lo = min(lo, hi)  # guard against tolerance-level crossings
        sb = ScalarBounds(lo, hi)
        pre.append(sb)
        if pos >= net.n_state:
            continue
        pairs[pos] = initial_pair(method, sb, idx, w, b)
        if sb.is_mixed():
            inst = hull.make_hull_instance(w, b, post_lo[idx], post_hi[idx])
            hulls[pos] = NeuronHull(pos=pos, inputs=idx, inst=inst)
        post_lo[pos] = max(0.0, lo)
        post_hi[pos] = max(0.0, hi)
    return BoundsResult(method=method, iterations=iterations, pre=pre,
                        post_lower=post_lo, post_upper=post_hi,
                        pairs=pairs, hulls=hulls, net=net, box=box,
                        baseline=baseline)
