"""Exact convex hull of a single ReLU neuron over a box.

The object of study is ``S = {(x, y) in [L, U] x R : y = max(0, w.x + b)}``.
When the pre-activation ``w.x + b`` changes sign over the box, the convex
hull of ``S`` is ``y >= w.x + b``, ``y >= 0``, the box bounds, and one upper
inequality per pair ``(I, h)`` drawn from an (exponentially large but
efficiently separable) family indexed by box edges crossed by the
pre-activation hyperplane.

All index sets handed to and returned from this module are 0-based positions
into the instance's *retained* coordinate list (zero weights and degenerate
coordinates are folded away at construction; emitted cuts are re-expanded to
the original coordinates with zero coefficients).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALWAYS_ACTIVE = "always_active"
ALWAYS_INACTIVE = "always_inactive"
MIXED = "mixed"

# Hard ceiling for brute-force enumeration of the cut family.
ENUMERATION_CAP = 20


@dataclass(frozen=True, eq=False)
class HullInstance:
    """One neuron's hull data, reduced to coordinates that matter.

    Attributes:
        dim: original input dimension (before filtering).
        support: original positions of the retained coordinates.
        w: retained (nonzero) weights.
        b: bias with every folded coordinate's contribution absorbed.
        lower/upper: retained original box bounds.
        min_corner/max_corner: per retained coordinate, the bound value that
            minimizes / maximizes its weighted term; the pre-activation is
            smallest at ``min_corner`` and largest at ``max_corner``.
        cap: ``w * (max_corner - min_corner)``, strictly positive.
        val_max: pre-activation at ``max_corner`` (its maximum over the box).
        val_min: pre-activation at ``min_corner`` (its minimum over the box).
    """

    dim: int
    support: np.ndarray
    w: np.ndarray
    b: float
    lower: np.ndarray
    upper: np.ndarray
    min_corner: np.ndarray
    max_corner: np.ndarray
    cap: np.ndarray
    val_max: float
    val_min: float

    @property
    def size(self) -> int:
        """Number of retained coordinates."""
        return self.w.shape[0]

    def preactivation(self, x) -> float:
        """``w.x + b`` evaluated on original coordinates."""
        x = np.asarray(x, dtype=float)
        return float(self.w @ x[self.support]) + self.b

    def ratios(self, x) -> np.ndarray:
        """Normalized positions ``(x_i - min_corner_i) / (max - min)``; in
        [0, 1] for x inside the box."""
        x = np.asarray(x, dtype=float)[self.support]
        return (x - self.min_corner) / (self.max_corner - self.min_corner)


@dataclass(frozen=True, eq=False)
class HullCut:
    """A realized upper inequality ``y <= coeffs . x + constant``.

    ``index_set`` and ``anchor`` are the defining pair: the inequality
    interpolates the ReLU between the box corner that zeroes it and the
    corner reached by raising the ``anchor`` coordinate.
    """

    index_set: tuple[int, ...]
    anchor: int
    coeffs: np.ndarray
    constant: float

    def value(self, x) -> float:
        return float(self.coeffs @ np.asarray(x, dtype=float)) + self.constant


@dataclass(frozen=True, eq=False)
class Separation:
    """Most violated hull inequality at a point, with its envelope value."""

    cut: HullCut
    envelope: float
    violation: float


def make_hull_instance(w, b, box_lower, box_upper) -> HullInstance:
    """Build an instance, folding zero weights and flat coordinates into b."""
    w = np.asarray(w, dtype=float)
    lo = np.asarray(box_lower, dtype=float)
    hi = np.asarray(box_upper, dtype=float)
    if not (w.shape == lo.shape == hi.shape) or w.ndim != 1:
        raise ValueError("w and box bounds must be 1-d arrays of equal length")
    if np.any(lo > hi):
        raise ValueError("box has lower > upper")
    keep = (w != 0.0) & (lo < hi)
    folded = ~keep & (w != 0.0)
    b = float(b) + float(w[folded] @ lo[folded])
    w_k, lo_k, hi_k = w[keep], lo[keep], hi[keep]
    pos = w_k >= 0.0
    min_corner = np.where(pos, lo_k, hi_k)
    max_corner = np.where(pos, hi_k, lo_k)
    cap = w_k * (max_corner - min_corner)
    val_max = float(w_k @ max_corner) + b
    val_min = float(w_k @ min_corner) + b
    return HullInstance(
        dim=w.shape[0],
        support=np.flatnonzero(keep),
        w=w_k, b=b, lower=lo_k, upper=hi_k,
        min_corner=min_corner, max_corner=max_corner,
        cap=cap, val_max=val_max, val_min=val_min)


def corner_value(inst: HullInstance, low_set) -> float:
    """Pre-activation at the box corner taking ``min_corner`` on ``low_set``
    and ``max_corner`` elsewhere.

    Over all subsets this is the vertex function whose sign pattern indexes
    the hull's upper facets; it decreases as ``low_set`` grows.
    """
    idx = np.fromiter(low_set, dtype=np.intp) if not isinstance(low_set, np.ndarray) else low_set
    if idx.size == 0:
        return inst.val_max
    if np.any(idx < 0) or np.any(idx >= inst.size) or np.unique(idx).size != idx.size:
        raise ValueError("low_set must be distinct retained coordinate positions")
    return inst.val_max - float(inst.cap[idx].sum())


def classify_phase(inst: HullInstance) -> str:
    """Fixed-sign classification of the pre-activation over the box."""
    if inst.val_min >= 0.0:
        return ALWAYS_ACTIVE
    if inst.val_max < 0.0:
        return ALWAYS_INACTIVE
    return MIXED


def _require_mixed(inst):
    if classify_phase(inst) != MIXED:
        raise ValueError("operation requires a sign-spanning (mixed) instance")


def cut_from_pair(inst: HullInstance, low_set, anchor: int) -> HullCut:
    """Expand the pair ``(low_set, anchor)`` into explicit coefficients.

    The inequality is
    ``y <= sum_{i in I} w_i (x_i - min_corner_i)
           + corner_value(I)/(max_corner_h - min_corner_h) (x_h - min_corner_h)``
    expanded to ``a.x + c`` over the original coordinates (zeros on folded
    ones).  Raises if the pair does not define a facet, i.e. unless
    ``corner_value(I) >= 0 > corner_value(I + anchor)``.
    """
    I = tuple(sorted(int(i) for i in low_set))
    h = int(anchor)
    ell_i = corner_value(inst, I)
    if h in I or not 0 <= h < inst.size:
        raise ValueError(f"anchor {h} invalid for index set {I}")
    ell_ih = ell_i - float(inst.cap[h])
    if not (ell_i >= 0.0 and ell_ih < 0.0):
        raise ValueError(f"pair ({I}, {h}) is not in the cut family: "
                         f"values {ell_i}, {ell_ih}")
    coeffs = np.zeros(inst.dim)
    const = 0.0
    for i in I:
        coeffs[inst.support[i]] = inst.w[i]
        const -= inst.w[i] * inst.min_corner[i]
    slope = ell_i / (inst.max_corner[h] - inst.min_corner[h])
    coeffs[inst.support[h]] += slope
    const -= slope * inst.min_corner[h]
    return HullCut(index_set=I, anchor=h, coeffs=coeffs, constant=const)


def enumerate_cut_pairs(inst: HullInstance, cap=ENUMERATION_CAP) -> list[tuple[tuple[int, ...], int]]:
    """Every facet pair ``(I, h)``, by brute force over all subsets.

    Intended as a test oracle for small instances; refuses more than ``cap``
    retained coordinates.  The count always lies in
    ``[d, ceil(d/2) * C(d, ceil(d/2))]`` for ``d`` retained coordinates.
    """
    _require_mixed(inst)
    k = inst.size
    if k > cap:
        raise ValueError(f"{k} coordinates exceeds enumeration cap {cap}")
    masks = np.arange(1 << k, dtype=np.int64)
    capsum = np.zeros(1 << k)
    for i in range(k):
        sel = (masks >> i) & 1 == 1
        capsum[sel] += inst.cap[i]
    ell = inst.val_max - capsum
    pairs = []
    for mask in range(1 << k):
        if ell[mask] < 0.0:
            continue
        I = tuple(i for i in range(k) if (mask >> i) & 1)
        for h in range(k):
            if (mask >> h) & 1:
                continue
            if ell[mask | (1 << h)] < 0.0:
                pairs.append((I, h))
    return pairs


def _finish_separation(inst, x, in_set_mask, h):
    """Assemble the chosen cut and its value at x from the greedy outcome."""
    x_loc = np.asarray(x, dtype=float)[inst.support]
    ell_i = inst.val_max - float(inst.cap[in_set_mask].sum())
    value = float(inst.w[in_set_mask] @ (x_loc[in_set_mask] - inst.min_corner[in_set_mask]))
    value += ell_i / (inst.max_corner[h] - inst.min_corner[h]) * (x_loc[h] - inst.min_corner[h])
    I = tuple(np.flatnonzero(in_set_mask).tolist())
    return cut_from_pair(inst, I, h), value


def minimize_upper_envelope_sort(inst: HullInstance, x) -> tuple[HullCut, float]:
    """Tightest upper inequality at ``x`` via the sorting greedy.

    Sort retained coordinates by ``ratios(x)`` nondecreasing (ties by
    position), grow the index set while the corner value stays nonnegative,
    and anchor at the coordinate that first drives it negative.  O(n log n).
    """
    _require_mixed(inst)
    r = inst.ratios(x)
    order = np.argsort(r, kind="stable")
    running = np.cumsum(inst.cap[order])
    # first position whose cumulative capacity overshoots the slack at the
    # all-max corner; guaranteed to exist for a mixed instance
    stop = int(np.argmax(running > inst.val_max))
    in_set = np.zeros(inst.size, dtype=bool)
    in_set[order[:stop]] = True
    return _finish_separation(inst, x, in_set, int(order[stop]))


def minimize_upper_envelope_median(inst: HullInstance, x) -> tuple[HullCut, float]:
    """Same contract as the sorting variant, via weighted-median selection.

    Expected linear time: quickselect-style partitioning on the ratio key
    (ties by position) tracking consumed capacity, no full sort.
    """
    _require_mixed(inst)
    r = inst.ratios(x)
    h = _stop_item_select(r, inst.cap, inst.val_max)
    in_set = (r < r[h]) | ((r == r[h]) & (np.arange(inst.size) < h))
    return _finish_separation(inst, x, in_set, h)


def _stop_item_select(ratios, caps, capacity):
    """Item at which cumulative capacity in (ratio, position) order first
    exceeds ``capacity``; requires total capacity > capacity >= 0."""
    cand = np.arange(ratios.shape[0])
    acc = 0.0
    while cand.size > 1:
        trio = sorted((cand[0], cand[cand.size // 2], cand[-1]),
                      key=lambda i: (ratios[i], i))
        p = int(trio[1])
        rc = ratios[cand]
        less = cand[(rc < ratios[p]) | ((rc == ratios[p]) & (cand < p))]
        consumed = float(caps[less].sum())
        if acc + consumed > capacity:
            cand = less
        elif acc + consumed + caps[p] > capacity:
            return p
        else:
            acc += consumed + float(caps[p])
            cand = cand[(rc > ratios[p]) | ((rc == ratios[p]) & (cand > p))]
    return int(cand[0])


def _separate(minimizer, inst, x, y):
    cut, envelope = minimizer(inst, x)
    violation = float(y) - envelope
    if violation > 0.0:
        return Separation(cut=cut, envelope=envelope, violation=violation)
    return None


def separate_sort(inst: HullInstance, x, y) -> Separation | None:
    """Most violated upper inequality at ``(x, y)``, or None if none is.

    Any positive violation counts; callers wanting a tolerance filter on it
    compare ``Separation.violation`` themselves.
    """
    return _separate(minimize_upper_envelope_sort, inst, x, y)


def separate_median(inst: HullInstance, x, y) -> Separation | None:
    """Linear-time variant of :func:`separate_sort`; identical contract."""
    return _separate(minimize_upper_envelope_median, inst, x, y)


def delta_upper_value(inst: HullInstance, x) -> float:
    """Upper bound at ``x`` from the univariate three-inequality relaxation.

    Uses the chord of the ReLU over the exact pre-activation range
    ``[val_min, val_max]``; the hull's envelope is never above this.
    """
    _require_mixed(inst)
    zhat = inst.preactivation(x)
    return inst.val_max / (inst.val_max - inst.val_min) * (zhat - inst.val_min)


def relu_value(inst: HullInstance, x) -> float:
    """``max(0, w.x + b)`` on original coordinates."""
    return max(0.0, inst.preactivation(x))
