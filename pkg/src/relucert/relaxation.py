"""LP relaxations of ReLU networks and the cutting-plane bound loop.

The base model relaxes every mixed ReLU neuron with the three-inequality
chord relaxation of its pre-activation interval (pre-activation variables
are substituted out, so the model has one variable per input or ReLU
neuron); fixed-sign neurons become equality rows.  The cutting-plane loop
solves that LP, separates the single-neuron hull inequalities at the
optimum, adds every sufficiently violated one, and re-solves warm-started
from the previous basis.

Also here: the lifted-formulation LP that evaluates the hull's upper
envelope through an auxiliary-variable model (an independent cross-check of
the greedy separation), and the exact maximization oracle that enumerates
ReLU activation patterns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hull
from .network import BoxDomain, Network
from .propagation import (LinearExpr, NeuronHull, ScalarBounds, _interval_step,
                          build_neuron_hulls, expr_from_row, interval_bounds,
                          post_activation_bounds)
from .simplex import EQ, GE, LE, LpModel, LpStatus, solve_lp

# Coefficients below this are dropped when emitting LP rows; tiny entries
# destabilize the solves without measurably changing the models.
COEF_ZERO_TOL = 1e-5

# A hull inequality enters the model only when violated by more than this.
CUT_VIOLATION_TOL = 1e-5

DEFAULT_CUT_ROUNDS = 3


class LpBoundError(RuntimeError):
    """An LP in the bound pipeline ended in a non-optimal status."""

    def __init__(self, status: LpStatus, context: str):
        self.status = status
        super().__init__(f"{context}: LP ended {status.value}")


@dataclass
class CutPool:
    """Added cuts with deduplication on (neuron, index_set, anchor)."""

    entries: list = field(default_factory=list)
    _keys: set = field(default_factory=set)

    def add(self, pos: int, cut: hull.HullCut) -> bool:
        key = (pos, cut.index_set, cut.anchor)
        if key in self._keys:
            return False
        self._keys.add(key)
        self.entries.append((pos, cut))
        return True

    def __len__(self):
        return len(self.entries)


@dataclass(eq=False)
class DeltaLp:
    """A built relaxation model; variable j is neuron position j."""

    model: LpModel
    eta: int
    net: Network = field(repr=False)
    hulls: dict[int, NeuronHull] = field(repr=False)

    def add_hull_cut(self, pos: int, cut: hull.HullCut):
        nh = self.hulls[pos]
        nz = np.flatnonzero(np.abs(cut.coeffs) >= COEF_ZERO_TOL)
        idx = np.concatenate([[pos], nh.inputs[nz]])
        coef = np.concatenate([[1.0], -cut.coeffs[nz]])
        self.model.add_constraint(idx, coef, LE, cut.constant)


def _clean(idx, w, tol):
    keep = np.abs(w) >= tol
    return idx[keep], w[keep]


def build_delta_lp(net: Network, box: BoxDomain, sb: list[ScalarBounds],
                   objective: LinearExpr, coef_tol=COEF_ZERO_TOL) -> DeltaLp:
    """Relaxation LP over neuron positions ``0 .. objective.eta - 1``.

    Inputs get their box as variable bounds; ReLU neurons get their clamped
    scalar bounds.  Mixed neurons contribute ``z >= zhat`` and the chord
    upper inequality (nonnegativity rides on the variable bound); fixed-sign
    neurons contribute a single equality pinning them to their row or to 0.
    """
    eta = objective.eta
    if eta > net.n_state:
        raise ValueError("objective must live over inputs and ReLU neurons only")
    m = net.input_dim
    if len(sb) < eta:
        raise ValueError("scalar bounds missing for neurons below the objective")
    model = LpModel()
    post_lo, post_hi = post_activation_bounds(net, sb)
    for pos in range(eta):
        if pos < m:
            model.add_variable(box.lower[pos], box.upper[pos], name=f"z{pos}")
        else:
            model.add_variable(post_lo[pos], post_hi[pos], name=f"z{pos}")
    for pos in range(m, eta):
        idx, w, b = net.row(pos)
        idx, w = _clean(idx, w, coef_tol)
        lo, hi = sb[pos].pre_lower, sb[pos].pre_upper
        if lo >= 0.0:
            model.add_constraint(np.concatenate([[pos], idx]),
                                 np.concatenate([[1.0], -w]), EQ, b)
        elif hi <= 0.0:
            model.add_constraint(np.array([pos]), np.array([1.0]), EQ, 0.0)
        else:
            model.add_constraint(np.concatenate([[pos], idx]),
                                 np.concatenate([[1.0], -w]), GE, b)
            s = hi / (hi - lo)
            model.add_constraint(np.concatenate([[pos], idx]),
                                 np.concatenate([[1.0], -s * w]), LE, s * (b - lo))
    nz = np.flatnonzero(objective.coeffs)
    for j in nz:
        model.obj[int(j)] = float(objective.coeffs[j])
    model.obj_constant = objective.constant
    hulls = build_neuron_hulls(net, sb, post_lo, post_hi, upto=eta)
    return DeltaLp(model=model, eta=eta, net=net, hulls=hulls)


def optc2v_bound(net: Network, box: BoxDomain, sb: list[ScalarBounds],
                 objective: LinearExpr, rounds: int = DEFAULT_CUT_ROUNDS,
                 cut_viol_tol=CUT_VIOLATION_TOL, pool: CutPool | None = None) -> float:
    """Upper bound from the relaxation LP plus ``rounds`` of hull cuts.

    Each round separates at the current LP optimum across all mixed neurons
    below the objective, adds every cut violated beyond ``cut_viol_tol``
    (no cut selection), and re-solves from the previous basis.  Monotone
    nonincreasing in ``rounds``; ``rounds=0`` is the plain relaxation value.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    dl = build_delta_lp(net, box, sb, objective)
    sol = solve_lp(dl.model)
    if sol.status != LpStatus.OPTIMAL:
        raise LpBoundError(sol.status, "base relaxation")
    if pool is None:
        pool = CutPool()
    for _ in range(rounds):
        z = sol.x
        added = False
        for pos, nh in dl.hulls.items():
            sep = hull.separate_sort(nh.inst, z[nh.inputs], z[pos])
            if sep is not None and sep.violation > cut_viol_tol and pool.add(pos, sep.cut):
                dl.add_hull_cut(pos, sep.cut)
                added = True
        if not added:
            break
        sol = solve_lp(dl.model, warm_basis=sol.basis)
        if sol.status != LpStatus.OPTIMAL:
            # cuts are valid for every network point, so an infeasible
            # re-solve means tolerances bit us, not the model
            raise LpBoundError(sol.status, "after adding cuts")
    return sol.objective_value


@dataclass(eq=False)
class LpBoundsResult:
    """Scalar bounds from the LP pipeline, reusable for margin objectives."""

    rounds: int
    pre: list[ScalarBounds]
    net: Network = field(repr=False)
    box: BoxDomain = field(repr=False)

    def output_bounds(self):
        return self.pre[self.net.n_state:]

    def interval_objective_bound(self, objective: LinearExpr) -> float:
        post_lo, post_hi = post_activation_bounds(self.net, self.pre)
        c = objective.coeffs
        return float(np.maximum(c, 0.0) @ post_hi[:c.shape[0]]
                     + np.minimum(c, 0.0) @ post_lo[:c.shape[0]]) + objective.constant

    def bound_objective(self, objective: LinearExpr, rounds=None) -> float:
        """LP bound of a state-space objective, intersected with intervals."""
        r = self.rounds if rounds is None else rounds
        b = optc2v_bound(self.net, self.box, self.pre, objective, r)
        return min(b, self.interval_objective_bound(objective))


def lp_all_bounds(net: Network, box: BoxDomain, rounds: int = 0) -> LpBoundsResult:
    """Forward sweep bounding every neuron by LP (with optional cut rounds).

    Like the propagation sweep: each neuron's pre-activation row is bounded
    from both sides using the bounds already computed for its predecessors,
    intersected with plain interval arithmetic.  ``rounds=0`` is the
    pure chord-relaxation pipeline; positive rounds give the cutting-plane
    pipeline.  Cuts are regenerated per bound; bases are reused only inside
    one neuron's cut loop.
    """
    m = net.input_dim
    pre: list[ScalarBounds] = [ScalarBounds(float(box.lower[i]), float(box.upper[i]))
                               for i in range(m)]
    post_lo = np.empty(net.n_state)
    post_hi = np.empty(net.n_state)
    post_lo[:m], post_hi[:m] = box.lower, box.upper
    for pos in range(m, net.n_neurons):
        idx, w, b = net.row(pos)
        ilo, ihi = _interval_step(idx, w, b, post_lo, post_hi)
        if np.all(idx < m):
            # row over inputs only: the relaxation adds nothing over intervals
            lo, hi = ilo, ihi
        else:
            obj = expr_from_row(idx, w, b, eta=min(pos, net.n_state))
            hi = min(optc2v_bound(net, box, pre, obj, rounds), ihi)
            lo = max(-optc2v_bound(net, box, pre, obj.negated(), rounds), ilo)
            lo = min(lo, hi)
        pre.append(ScalarBounds(lo, hi))
        if pos < net.n_state:
            post_lo[pos] = max(0.0, lo)
            post_hi[pos] = max(0.0, hi)
    return LpBoundsResult(rounds=rounds, pre=pre, net=net, box=box)


def lifted_envelope_value(inst: hull.HullInstance, x) -> float:
    """Hull upper envelope at ``x`` via the auxiliary-variable LP.

    Maximizes ``w . v + b t`` over ``(v, t)`` with ``t in [0, 1]``,
    ``L t <= v <= U t`` and ``L (1-t) <= x - v <= U (1-t)``: the optimal
    value equals the least upper hull inequality at ``x``.  Serves as an
    independent oracle for the greedy separation routines.
    """
    if hull.classify_phase(inst) != hull.MIXED:
        raise ValueError("envelope LP requires a mixed instance")
    x = np.asarray(x, dtype=float)[inst.support]
    if np.any(x < inst.lower - 1e-9) or np.any(x > inst.upper + 1e-9):
        raise ValueError("point outside the instance box")
    k = inst.size
    model = LpModel()
    for i in range(k):
        model.add_variable(min(inst.lower[i], 0.0), max(inst.upper[i], 0.0),
                           obj=inst.w[i], name=f"v{i}")
    t = model.add_variable(0.0, 1.0, obj=inst.b, name="t")
    for i in range(k):
        li, ui = inst.lower[i], inst.upper[i]
        # x_i - v_i >= L_i (1 - t)  and  x_i - v_i <= U_i (1 - t)
        model.add_constraint(np.array([i, t]), np.array([-1.0, li]), GE, li - x[i])
        model.add_constraint(np.array([i, t]), np.array([-1.0, ui]), LE, ui - x[i])
        # L_i t <= v_i <= U_i t
        model.add_constraint(np.array([i, t]), np.array([1.0, -li]), GE, 0.0)
        model.add_constraint(np.array([i, t]), np.array([1.0, -ui]), LE, 0.0)
    sol = solve_lp(model)
    if sol.status != LpStatus.OPTIMAL:
        raise LpBoundError(sol.status, "envelope LP")
    return sol.objective_value


def exact_max_oracle(net: Network, box: BoxDomain, objective: LinearExpr,
                     mixed_cap: int = 16) -> float:
    """True maximum of a state-space objective by activation-pattern search.

    Enumerates on/off patterns over the neurons interval arithmetic cannot
    fix, solves one input-space LP per pattern (each ReLU's sign constraint
    included), and takes the best feasible value.  Exponential in the mixed
    count; refuses more than ``mixed_cap`` mixed neurons.
    """
    m = net.input_dim
    sb = interval_bounds(net, box)
    mixed = [pos for pos in range(m, net.n_state) if sb[pos].is_mixed()]
    if len(mixed) > mixed_cap:
        raise ValueError(f"{len(mixed)} mixed neurons exceed the cap {mixed_cap}")
    eta = objective.eta
    best = -np.inf
    for pattern in range(1 << len(mixed)):
        active = {}
        for t, pos in enumerate(mixed):
            active[pos] = bool((pattern >> t) & 1)
        # symbolic post-activations as affine functions of the inputs
        E = np.zeros((eta, m))
        e0 = np.zeros(eta)
        E[:m, :m] = np.eye(m)[:min(m, eta)]
        model = LpModel()
        for i in range(m):
            model.add_variable(box.lower[i], box.upper[i], name=f"x{i}")
        feasible = True
        for pos in range(m, eta):
            idx, w, b = net.row(pos)
            pc = w @ E[idx]
            p0 = float(w @ e0[idx]) + b
            on = active.get(pos, sb[pos].pre_lower >= 0.0)
            if pos in active:
                sense = GE if on else LE
                model.add_constraint(np.arange(m), pc.copy(), sense, -p0)
            if on:
                E[pos], e0[pos] = pc, p0
            # else: stays zero
        obj_c = objective.coeffs @ E
        obj_0 = float(objective.coeffs @ e0) + objective.constant
        for i in range(m):
            model.obj[i] = float(obj_c[i])
        model.obj_constant = obj_0
        sol = solve_lp(model)
        if sol.status == LpStatus.OPTIMAL:
            best = max(best, sol.objective_value)
        elif sol.status != LpStatus.INFEASIBLE:
            raise LpBoundError(sol.status, "pattern LP")
    if not np.isfinite(best):
        raise ArithmeticError("no activation pattern was feasible")
    return best
