"""Dense bounded-variable simplex solver (primal and dual).

Small, deterministic, dependency-free LP engine for the relaxation models in
this package: every model it sees has a few dozen variables with finite
bounds and a few hundred rows, so a dense tableau with full recomputation of
values and reduced costs per iteration is both simple and fast enough.

Conventions: maximize ``c . x`` subject to ``lb <= x <= ub`` and rows
``a . x (<=|=|>=) rhs``.  Rows get one slack each; a basis is the list of
basic columns plus a status flag per column (at lower bound, at upper bound,
basic, or free at zero).  Cold solves place nonbasic columns dual-feasibly
when bounds allow and run dual simplex; otherwise they fall back to a
two-phase primal.  Warm solves reuse a caller-provided basis, extending it
with the slacks of any newly appended rows (the cutting-plane resolve path),
and repair primal feasibility with the dual simplex.  Anti-cycling: after a
streak of degenerate steps the pivot choice switches to Bland's rule.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
DEGENERATE_STREAK = 40
DEFAULT_MAX_ITER = 20000

LE, GE, EQ = "<=", ">=", "="


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"


# column status codes
_AT_LOWER = 1
_AT_UPPER = -1
_BASIC = 0
_FREE = 2


@dataclass(eq=False)
class LpModel:
    """Maximization LP with per-variable bounds and sparse rows."""

    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    obj: list = field(default_factory=list)
    obj_constant: float = 0.0
    rows: list = field(default_factory=list)  # (idx array, coef array, sense, rhs)
    names: list = field(default_factory=list)

    def add_variable(self, lb=0.0, ub=np.inf, obj=0.0, name=None) -> int:
        if lb > ub:
            raise ValueError(f"variable bounds crossed: [{lb}, {ub}]")
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        self.names.append(name if name is not None else f"x{len(self.lb) - 1}")
        return len(self.lb) - 1

    def add_constraint(self, idx, coef, sense, rhs) -> int:
        idx = np.asarray(idx, dtype=np.intp)
        coef = np.asarray(coef, dtype=float)
        if idx.shape != coef.shape or idx.ndim != 1:
            raise ValueError("constraint index/coefficient shape mismatch")
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.lb)):
            raise ValueError("constraint references undeclared variable")
        if sense not in (LE, GE, EQ):
            raise ValueError(f"unknown sense {sense!r}")
        self.rows.append((idx, coef, sense, float(rhs)))
        return len(self.rows) - 1

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass(frozen=True, eq=False)
class SimplexBasis:
    """Opaque warm-start handle: basic columns and per-column statuses."""

    basic: np.ndarray
    status: np.ndarray
    n_vars: int
    n_rows: int


@dataclass(eq=False)
class LpSolution:
    status: LpStatus
    objective_value: float
    x: np.ndarray
    basis: SimplexBasis | None
    iterations: int


def solve_lp(model: LpModel, warm_basis: SimplexBasis | None = None,
             max_iter: int = DEFAULT_MAX_ITER) -> LpSolution:
    """Solve to optimality within FEAS_TOL / OPT_TOL; statuses, not raises."""
    return _Tableau(model).solve(warm_basis, max_iter)


class _Tableau:
    def __init__(self, model: LpModel):
        self.model = model
        n, mr = model.n_vars, model.n_rows
        A = np.zeros((mr, n + mr))
        rhs = np.zeros(mr)
        lb = np.concatenate([np.asarray(model.lb, dtype=float), np.zeros(mr)])
        ub = np.concatenate([np.asarray(model.ub, dtype=float), np.zeros(mr)])
        for i, (idx, coef, sense, b) in enumerate(model.rows):
            A[i, idx] = coef
            A[i, n + i] = 1.0
            rhs[i] = b
            if sense == LE:
                lb[n + i], ub[n + i] = 0.0, np.inf
            elif sense == GE:
                lb[n + i], ub[n + i] = -np.inf, 0.0
            else:
                lb[n + i], ub[n + i] = 0.0, 0.0
        self.n_struct = n
        self.n_rows = mr
        self.A = A
        self.rhs = rhs
        self.lb = lb
        self.ub = ub
        self.c = np.concatenate([np.asarray(model.obj, dtype=float), np.zeros(mr)])
        self.frozen = np.zeros(n + mr, dtype=bool)  # barred from entering
        # mutable solver state
        self.T = A.copy()           # B^{-1} A
        self.trhs = rhs.copy()      # B^{-1} rhs
        self.basic = np.arange(n, n + mr, dtype=np.intp)
        self.status = np.full(n + mr, _AT_LOWER, dtype=np.int8)
        self.degen_streak = 0
        self.iterations = 0

    # ----- state helpers -------------------------------------------------

    def values(self):
        """Full variable vector implied by the current basis and statuses."""
        x = np.zeros(self.status.shape[0])
        at_lo = self.status == _AT_LOWER
        at_up = self.status == _AT_UPPER
        x[at_lo] = self.lb[at_lo]
        x[at_up] = self.ub[at_up]
        if self.n_rows:
            nz = np.flatnonzero(x)
            x[self.basic] = self.trhs - self.T[:, nz] @ x[nz]
        return x

    def reduced_costs(self, c):
        if not self.n_rows:
            return c.copy()
        cb = c[self.basic]
        if not cb.any():
            return c.copy()
        return c - cb @ self.T

    def _place_nonbasic(self, j, cost):
        """Dual-feasible placement when bounds allow, else nearest bound."""
        lo_ok, up_ok = np.isfinite(self.lb[j]), np.isfinite(self.ub[j])
        if cost > 0.0 and up_ok:
            return _AT_UPPER
        if cost < 0.0 and lo_ok:
            return _AT_LOWER
        if lo_ok:
            return _AT_LOWER
        if up_ok:
            return _AT_UPPER
        return _FREE

    def _pivot(self, r, j):
        """Enter column j on row r; returns the leaving column."""
        col = self.T[:, j].copy()
        piv = col[r]
        self.T[r] = self.T[r] / piv
        self.trhs[r] = self.trhs[r] / piv
        col[r] = 0.0
        self.T -= np.outer(col, self.T[r])
        self.trhs -= col * self.trhs[r]
        leaving = int(self.basic[r])
        self.basic[r] = j
        self.status[j] = _BASIC
        self.iterations += 1
        return leaving

    def _primal_infeasibility(self, x):
        if not self.n_rows:
            return np.zeros(0)
        lo = np.maximum(self.lb[self.basic] - x[self.basic], 0.0)
        up = np.maximum(x[self.basic] - self.ub[self.basic], 0.0)
        return np.maximum(lo, up)

    def _dual_feasible(self, d):
        bad = ((self.status == _AT_LOWER) & (d > OPT_TOL)) \
            | ((self.status == _AT_UPPER) & (d < -OPT_TOL)) \
            | ((self.status == _FREE) & (np.abs(d) > OPT_TOL))
        return not bad[~self.frozen].any()

    def _nearest_bound_status(self, j, value):
        dlo = abs(value - self.lb[j]) if np.isfinite(self.lb[j]) else np.inf
        dup = abs(value - self.ub[j]) if np.isfinite(self.ub[j]) else np.inf
        if dlo == np.inf and dup == np.inf:
            return _FREE
        return _AT_LOWER if dlo <= dup else _AT_UPPER

    # ----- primal simplex -------------------------------------------------

    def _primal(self, c, max_iter):
        """Maximize c from the current primal feasible basis."""
        while True:
            if self.iterations >= max_iter:
                return LpStatus.ITERATION_LIMIT
            bland = self.degen_streak >= DEGENERATE_STREAK
            d = self.reduced_costs(c)
            elig = (((self.status == _AT_LOWER) & (d > OPT_TOL))
                    | ((self.status == _AT_UPPER) & (d < -OPT_TOL))
                    | ((self.status == _FREE) & (np.abs(d) > OPT_TOL))) & ~self.frozen
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return LpStatus.OPTIMAL
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            s = 1.0 if (self.status[j] == _AT_LOWER
                        or (self.status[j] == _FREE and d[j] > 0.0)) else -1.0
            x = self.values()
            step, row = self._primal_ratio(j, s, x, bland)
            if step is None:
                return LpStatus.UNBOUNDED
            self.degen_streak = self.degen_streak + 1 if step <= FEAS_TOL else 0
            if row < 0:
                self.status[j] = _AT_UPPER if s > 0 else _AT_LOWER
                continue
            landed = x[self.basic[row]] - s * step * self.T[row, j]
            leaving = self._pivot(row, j)
            self.status[leaving] = self._nearest_bound_status(leaving, landed)

    def _primal_ratio(self, j, s, x, bland):
        """Largest step for column j moving in direction s.

        Returns ``(step, row)``; ``row == -1`` encodes a flip of j to its
        opposite bound, ``step is None`` means unbounded.
        """
        rng = self.ub[j] - self.lb[j]
        best = rng if np.isfinite(rng) else np.inf
        row = -1
        if self.n_rows:
            col = self.T[:, j]
            xb = x[self.basic]
            delta = -s * col
            caps = np.where(delta > PIVOT_TOL, self.ub[self.basic],
                            np.where(delta < -PIVOT_TOL, self.lb[self.basic], np.nan))
            with np.errstate(invalid="ignore", divide="ignore"):
                lims = (caps - xb) / delta
            lims[~np.isfinite(lims)] = np.inf
            lims = np.maximum(lims, 0.0)
            i_best = int(np.argmin(lims)) if lims.size else -1
            if i_best >= 0 and lims[i_best] < best:
                near = np.flatnonzero(lims <= lims[i_best] + 1e-12)
                if bland:
                    row = int(near[np.argmin(self.basic[near])])
                else:
                    row = int(near[np.argmax(np.abs(col[near]))])
                best = lims[row]
        if not np.isfinite(best):
            return None, -1
        return float(best), row

    # ----- dual simplex ---------------------------------------------------

    def _dual(self, c, max_iter):
        """Restore primal feasibility while keeping dual feasibility."""
        while True:
            if self.iterations >= max_iter:
                return LpStatus.ITERATION_LIMIT
            x = self.values()
            infeas = self._primal_infeasibility(x)
            if infeas.size == 0 or infeas.max() <= FEAS_TOL:
                return LpStatus.OPTIMAL
            bland = self.degen_streak >= DEGENERATE_STREAK
            if bland:
                r = int(np.flatnonzero(infeas > FEAS_TOL)[0])
            else:
                r = int(np.argmax(infeas))
            below = x[self.basic[r]] < self.lb[self.basic[r]]
            alpha = self.T[r]
            d = self.reduced_costs(c)
            if below:
                elig = ((self.status == _AT_LOWER) & (alpha < -PIVOT_TOL)) \
                    | ((self.status == _AT_UPPER) & (alpha > PIVOT_TOL)) \
                    | ((self.status == _FREE) & (np.abs(alpha) > PIVOT_TOL))
            else:
                elig = ((self.status == _AT_LOWER) & (alpha > PIVOT_TOL)) \
                    | ((self.status == _AT_UPPER) & (alpha < -PIVOT_TOL)) \
                    | ((self.status == _FREE) & (np.abs(alpha) > PIVOT_TOL))
            cand = np.flatnonzero(elig & ~self.frozen)
            if cand.size == 0:
                return LpStatus.INFEASIBLE
            ratios = np.abs(d[cand]) / np.abs(alpha[cand])
            near = np.flatnonzero(ratios <= ratios.min() + 1e-12)
            if bland:
                j = int(cand[near[np.argmin(cand[near])]])
            else:
                j = int(cand[near[np.argmax(np.abs(alpha[cand[near]]))]])
            self.degen_streak = self.degen_streak + 1 if ratios.min() <= 1e-12 else 0
            leaving = self._pivot(r, j)
            self.status[leaving] = _AT_LOWER if below else _AT_UPPER

    # ----- phase 1 --------------------------------------------------------

    def _phase1(self, max_iter):
        """From the cold slack basis, reach primal feasibility.

        Out-of-bounds basic slacks are parked at their violated bound and an
        artificial column (unit coefficient, sign matching the residual)
        absorbs the gap; maximizing minus the artificial sum drives the gap
        to zero.  Artificials are then pivoted out where possible and frozen.
        """
        x = self.values()
        viol = []
        for i in range(self.n_rows):
            jb = self.basic[i]
            if x[jb] < self.lb[jb] - FEAS_TOL:
                viol.append((i, _AT_LOWER, self.lb[jb] - x[jb]))
            elif x[jb] > self.ub[jb] + FEAS_TOL:
                viol.append((i, _AT_UPPER, x[jb] - self.ub[jb]))
        if not viol:
            return LpStatus.OPTIMAL
        ncols = self.status.shape[0]
        n_art = len(viol)
        ext = np.zeros((self.n_rows, n_art))
        for k, (i, park, _) in enumerate(viol):
            ext[i, k] = -1.0 if park == _AT_LOWER else 1.0
        self.A = np.hstack([self.A, ext])
        self.T = np.hstack([self.T, ext.copy()])  # slack basis: B is identity
        self.lb = np.concatenate([self.lb, np.zeros(n_art)])
        self.ub = np.concatenate([self.ub, np.full(n_art, np.inf)])
        self.c = np.concatenate([self.c, np.zeros(n_art)])
        self.status = np.concatenate([self.status, np.full(n_art, _AT_LOWER, np.int8)])
        self.frozen = np.concatenate([self.frozen, np.zeros(n_art, bool)])
        for k, (i, park, _) in enumerate(viol):
            slack = int(self.basic[i])
            self._pivot(i, ncols + k)
            self.status[slack] = park
        c1 = np.zeros(self.status.shape[0])
        c1[ncols:] = -1.0
        st = self._primal(c1, max_iter)
        if st != LpStatus.OPTIMAL:
            return st
        x = self.values()
        if float(x[ncols:].sum()) > 1e2 * FEAS_TOL:
            return LpStatus.INFEASIBLE
        for i in range(self.n_rows):
            if self.basic[i] >= ncols:
                row = self.T[i, :ncols]
                ok = np.flatnonzero((self.status[:ncols] != _BASIC) & (np.abs(row) > 1e-6))
                if ok.size:
                    art = self._pivot(i, int(ok[0]))
                    self.status[art] = _AT_LOWER
        self.lb[ncols:] = 0.0
        self.ub[ncols:] = 0.0
        self.frozen[ncols:] = True
        return LpStatus.OPTIMAL

    # ----- driver ----------------------------------------------------------

    def solve(self, warm_basis, max_iter):
        n, mr = self.n_struct, self.n_rows
        warmed = (warm_basis is not None and warm_basis.n_vars == n
                  and warm_basis.n_rows <= mr and self._restore_basis(warm_basis))
        if not warmed:
            for j in range(n):
                self.status[j] = self._place_nonbasic(j, self.c[j])
            self.status[n:] = _BASIC
        if self._dual_feasible(self.reduced_costs(self.c)):
            status = self._dual(self.c, max_iter)
            if status == LpStatus.OPTIMAL:
                status = self._primal(self.c, max_iter)  # polish, usually a no-op
        else:
            x = self.values()
            infeas = self._primal_infeasibility(x)
            if infeas.size and infeas.max() > FEAS_TOL:
                if warmed:  # only the slack basis supports artificial setup
                    warmed = False
                    self.T = self.A.copy()
                    self.trhs = self.rhs.copy()
                    self.basic = np.arange(n, n + mr, dtype=np.intp)
                    for j in range(n):
                        self.status[j] = self._place_nonbasic(j, self.c[j])
                    self.status[n:] = _BASIC
                status = self._phase1(max_iter)
                if status == LpStatus.OPTIMAL:
                    status = self._primal(self.c, max_iter)
            else:
                status = self._primal(self.c, max_iter)
        x = self.values()
        xs = x[:n].copy()
        if status == LpStatus.OPTIMAL:
            np.clip(xs, np.asarray(self.model.lb), np.asarray(self.model.ub), out=xs)
            self._verify(xs)
        basis = SimplexBasis(basic=self.basic.copy(),
                             status=self.status[:n + mr].copy(),
                             n_vars=n, n_rows=mr)
        value = float(np.asarray(self.model.obj) @ xs) + self.model.obj_constant \
            if n else self.model.obj_constant
        return LpSolution(status=status, objective_value=value, x=xs,
                          basis=basis, iterations=self.iterations)

    def _restore_basis(self, wb: SimplexBasis) -> bool:
        n, mr = self.n_struct, self.n_rows
        status = np.empty(n + mr, dtype=np.int8)
        status[:n + wb.n_rows] = wb.status
        status[n + wb.n_rows:] = _BASIC
        basic = np.concatenate([wb.basic.astype(np.intp),
                                np.arange(n + wb.n_rows, n + mr, dtype=np.intp)])
        if basic.shape[0] != mr or np.unique(basic).size != basic.shape[0]:
            return False
        B = self.A[:, basic]
        try:
            T = np.linalg.solve(B, self.A)
            trhs = np.linalg.solve(B, self.rhs)
        except np.linalg.LinAlgError:
            return False
        if not (np.all(np.isfinite(T)) and np.all(np.isfinite(trhs))):
            return False
        self.T, self.trhs, self.basic = T, trhs, basic
        self.status = status
        self.status[basic] = _BASIC
        return True

    def _verify(self, xs):
        """Optimal solutions must satisfy all rows within tolerance."""
        for idx, coef, sense, rhs in self.model.rows:
            v = float(coef @ xs[idx]) if idx.size else 0.0
            gap = 1e2 * FEAS_TOL * (1.0 + abs(rhs))
            if (sense == LE and v > rhs + gap) or (sense == GE and v < rhs - gap) \
                    or (sense == EQ and abs(v - rhs) > gap):
                raise ArithmeticError(
                    f"optimal solution violates row: {v} {sense} {rhs}")


def write_lp_format(model: LpModel, path):
    """Dump a model in the conventional text LP interchange format."""
    def term(c, name, first):
        sign = "-" if c < 0 else ("" if first else "+")
        return f"{sign} {abs(c):.17g} {name} "

    with open(path, "w") as fh:
        fh.write("Maximize\n obj: ")
        first = True
        for j, c in enumerate(model.obj):
            if c != 0.0:
                fh.write(term(c, model.names[j], first))
                first = False
        if first:
            fh.write("0 ")
        fh.write("\nSubject To\n")
        for i, (idx, coef, sense, rhs) in enumerate(model.rows):
            fh.write(f" r{i}: ")
            first = True
            for j, c in zip(idx, coef):
                fh.write(term(c, model.names[int(j)], first))
                first = False
            op = {LE: "<=", GE: ">=", EQ: "="}[sense]
            fh.write(f"{op} {rhs:.17g}\n")
        fh.write("Bounds\n")
        for j in range(model.n_vars):
            fh.write(f" {model.lb[j]:.17g} <= {model.names[j]} <= {model.ub[j]:.17g}\n")
        fh.write("End\n")
