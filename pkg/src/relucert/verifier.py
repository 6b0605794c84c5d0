"""End-to-end robustness certification driver.

Ties the bound pipelines together for the standard L-infinity robustness
question: for an input ``x_hat`` correctly labeled ``t`` and radius
``epsilon``, certify that every input in the clipped box keeps the label.
Scalar bounds are computed once per instance and reused across all margin
objectives ``f_k - f_t``; the verdict is ``verified`` when every margin's
upper bound is negative, otherwise a projected-gradient attack decides
between ``falsified`` (with an exactly re-checked witness attached) and
``unknown``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .network import BoxDomain, Network, NetworkParseError, classify
from .propagation import DEEPPOLY, LinearExpr, compute_all_bounds
from .relaxation import DEFAULT_CUT_ROUNDS, lp_all_bounds

METHODS = ("interval", "fastlin", "deeppoly", "fastc2v", "lp", "optc2v")

VERIFIED = "verified"
FALSIFIED = "falsified"
UNKNOWN = "unknown"

ATTACK_RESTARTS = 100
ATTACK_STEPS = 20
ATTACK_LR = 0.01


@dataclass(frozen=True, eq=False)
class RobustnessInstance:
    """A center point in [0,1]^m, a radius, and the expected label."""

    x_hat: np.ndarray
    epsilon: float
    label: int

    def __post_init__(self):
        object.__setattr__(self, "x_hat", np.asarray(self.x_hat, dtype=float))
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if np.any(self.x_hat < 0.0) or np.any(self.x_hat > 1.0):
            raise ValueError("x_hat must lie in [0,1]^m")


@dataclass(eq=False)
class VerificationReport:
    verdict: str
    method: str
    label: int
    epsilon: float
    margin_bounds: dict[int, float]
    witness: np.ndarray | None = None
    witness_label: int | None = None
    time_total: float = 0.0
    time_bounds: float = 0.0
    time_margins: dict[int, float] = field(default_factory=dict)
    neuron_bounds: list | None = None

    @property
    def worst_margin(self) -> float:
        return max(self.margin_bounds.values()) if self.margin_bounds else -np.inf


def build_input_box(inst: RobustnessInstance) -> BoxDomain:
    """Per-coordinate interval ``[max(0, x-eps), min(1, x+eps)]``."""
    return BoxDomain(np.maximum(0.0, inst.x_hat - inst.epsilon),
                     np.minimum(1.0, inst.x_hat + inst.epsilon))


def margin_objective(net: Network, k: int, t: int) -> LinearExpr:
    """State-space objective for ``f_k - f_t`` (output rows elided)."""
    r = net.n_outputs
    if not (0 <= k < r and 0 <= t < r):
        raise ValueError(f"class out of range: {k}, {t} with {r} outputs")
    ik, wk, bk = net.row(net.n_state + k)
    it, wt, bt = net.row(net.n_state + t)
    c = np.zeros(net.n_state)
    c[ik] += wk
    c[it] -= wt
    return LinearExpr(c, bk - bt)


def _bounds_state(net, box, method, iterations, cut_rounds):
    if method in ("interval", "fastlin", "deeppoly"):
        return compute_all_bounds(net, box, method=method, iterations=0)
    if method == "fastc2v":
        return compute_all_bounds(net, box, method=DEEPPOLY,
                                  iterations=max(1, iterations))
    if method == "lp":
        return lp_all_bounds(net, box, rounds=0)
    if method == "optc2v":
        return lp_all_bounds(net, box, rounds=cut_rounds)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def verify(net: Network, inst: RobustnessInstance, method: str = "fastc2v",
           iterations: int = 1, cut_rounds: int = DEFAULT_CUT_ROUNDS,
           attack: bool = True, seed: int = 0, early_exit: bool = False,
           verbose_bounds: bool = False) -> VerificationReport:
    """Certify one instance with the chosen bound method.

    Bounds every margin ``f_k - f_t`` (all of them, unless ``early_exit``);
    when certification fails and ``attack`` is on, runs the projected
    gradient attack and attaches any exact witness it finds.
    """
    if len(inst.x_hat) != net.input_dim:
        raise ValueError("instance dimension does not match network")
    t0 = time.perf_counter()
    box = build_input_box(inst)
    t = inst.label
    state = _bounds_state(net, box, method, iterations, cut_rounds)
    t1 = time.perf_counter()
    margins: dict[int, float] = {}
    margin_times: dict[int, float] = {}
    for k in range(net.n_outputs):
        if k == t:
            continue
        tk = time.perf_counter()
        margins[k] = state.bound_objective(margin_objective(net, k, t))
        margin_times[k] = time.perf_counter() - tk
        if early_exit and margins[k] >= 0.0:
            break
    complete = len(margins) == net.n_outputs - 1
    if complete and all(v < 0.0 for v in margins.values()):
        verdict, witness = VERIFIED, None
    else:
        witness = attack_upper_bound(net, inst, seed=seed) if attack else None
        verdict = FALSIFIED if witness is not None else UNKNOWN
    report = VerificationReport(
        verdict=verdict, method=method, label=t, epsilon=inst.epsilon,
        margin_bounds=margins, witness=witness,
        witness_label=classify(net, witness) if witness is not None else None,
        time_total=time.perf_counter() - t0, time_bounds=t1 - t0,
        time_margins=margin_times,
        neuron_bounds=list(state.pre) if verbose_bounds else None)
    if verdict == FALSIFIED:
        assert report.witness_label != t, "witness does not misclassify"
    return report


def _forward_batch(net, X):
    """Post-activations (batch, n_state) and output values (batch, r)."""
    B = X.shape[0]
    Z = np.empty((B, net.n_state))
    Z[:, :net.input_dim] = X
    Y = np.empty((B, net.n_outputs))
    for pos in range(net.input_dim, net.n_neurons):
        idx, w, b = net.row(pos)
        v = Z[:, idx] @ w + b if idx.size else np.full(B, b)
        if pos < net.n_state:
            Z[:, pos] = np.maximum(v, 0.0)
        else:
            Y[:, pos - net.n_state] = v
    return Z, Y


def _margin_input_grad(net, Z, ks, t):
    """Input gradient of ``f_k - f_t`` per row, through the ReLU pattern."""
    B = Z.shape[0]
    G = np.zeros((B, net.n_state))
    it, wt, _ = net.row(net.n_state + t)
    for k in np.unique(ks):
        rows = np.flatnonzero(ks == k)
        ik, wk, _ = net.row(net.n_state + int(k))
        G[np.ix_(rows, ik)] += wk
        G[np.ix_(rows, it)] -= wt
    for pos in range(net.n_state - 1, net.input_dim - 1, -1):
        g = G[:, pos] * (Z[:, pos] > 0.0)
        G[:, pos] = 0.0
        if g.any():
            idx, w, _ = net.row(pos)
            G[:, idx] += np.outer(g, w)
    return G[:, :net.input_dim]


def attack_upper_bound(net: Network, inst: RobustnessInstance,
                       restarts: int = ATTACK_RESTARTS, steps: int = ATTACK_STEPS,
                       lr: float = ATTACK_LR, seed: int = 0) -> np.ndarray | None:
    """Projected gradient ascent on the best margin; None when it fails.

    The first restart is the center itself, the rest are seeded uniform
    draws from the box.  Success is checked by exact re-evaluation after
    every step; the first misclassified point (restart-major at the start,
    then step-major) is returned.
    """
    box = build_input_box(inst)
    t = inst.label
    rng = np.random.default_rng(seed)
    X = np.empty((restarts, net.input_dim))
    X[0] = inst.x_hat
    if restarts > 1:
        X[1:] = box.sample(rng, restarts - 1)

    def first_hit(Y):
        pred = np.argmax(Y, axis=1)
        hits = np.flatnonzero(pred != t)
        return int(hits[0]) if hits.size else None

    Z, Y = _forward_batch(net, X)
    hit = first_hit(Y)
    if hit is not None:
        return X[hit].copy()
    for _ in range(steps):
        margins = Y - Y[:, t:t + 1]
        margins[:, t] = -np.inf
        ks = np.argmax(margins, axis=1)
        G = _margin_input_grad(net, Z, ks, t)
        X = np.clip(X + lr * G, box.lower, box.upper)
        Z, Y = _forward_batch(net, X)
        hit = first_hit(Y)
        if hit is not None:
            return X[hit].copy()
    return None


@dataclass(eq=False)
class BatchResult:
    reports: list
    counts: dict
    times: dict
    errors: list

    def verified_count(self) -> int:
        return self.counts[VERIFIED]


def batch_verify(net: Network, instances, method: str = "fastc2v",
                 deterministic: bool = False, **kwargs) -> BatchResult:
    """Run :func:`verify` over a corpus, skipping misclassified centers.

    Instance entries may be ``RobustnessInstance`` objects or ``(error
    message, line)`` tuples from a lenient loader; errors are reported and
    skipped.  Ordering is the input ordering; ``deterministic`` zeroes the
    timing fields so reports are byte-stable.
    """
    reports, errors = [], []
    counts = {VERIFIED: 0, FALSIFIED: 0, UNKNOWN: 0, "skipped": 0}
    wall = []
    for i, inst in enumerate(instances):
        if not isinstance(inst, RobustnessInstance):
            errors.append((i, str(inst)))
            reports.append(None)
            continue
        if classify(net, inst.x_hat) != inst.label:
            counts["skipped"] += 1
            reports.append(None)
            continue
        rep = verify(net, inst, method=method, **kwargs)
        if deterministic:
            rep.time_total = 0.0
            rep.time_bounds = 0.0
            rep.time_margins = {k: 0.0 for k in rep.time_margins}
        reports.append(rep)
        counts[rep.verdict] += 1
        wall.append(rep.time_total)
    wall = np.asarray(wall) if wall else np.zeros(1)
    times = {"mean": float(wall.mean()),
             "p50": float(np.percentile(wall, 50)),
             "p90": float(np.percentile(wall, 90))}
    return BatchResult(reports=reports, counts=counts, times=times, errors=errors)


# ----- reports and instance files ------------------------------------------

def format_report_line(index, rep: VerificationReport | None) -> str:
    """One report as a fixed-field-order text line."""
    if rep is None:
        return f"instance={index} verdict=skipped"
    fields = [f"instance={index}",
              f"method={rep.method}",
              f"verdict={rep.verdict}",
              f"label={rep.label}",
              "epsilon=%.17g" % rep.epsilon]
    ms = ",".join("%d:%.17g" % (k, rep.margin_bounds[k]) for k in sorted(rep.margin_bounds))
    fields.append(f"margins={ms}")
    if rep.witness is not None:
        fields.append("witness=" + ",".join("%.17g" % v for v in rep.witness))
        fields.append(f"witness_label={rep.witness_label}")
    fields.append("time_total_ms=%.3f" % (1e3 * rep.time_total))
    fields.append("time_bounds_ms=%.3f" % (1e3 * rep.time_bounds))
    tm = ",".join("%d:%.3f" % (k, 1e3 * rep.time_margins[k]) for k in sorted(rep.time_margins))
    fields.append(f"time_margins_ms={tm}")
    return " ".join(fields)


def write_report(path, result: BatchResult, method):
    with open(path, "w") as fh:
        for i, rep in enumerate(result.reports):
            fh.write(format_report_line(i, rep) + "\n")
        c = result.counts
        fh.write(f"summary method={method} verified={c[VERIFIED]} "
                 f"falsified={c[FALSIFIED]} unknown={c[UNKNOWN]} "
                 f"skipped={c['skipped']} "
                 "mean_ms=%.3f p50_ms=%.3f p90_ms=%.3f\n"
                 % (1e3 * result.times["mean"], 1e3 * result.times["p50"],
                    1e3 * result.times["p90"]))


def save_instances(path, instances):
    with open(path, "w") as fh:
        for inst in instances:
            xs = ",".join("%.17g" % v for v in inst.x_hat)
            fh.write(f"label={inst.label} epsilon={'%.17g' % inst.epsilon} x={xs}\n")


def load_instances(path, strict: bool = True):
    """Parse an instance file; one ``label= epsilon= x=`` record per line.

    With ``strict=False``, malformed lines come back as error strings in
    place of instances so batch drivers can report and skip them.
    """
    out = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                parts = dict(p.split("=", 1) for p in line.split())
                inst = RobustnessInstance(
                    x_hat=np.array([float(s) for s in parts["x"].split(",")]),
                    epsilon=float(parts["epsilon"]),
                    label=int(parts["label"]))
                out.append(inst)
            except (KeyError, ValueError) as exc:
                err = NetworkParseError(path, line_no, f"bad instance line: {exc}")
                if strict:
                    raise err from None
                out.append(str(err))
    return out


def generate_instances(net: Network, count, epsilon, seed) -> list[RobustnessInstance]:
    """Seeded corpus of random centers labeled by the network itself."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        x = rng.uniform(0.0, 1.0, size=net.input_dim)
        out.append(RobustnessInstance(x_hat=x, epsilon=epsilon,
                                      label=classify(net, x)))
    return out
