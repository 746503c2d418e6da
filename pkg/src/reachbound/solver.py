"""Outer solve loop: trial batches, periodic exact VI, anytime bounds.

The loop alternates batches of trials with an exact value-iteration pass
over the belief graph.  The VI pass fixes frontier nodes at their current
point-set values, resets interior nodes to their lower bounds, and sweeps
to the least fixed point from below; the resulting node values tighten the
upper-bound point set.  This is what lets upper bounds improve inside end
components, where local backups alone stall.
"""

import csv
import io
import time
import warnings
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .bounds import init_lower_blind, init_upper_vmdp
from .explore import HeuristicConfig, explore
from .graph import MERGE_TOL, BeliefGraph
from .pomdp import AugmentedPomdp, ReachboundError

TraceRow = namedtuple(
    "TraceRow", "time_s trial lower upper n_alpha n_upper_points n_beliefs"
)

TRACE_HEADER = "time_s,trial,lower,upper,n_alpha,n_upper_points,n_beliefs"


class NonMonotoneVI(ReachboundError):
    """A VI sweep decreased a value: the from-below initialization is unsound."""


class WallClock:
    """Relative wall-clock time with a strictly-increasing guarantee."""

    def __init__(self):
        self._t0 = time.perf_counter()
        self._last = 0.0

    def tick(self):
        now = time.perf_counter() - self._t0
        self._last = max(now, self._last + 1e-9)
        return self._last

    def elapsed(self):
        return time.perf_counter() - self._t0


class LogicalClock:
    """Deterministic event counter used when runs must be byte-reproducible."""

    def __init__(self):
        self._count = 0

    def tick(self):
        self._count += 1
        return float(self._count)


@dataclass
class SolverConfig:
    epsilon: float = 1e-3
    trials_per_vi: int = 10
    d_trial_init: int = 200
    d_inc: int = 10
    stall_threshold: float = 0.01
    stall_window: int | None = None
    vi_tol: float = 1e-8
    wall_clock_budget: float = 900.0
    rng_seed: int | None = None
    heuristic: HeuristicConfig = field(default_factory=HeuristicConfig)
    prune_growth: float = 0.10
    blind_steps: int = 50
    blind_residual: float = 1e-6
    merge_tol: float = MERGE_TOL
    max_trials: int | None = None
    max_steps: int | None = None

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError("epsilon must be in (0, 1]")
        for name in ("trials_per_vi", "d_trial_init", "d_inc"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SolveResult:
    lower: float
    upper: float
    iterations: int
    trials: int
    beliefs_expanded: int
    wall_time: float
    converged: bool
    trace: list
    policy: object
    d_trial_final: int = 0
    # Final solver state for diagnostics (graph dumps, tests); not serialized.
    graph: object = None
    lower_set: object = None
    upper_set: object = None

    @property
    def gap(self):
        return self.upper - self.lower

    def to_dict(self, include_policy=True):
        out = {
            "lower": self.lower,
            "upper": self.upper,
            "gap": self.gap,
            "iterations": self.iterations,
            "trials": self.trials,
            "beliefs_expanded": self.beliefs_expanded,
            "wall_time": self.wall_time,
            "converged": self.converged,
            "d_trial_final": self.d_trial_final,
            "trace": [list(row) for row in self.trace],
        }
        if include_policy and self.policy is not None:
            out["policy"] = [
                {"action": a.action, "values": a.values.tolist()}
                for a in self.policy.vectors
            ]
        return out


def format_trace_row(row: TraceRow) -> str:
    return (
        f"{row.time_s:.12g},{row.trial},{row.lower:.12g},{row.upper:.12g},"
        f"{row.n_alpha},{row.n_upper_points},{row.n_beliefs}"
    )


def write_trace_csv(rows, sink):
    """Write trace rows as CSV; sink is a path or a writable text file."""
    if hasattr(sink, "write"):
        sink.write(TRACE_HEADER + "\n")
        for row in rows:
            sink.write(format_trace_row(row) + "\n")
        return
    with open(sink, "w", encoding="utf-8") as fh:
        write_trace_csv(rows, fh)


class _TraceEmitter:
    """Collects rows and optionally streams them to a CSV sink.

    Sink failures are downgraded to a one-time warning: a broken trace file
    must never abort or corrupt the solve.
    """

    def __init__(self, sink=None):
        self.rows = []
        self._fh = None
        self._dead = False
        if sink is not None:
            try:
                self._fh = open(sink, "w", encoding="utf-8") if not hasattr(sink, "write") else sink
                self._fh.write(TRACE_HEADER + "\n")
                self._fh.flush()
            except OSError as exc:
                warnings.warn(f"trace sink disabled: {exc}")
                self._fh, self._dead = None, True

    def emit(self, time_s, trial, lower, upper, n_alpha, n_points, n_beliefs):
        row = TraceRow(time_s, trial, lower, upper, n_alpha, n_points, n_beliefs)
        self.rows.append(row)
        if self._fh is not None:
            try:
                self._fh.write(format_trace_row(row) + "\n")
                self._fh.flush()
            except OSError as exc:
                if not self._dead:
                    warnings.warn(f"trace sink disabled mid-run: {exc}")
                self._fh, self._dead = None, True

    def close(self, owned):
        if self._fh is not None and owned:
            try:
                self._fh.close()
            except OSError:
                pass


def reset_and_vi(p: AugmentedPomdp, graph: BeliefGraph, lower, upper,
                 vi_tol: float = 1e-8, gamma: float = 1.0):
    """Exact upper-bound value iteration over the current graph.

    Frontier nodes are pinned at their current point-set values; interior
    nodes start from their lower bounds and sweep synchronously upward.
    Because a truncated from-below iteration can stop short of the least
    fixed point, the result is certified before use: interior values are
    inflated by vi_tol and one extra sweep must map the inflated vector
    below itself (a prefixpoint, hence an upper bound on the least fixed
    point); otherwise sweeping continues.  The certified values are folded
    back into the point set (kept only where tighter) and mirrored into
    each node's local_upper field.
    """
    n = len(graph)
    values = np.zeros(n)
    interior = []
    for node in graph.nodes:
        if node.is_frontier:
            values[node.id] = upper.value(node.belief)
        else:
            values[node.id] = lower.value(node.belief)
            interior.append(node.id)
    if interior:
        pair_rewards, pair_starts_nodes = [], []
        edge_probs, edge_succ, edge_starts = [], [], []
        for nid in interior:
            node = graph.node(nid)
            pair_starts_nodes.append(len(pair_rewards))
            for a in sorted(node.edges):
                r = node.belief.dot(p.target_indicator) if a == p.sink_action else 0.0
                pair_rewards.append(r)
                edge_starts.append(len(edge_probs))
                for _, prob, sid in node.edges[a]:
                    edge_probs.append(prob)
                    edge_succ.append(sid)
        pair_rewards = np.array(pair_rewards)
        edge_probs = np.array(edge_probs)
        edge_succ = np.array(edge_succ, dtype=np.int64)
        edge_starts = np.array(edge_starts, dtype=np.int64)
        node_starts = np.array(pair_starts_nodes, dtype=np.int64)
        interior_ids = np.array(interior, dtype=np.int64)

        def bellman(vec):
            sums = np.add.reduceat(edge_probs * vec[edge_succ], edge_starts)
            q = pair_rewards + gamma * sums
            return np.maximum.reduceat(q, node_starts)

        settled = False
        while True:
            new_vals = bellman(values)
            delta = new_vals - values[interior_ids]
            worst = float(delta.min())
            if worst < -vi_tol:
                raise NonMonotoneVI(
                    f"VI sweep decreased a node value by {-worst!r} (> {vi_tol})"
                )
            values[interior_ids] = np.maximum(values[interior_ids], new_vals)
            if not settled:
                settled = float(np.abs(delta).max()) < vi_tol
                continue
            # Certify: the vi_tol-inflated vector must be a prefixpoint.
            candidate = values.copy()
            candidate[interior_ids] += vi_tol
            if np.all(bellman(candidate) <= candidate[interior_ids] + 1e-15):
                values = candidate
                break
    for node in graph.nodes:
        node.local_upper = float(values[node.id])
        if not node.is_frontier:
            upper.insert(node.belief, node.local_upper)
    return upper


def solve(p: AugmentedPomdp, cfg: SolverConfig = None, *, on_iteration=None,
          trace_sink=None, trace_clock=None) -> SolveResult:
    """Compute anytime two-sided bounds on the maximal reachability value.

    Runs batches of ``trials_per_vi`` trials from the initial belief, each
    followed by an exact VI pass; stops when the root gap is at most
    epsilon (converged) or a budget runs out (anytime result,
    converged=False).  The trial depth cap grows by d_inc whenever the root
    bounds move less than stall_threshold over a stall window.

    Trace timestamps come from a wall clock unless a seed is set, in which
    case a logical event clock keeps repeated runs byte-identical; budgets
    are always enforced on the wall clock.
    """
    cfg = cfg or SolverConfig()
    h = cfg.heuristic
    gamma = h.gamma
    rng = np.random.default_rng(cfg.rng_seed)
    wall = WallClock()
    clock = trace_clock
    if clock is None:
        clock = LogicalClock() if cfg.rng_seed is not None else wall

    graph = BeliefGraph(p.initial_belief, cfg.merge_tol)
    lower = init_lower_blind(p, cfg.blind_steps, cfg.blind_residual, gamma)
    upper = init_upper_vmdp(p, cfg.vi_tol, gamma)
    b0 = p.initial_belief

    emitter = _TraceEmitter(trace_sink)
    owned_sink = trace_sink is not None and not hasattr(trace_sink, "write")
    trials = steps = iterations = 0
    d_trial = cfg.d_trial_init
    stall_window = cfg.stall_window or cfg.trials_per_vi
    lb, ub = lower.value(b0), upper.value(b0)
    emitter.emit(clock.tick(), trials, lb, ub, len(lower), len(upper), len(graph))
    marker = (lb, ub)
    trials_at_marker = 0

    def out_of_budget():
        if wall.elapsed() >= cfg.wall_clock_budget:
            return True
        if cfg.max_trials is not None and trials >= cfg.max_trials:
            return True
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            return True
        return False

    converged = False
    try:
        while True:
            lb, ub = lower.value(b0), upper.value(b0)
            if ub - lb <= cfg.epsilon:
                converged = True
                break
            if out_of_budget():
                break
            for _ in range(cfg.trials_per_vi):
                lb, ub = lower.value(b0), upper.value(b0)
                gap = ub - lb
                if gap <= cfg.epsilon or out_of_budget():
                    break
                eps_trial = cfg.epsilon if h.baseline else gap
                trial = explore(p, graph, lower, upper, eps_trial, d_trial, h, rng)
                trials += 1
                steps += trial.depth
                lb, ub = lower.value(b0), upper.value(b0)
                emitter.emit(clock.tick(), trials, lb, ub,
                             len(lower), len(upper), len(graph))
                if trials - trials_at_marker >= stall_window:
                    moved = abs(lb - marker[0]) + abs(ub - marker[1])
                    if moved < cfg.stall_threshold:
                        d_trial += cfg.d_inc
                    marker = (lb, ub)
                    trials_at_marker = trials
                if len(lower) >= (1.0 + cfg.prune_growth) * max(1, lower.size_at_last_prune):
                    lower.prune()
                    upper.gc()
            lb, ub = lower.value(b0), upper.value(b0)
            if ub - lb <= cfg.epsilon:
                converged = True
                break
            if out_of_budget():
                break
            reset_and_vi(p, graph, lower, upper, cfg.vi_tol, gamma)
            iterations += 1
            lb, ub = lower.value(b0), upper.value(b0)
            emitter.emit(clock.tick(), trials, lb, ub,
                         len(lower), len(upper), len(graph))
            if on_iteration is not None:
                on_iteration(iterations, graph, lower, upper)
    finally:
        emitter.close(owned_sink)

    return SolveResult(
        lower=lb, upper=ub, iterations=iterations, trials=trials,
        beliefs_expanded=len(graph), wall_time=wall.elapsed(),
        converged=converged, trace=emitter.rows, policy=lower.snapshot(),
        d_trial_final=d_trial, graph=graph, lower_set=lower, upper_set=upper,
    )


def trace_csv_text(result: SolveResult) -> str:
    buf = io.StringIO()
    write_trace_csv(result.trace, buf)
    return buf.getvalue()


def read_trace_csv(path):
    """Parse a trace CSV back into TraceRow tuples."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(TraceRow(
                float(rec["time_s"]), int(rec["trial"]), float(rec["lower"]),
                float(rec["upper"]), int(rec["n_alpha"]),
                int(rec["n_upper_points"]), int(rec["n_beliefs"]),
            ))
    return rows
