"""Depth-first trials over the belief graph.

A trial walks from the root choosing actions and observations with
bound-guided heuristics, then performs local Bellman backups at the visited
nodes on unwind.  Two heuristic modes exist:

* ``reachability`` (default): actions within a radius of the best upper
  Q-value are scored with a visit-count exploration bonus; observations are
  scored by probability-weighted successor excess uncertainty plus a
  count bonus.  Successors already sampled in the current trial are
  inadmissible, which keeps trials out of belief loops.
* ``discounted-baseline``: the classic two-sided-bound heuristics (highest
  upper Q-value, probability-weighted excess uncertainty) with no loop
  bookkeeping, for comparison runs with or without discounting.
"""

import math
from dataclasses import dataclass, field

from .bounds import backup_lower, backup_upper
from .graph import BeliefGraph
from .pomdp import AugmentedPomdp, ReachboundError

BASELINE_MODES = ("discounted-baseline", "hsvi2")


class NoAdmissibleAction(ReachboundError):
    """Every action at the node leads only to beliefs already in the trial."""


class NoAdmissibleObservation(ReachboundError):
    """Every successor of the chosen action was already sampled this trial."""


@dataclass
class HeuristicConfig:
    c_a: float = 0.01
    c_z: float = 0.01
    xi: float = 0.1
    kappa: float = 0.01
    mix_p: float = 0.0
    mode: str = "reachability"
    gamma: float = 1.0
    # Recover the printed form of the observation score, whose uncertainty
    # term is constant in the observation (the count bonus then decides).
    literal_observation_rule: bool = False

    def __post_init__(self):
        if not (0.0 < self.kappa < 1.0):
            raise ValueError("kappa must be in (0, 1)")
        if not (0.0 <= self.xi <= 1.0):
            raise ValueError("xi must be in [0, 1]")
        if not (0.0 <= self.mix_p <= 1.0):
            raise ValueError("mix_p must be in [0, 1]")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if self.mode not in ("reachability",) + BASELINE_MODES:
            raise ValueError(f"unknown heuristic mode {self.mode!r}")

    @property
    def baseline(self):
        return self.mode in BASELINE_MODES


@dataclass
class TrialState:
    epsilon_target: float
    path: list = field(default_factory=list)
    visited: set = field(default_factory=set)
    backed_up: int = 0

    @property
    def depth(self):
        return len(self.path)


def weu(v_upper: float, v_lower: float, t: int, eps: float, gamma: float = 1.0) -> float:
    """Weighted excess uncertainty: V^U - V^L - eps * gamma^(-t)."""
    return v_upper - v_lower - eps * gamma ** (-t)


def node_q_upper(p: AugmentedPomdp, graph: BeliefGraph, upper, node_id: int, a: int,
                 gamma: float = 1.0) -> float:
    """Upper Q-value through the node's materialized edges."""
    node = graph.node(node_id)
    future = sum(prob * upper.value(graph.node(sid).belief)
                 for _, prob, sid in node.edges[a])
    r = node.belief.dot(p.target_indicator) if a == p.sink_action else 0.0
    return r + gamma * future


def _admissible_actions(graph, node, visited):
    out = set()
    for a, edges in node.edges.items():
        if any(sid not in visited for _, _, sid in edges):
            out.add(a)
    return out


def select_action(p: AugmentedPomdp, graph: BeliefGraph, upper, node_id: int,
                  cfg: HeuristicConfig, visited=frozenset()) -> int:
    """Pick the trial action at a fully expanded node; ties go to the lowest index.

    Reachability mode restricts to actions whose upper Q-value is within
    radius xi of the best, drops loop-barred actions, and adds the
    exploration bonus c_a * sqrt(N(b)) / (1 + N(b,a)).  With xi = 1 every
    admissible action competes.  Baseline mode is a plain argmax of Q.
    """
    node = graph.node(node_id)
    qs = [node_q_upper(p, graph, upper, node_id, a, cfg.gamma)
          for a in range(p.n_actions)]
    if cfg.baseline:
        return int(max(range(p.n_actions), key=lambda a: (qs[a], -a)))
    q_max = max(qs)
    if cfg.xi >= 1.0:
        radius = set(range(p.n_actions))
    else:
        radius = {a for a in range(p.n_actions) if q_max - qs[a] < cfg.xi}
    candidates = radius & _admissible_actions(graph, node, visited)
    if not candidates:
        raise NoAdmissibleAction(f"node {node_id}: no action within radius escapes the trial loop")
    n_b = node.visit_count
    best_a, best_score = None, -math.inf
    for a in sorted(candidates):
        score = qs[a] + cfg.c_a * math.sqrt(n_b) / (1 + node.action_counts.get(a, 0))
        if score > best_score:
            best_a, best_score = a, score
    return best_a


def select_observation(p: AugmentedPomdp, graph: BeliefGraph, lower, upper,
                       node_id: int, a_star: int, t: int, eps: float,
                       cfg: HeuristicConfig, rng=None, visited=frozenset()):
    """Pick the observation branch to descend; returns (observation, successor id).

    Scores each admissible branch with P(o|b,a*) * WEU(b', t+1, eps) plus the
    count bonus P(o|b,a*) * c_z * sqrt(N(b,a*)) / (1 + N(b')), where N(b')
    counts how often the successor belief has been chosen.  With probability
    mix_p (and always in baseline mode) the plain probability-weighted
    excess uncertainty rule is used instead.
    """
    node = graph.node(node_id)
    edges = node.edges[a_star]
    if cfg.baseline:
        admissible = list(edges)
    else:
        admissible = [e for e in edges if e[2] not in visited]
        if not admissible:
            raise NoAdmissibleObservation(
                f"node {node_id}, action {a_star}: all successors already sampled"
            )
    use_plain = cfg.baseline or (cfg.mix_p > 0.0 and rng is not None
                                 and rng.random() < cfg.mix_p)
    n_ba = node.action_counts.get(a_star, 0)
    if cfg.literal_observation_rule and not use_plain:
        b = node.belief
        weu_here = weu(upper.value(b), lower.value(b), t, eps, cfg.gamma)
    best, best_score = None, -math.inf
    for o, prob, sid in admissible:
        succ = graph.node(sid).belief
        excess = weu(upper.value(succ), lower.value(succ), t + 1, eps, cfg.gamma)
        if use_plain:
            score = prob * excess
        elif cfg.literal_observation_rule:
            score = weu_here + prob * cfg.c_z * math.sqrt(n_ba) / (1 + graph.node(sid).chosen_count)
        else:
            score = prob * excess + prob * cfg.c_z * math.sqrt(n_ba) / (1 + graph.node(sid).chosen_count)
        if score > best_score:
            best, best_score = (o, sid), score
    return best


def _trial_done(gap: float, t: int, eps: float, cfg: HeuristicConfig) -> bool:
    if cfg.baseline:
        return gap <= eps * cfg.gamma ** (-t)
    return gap <= cfg.kappa * eps


def _resume_node(graph, trial, current):
    """First belief of the sampled sequence that still has an admissible action."""
    seen = set()
    for nid, _, _ in trial.path:
        if nid in seen or nid == current:
            continue
        seen.add(nid)
        if _admissible_actions(graph, graph.node(nid), trial.visited):
            return nid
    return None


def explore(p: AugmentedPomdp, graph: BeliefGraph, lower, upper, eps: float,
            d_trial: int, cfg: HeuristicConfig, rng=None, start=None) -> TrialState:
    """Run one trial from the root (or ``start``) and back up on unwind.

    The walk ends when the local gap closes, depth exceeds d_trial, or the
    loop rule exhausts the path.  Dead ends are not errors: the trial
    resumes from an earlier sampled belief when possible and otherwise
    stops.  Afterwards every node the trial stood at receives one lower and
    one upper local Bellman backup, deepest first.
    """
    trial = TrialState(epsilon_target=eps)
    node_id = graph.root if start is None else start
    trial.visited.add(node_id)
    standing = []
    t = 0
    while True:
        node = graph.node(node_id)
        gap = upper.value(node.belief) - lower.value(node.belief)
        if _trial_done(gap, t, eps, cfg) or t > d_trial:
            break
        graph.ensure_expanded(p, node_id)
        try:
            a = select_action(p, graph, upper, node_id, cfg, visited=trial.visited)
        except NoAdmissibleAction:
            standing.append(node_id)
            nxt = _resume_node(graph, trial, node_id)
            if nxt is None:
                break
            node_id = nxt
            continue
        graph.record_visit(node_id, a)
        o, sid = select_observation(p, graph, lower, upper, node_id, a, t, eps,
                                    cfg, rng, visited=trial.visited)
        trial.path.append((node_id, a, o))
        standing.append(node_id)
        trial.visited.add(sid)
        graph.record_choice(sid)
        node_id = sid
        t += 1
    for nid in reversed(standing):
        node = graph.node(nid)
        branches = {
            a: [(o, prob, graph.node(sid).belief) for o, prob, sid in node.edges[a]]
            for a in node.edges
        }
        backup_lower(p, lower, node.belief, gamma=cfg.gamma, branches=branches)
        backup_upper(p, upper, node.belief, gamma=cfg.gamma, branches=branches)
        trial.backed_up += 1
    return trial
