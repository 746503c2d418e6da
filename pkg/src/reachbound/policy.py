"""Executable policies from alpha-vector sets and Monte-Carlo evaluation."""

import random
from bisect import bisect_left
from dataclasses import dataclass

from scipy.stats import norm

from .bounds import LowerBoundSet
from .pomdp import (
    AugmentedPomdp,
    Belief,
    ReachboundError,
    ZeroProbabilityObservation,
    belief_update,
    successor_beliefs,
)

_Z99 = float(norm.ppf(0.995))


class EmptyPolicy(ReachboundError):
    """Asked for an action from an alpha-vector set with no vectors."""


@dataclass
class SimReport:
    episodes: int
    successes: int
    estimate: float
    ci99: float
    truncated: int

    def to_dict(self):
        return {
            "episodes": self.episodes,
            "successes": self.successes,
            "estimate": self.estimate,
            "ci99": self.ci99,
            "truncated": self.truncated,
        }


class AlphaPolicy:
    """Greedy policy over an alpha-vector snapshot: the action of the
    maximizing vector, ties resolved by insertion order.

    One repair is applied on undiscounted value plateaus: pruning keeps
    whichever vector pointwise-dominates, and that vector can carry an
    action that provably does nothing at the current belief (a
    deterministic self-loop) while promising the value of the plan it
    displaced, so plain re-argmax would idle forever.  When the chosen
    action self-loops, the promised value is positive, and the set holds
    more than one vector (i.e. a displaced alternative can exist), the
    action is re-chosen by one-step lookahead against the vector set,
    taking the lowest-indexed non-looping action that matches the promise.
    """

    def __init__(self, gamma_set: LowerBoundSet, pomdp: AugmentedPomdp):
        self.gamma_set = gamma_set
        self.pomdp = pomdp

    def _self_loops(self, b: Belief, a: int) -> bool:
        branches = successor_beliefs(self.pomdp, b, a)
        return len(branches) == 1 and branches[0][2] == b

    def action_for(self, b: Belief) -> int:
        if not self.gamma_set.vectors:
            raise EmptyPolicy("no alpha-vectors to act from")
        value, i = self.gamma_set.best(b)
        action = self.gamma_set.vectors[i].action
        if (len(self.gamma_set.vectors) < 2 or value <= 0.0
                or not self._self_loops(b, action)):
            return action
        p = self.pomdp
        for a in range(p.n_actions):
            branches = successor_beliefs(p, b, a)
            if len(branches) == 1 and branches[0][2] == b:
                continue
            r = b.dot(p.target_indicator) if a == p.sink_action else 0.0
            q = r + sum(prob * self.gamma_set.value(succ) for _, prob, succ in branches)
            if q >= value - 1e-12:
                return a
        return action


def action_for(policy: AlphaPolicy, b: Belief) -> int:
    return policy.action_for(b)


def wilson_halfwidth(successes: int, episodes: int, z: float = _Z99) -> float:
    if episodes == 0:
        return 1.0
    p = successes / episodes
    denom = 1.0 + z * z / episodes
    return z * ((p * (1.0 - p) / episodes + z * z / (4.0 * episodes * episodes)) ** 0.5) / denom


class _RowSampler:
    """Lazy cumulative-probability samplers for sparse kernel rows."""

    def __init__(self, mats):
        self.mats = mats
        self.cache = {}

    def sample(self, a, row, rng):
        key = (a, row)
        entry = self.cache.get(key)
        if entry is None:
            m = self.mats[a]
            lo, hi = m.indptr[row], m.indptr[row + 1]
            cols = m.indices[lo:hi].tolist()
            cum = []
            acc = 0.0
            for v in m.data[lo:hi]:
                acc += float(v)
                cum.append(acc)
            entry = (cols, cum)
            self.cache[key] = entry
        cols, cum = entry
        if len(cols) == 1:
            return cols[0]
        return cols[bisect_left(cum, rng.random() * cum[-1])]


def _absorbing_failures(p: AugmentedPomdp):
    """States outside the success set that no action can ever leave."""
    success = set(p.targets) | {p.sink_state}
    out = set()
    for s in range(p.n_states):
        if s in success:
            continue
        if all(p.transition[a][s, s] >= 1.0 - 1e-12 for a in range(p.n_actions)):
            out.add(s)
    return out


def simulate(policy: AlphaPolicy, episodes: int, max_steps: int,
             rng_seed: int = 0) -> SimReport:
    """Estimate the policy's reachability probability by rollout.

    An episode succeeds the moment the sampled state enters the target set
    or the sink; it fails early once the state is absorbed outside them,
    and counts as truncated (reported, treated as failure in the estimate)
    if still undecided after max_steps.  Belief tracking, the policy's
    action choice, and posterior updates are memoized per belief, so long
    runs mostly cost two categorical draws per step.
    """
    if episodes <= 0:
        raise ValueError("episodes must be positive")
    p = policy.pomdp
    rng = random.Random(rng_seed)
    trans = _RowSampler(p.transition)
    obs = _RowSampler(p.observation_fn)
    success_states = set(p.targets) | {p.sink_state}
    dead_states = _absorbing_failures(p)

    b0 = p.initial_belief
    b0_states = b0.states.tolist()
    b0_cum = []
    acc = 0.0
    for q in b0.probs.tolist():
        acc += q
        b0_cum.append(acc)

    act_cache = {}
    stuck_cache = {}
    next_cache = {}
    successes = truncated = 0
    for _ in range(episodes):
        s = b0_states[bisect_left(b0_cum, rng.random() * b0_cum[-1])]
        b = b0
        outcome = None
        for _ in range(max_steps):
            if s in success_states:
                outcome = "success"
                break
            if s in dead_states:
                outcome = "failure"
                break
            a = act_cache.get(b)
            if a is None:
                a = policy.action_for(b)
                act_cache[b] = a
                # A belief whose chosen action self-loops can never make
                # progress; ending such episodes now keeps them out of the
                # step loop and reports them as truncated.
                stuck_cache[b] = policy._self_loops(b, a)
            if stuck_cache[b]:
                outcome = "truncated"
                break
            s2 = trans.sample(a, s, rng)
            o = obs.sample(a, s2, rng)
            key = (b, a, o)
            nb = next_cache.get(key)
            if nb is None:
                try:
                    nb = belief_update(p, b, a, o)
                except ZeroProbabilityObservation:
                    # Support truncation dropped the sampled state; the
                    # tracker diverged, so count the episode conservatively.
                    outcome = "truncated"
                    break
                next_cache[key] = nb
            s, b = s2, nb
        if outcome is None:
            outcome = "success" if s in success_states else "truncated"
        if outcome == "success":
            successes += 1
        elif outcome == "truncated":
            truncated += 1
    return SimReport(
        episodes=episodes,
        successes=successes,
        estimate=successes / episodes,
        ci99=wilson_halfwidth(successes, episodes),
        truncated=truncated,
    )
