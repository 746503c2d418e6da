"""Finite POMDP models, sparse beliefs, and the reachability-to-reward reduction.

A POMDP here is a tuple (S, A, O, T, Z, b0) with transition kernel
T(s, a, s') and observation kernel Z(s', a, o), both row-stochastic.
Maximal reachability of a target set is reduced to undiscounted expected
total reward by adding an absorbing sink state and a collect action that
pays 1 exactly when taken from a target state.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

# Tolerances shared across the library.
STOCHASTIC_TOL = 1e-9
SUPPORT_EPS = 1e-12
ZERO_OBS_EPS = 1e-12
KEY_DECIMALS = 10


class ReachboundError(Exception):
    """Base class for library errors."""


class ZeroProbabilityObservation(ReachboundError):
    """Raised when a belief update conditions on a probability-0 observation."""


class EmptyTargetSet(ReachboundError):
    """Raised when a reachability problem is posed with no target states."""


class ModelValidationError(ReachboundError):
    """A kernel row violates stochasticity or an index is out of range."""


class Belief:
    """Sparse probability distribution over state indices.

    Support is stored in ascending state order with strictly positive
    probabilities summing to 1, so equality and hashing are well defined.
    Instances are immutable.
    """

    __slots__ = ("states", "probs", "_key", "_hash")

    def __init__(self, states, probs):
        states = np.asarray(states, dtype=np.int64)
        probs = np.asarray(probs, dtype=np.float64)
        if states.size == 0:
            raise ModelValidationError("belief has empty support")
        if not np.all(np.diff(states) > 0):
            order = np.argsort(states, kind="stable")
            states = states[order]
            probs = probs[order]
        if np.any(probs <= 0.0):
            raise ModelValidationError("belief support entries must be positive")
        total = probs.sum()
        if abs(total - 1.0) > STOCHASTIC_TOL:
            raise ModelValidationError(f"belief mass {total!r} is not 1")
        self.states = states
        self.probs = probs
        self.states.setflags(write=False)
        self.probs.setflags(write=False)
        self._key = tuple(zip(states.tolist(), np.round(probs, KEY_DECIMALS).tolist()))
        self._hash = hash(self._key)

    @classmethod
    def from_pairs(cls, pairs):
        """Build from (state, prob) pairs, dropping dust and renormalizing."""
        items = {}
        for s, p in pairs:
            items[int(s)] = items.get(int(s), 0.0) + float(p)
        return cls.from_dense_items(items)

    @classmethod
    def from_dense(cls, vec):
        vec = np.asarray(vec, dtype=np.float64)
        states = np.nonzero(vec > SUPPORT_EPS)[0]
        return cls._normalized(states, vec[states])

    @classmethod
    def from_dense_items(cls, items):
        states = np.array(sorted(items), dtype=np.int64)
        probs = np.array([items[int(s)] for s in states], dtype=np.float64)
        keep = probs > SUPPORT_EPS
        return cls._normalized(states[keep], probs[keep])

    @classmethod
    def point(cls, state):
        return cls(np.array([state], dtype=np.int64), np.array([1.0]))

    @classmethod
    def _normalized(cls, states, probs):
        total = probs.sum()
        if total <= 0.0:
            raise ModelValidationError("belief has no positive mass")
        return cls(states, probs / total)

    @property
    def key(self):
        """Canonical hashable form (support rounded to 10 decimals)."""
        return self._key

    def dense(self, n):
        out = np.zeros(n)
        out[self.states] = self.probs
        return out

    def dot(self, values):
        return float(values[self.states] @ self.probs)

    def mass_on(self, index_set):
        mask = np.isin(self.states, index_set)
        return float(self.probs[mask].sum())

    def linf(self, other):
        """L-infinity distance between two sparse beliefs."""
        a = dict(zip(self.states.tolist(), self.probs.tolist()))
        d = 0.0
        for s, p in zip(other.states.tolist(), other.probs.tolist()):
            d = max(d, abs(a.pop(s, 0.0) - p))
        for p in a.values():
            d = max(d, p)
        return d

    def __eq__(self, other):
        return isinstance(other, Belief) and self._key == other._key

    def __hash__(self):
        return self._hash

    def __len__(self):
        return int(self.states.size)

    def __repr__(self):
        inside = ", ".join(f"{s}: {p:.6g}" for s, p in zip(self.states, self.probs))
        return f"Belief({{{inside}}})"


def _as_csr_list(kernel, n_rows, n_cols, n_actions, what):
    """Validate and convert per-action kernels to CSR, checking row sums."""
    mats = []
    for a in range(n_actions):
        m = sp.csr_matrix(kernel[a], shape=(n_rows, n_cols), dtype=np.float64)
        m.eliminate_zeros()
        if m.nnz and (m.data.min() < 0.0 or m.data.max() > 1.0 + STOCHASTIC_TOL):
            raise ModelValidationError(f"{what} probabilities outside [0,1] for action {a}")
        sums = np.asarray(m.sum(axis=1)).ravel()
        bad = np.nonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)[0]
        if bad.size:
            r = int(bad[0])
            raise ModelValidationError(
                f"{what} row for (action={a}, state={r}) sums to {sums[r]!r}, expected 1"
            )
        mats.append(m)
    return mats


@dataclass(frozen=True)
class Pomdp:
    """Finite POMDP with sparse kernels.

    transition[a] is the |S| x |S| matrix T(s, a, s'); observation_fn[a] is
    the |S| x |O| matrix Z(s', a, o), i.e. rows are indexed by the state
    being entered.
    """

    n_states: int
    n_actions: int
    n_observations: int
    transition: list
    observation_fn: list
    initial_belief: Belief
    targets: frozenset
    labels: dict = field(default_factory=dict)

    @classmethod
    def build(cls, n_states, n_actions, n_observations, transition, observation_fn,
              initial_belief, targets, labels=None):
        """Validate kernels and construct an immutable model."""
        T = _as_csr_list(transition, n_states, n_states, n_actions, "transition")
        Z = _as_csr_list(observation_fn, n_states, n_observations, n_actions, "observation")
        targets = frozenset(int(s) for s in targets)
        if any(s < 0 or s >= n_states for s in targets):
            raise ModelValidationError("target index out of range")
        if initial_belief.states.max() >= n_states:
            raise ModelValidationError("initial belief index out of range")
        return cls(n_states, n_actions, n_observations, T, Z, initial_belief,
                   targets, dict(labels or {}))


@dataclass(frozen=True)
class AugmentedPomdp:
    """Reachability reduction of a Pomdp.

    Adds an absorbing sink (index |S|), a collect action (index |A|), and a
    dedicated observation (index |O|) emitted by the collect action and at
    the sink.  Reward is 1 exactly for (target state, collect action); the
    collect action self-loops with reward 0 elsewhere, so the action set is
    uniform and undiscounted total reward equals reachability probability.
    """

    base: Pomdp
    sink_state: int
    sink_action: int
    sink_observation: int
    n_states: int
    n_actions: int
    n_observations: int
    transition: list
    observation_fn: list
    initial_belief: Belief
    targets: frozenset
    target_indicator: np.ndarray
    _z_csc: dict = field(default_factory=dict, repr=False, compare=False)

    def z_column(self, a, o):
        """Dense column Z(., a, o); per-action CSC conversion is cached."""
        csc = self._z_csc.get(a)
        if csc is None:
            csc = self.observation_fn[a].tocsc()
            self._z_csc[a] = csc
        return np.asarray(csc[:, o].todense()).ravel()

    def reward(self, s, a):
        return 1.0 if (a == self.sink_action and s in self.targets) else 0.0

    def reward_vector(self, a):
        """Dense per-state reward for action a."""
        if a == self.sink_action:
            return self.target_indicator
        return np.zeros(self.n_states)


def augment(p: Pomdp, targets=None) -> AugmentedPomdp:
    """Attach the sink state, collect action, and 0/1 reachability reward.

    The collect action moves target states and the sink to the sink with
    probability 1 and self-loops elsewhere; base actions at the sink
    self-loop, making the sink absorbing.
    """
    targets = frozenset(int(s) for s in (p.targets if targets is None else targets))
    if not targets:
        raise EmptyTargetSet("reachability problem needs a nonempty target set")
    if any(s < 0 or s >= p.n_states for s in targets):
        raise ModelValidationError("target index out of range")

    ns, na, no = p.n_states + 1, p.n_actions + 1, p.n_observations + 1
    sink, a_collect, o_done = p.n_states, p.n_actions, p.n_observations

    T = []
    for a in range(p.n_actions):
        m = sp.lil_matrix((ns, ns))
        m[: p.n_states, : p.n_states] = p.transition[a]
        m[sink, sink] = 1.0
        T.append(m.tocsr())
    collect = sp.lil_matrix((ns, ns))
    for s in range(p.n_states):
        collect[s, sink if s in targets else s] = 1.0
    collect[sink, sink] = 1.0
    T.append(collect.tocsr())

    Z = []
    for a in range(p.n_actions):
        m = sp.lil_matrix((ns, no))
        m[: p.n_states, : p.n_observations] = p.observation_fn[a]
        m[sink, o_done] = 1.0
        Z.append(m.tocsr())
    z_collect = sp.lil_matrix((ns, no))
    z_collect[:, o_done] = 1.0
    Z.append(z_collect.tocsr())

    indicator = np.zeros(ns)
    indicator[sorted(targets)] = 1.0
    indicator.setflags(write=False)

    return AugmentedPomdp(
        base=p, sink_state=sink, sink_action=a_collect, sink_observation=o_done,
        n_states=ns, n_actions=na, n_observations=no,
        transition=T, observation_fn=Z,
        initial_belief=p.initial_belief, targets=targets, target_indicator=indicator,
    )


def predicted_state_dist(p: AugmentedPomdp, b: Belief, a: int) -> np.ndarray:
    """Dense pushforward of b through T(., a, .): P(s' | b, a)."""
    rows = p.transition[a][b.states]
    return np.asarray(b.probs @ rows).ravel()


def observation_probs(p: AugmentedPomdp, b: Belief, a: int) -> np.ndarray:
    """Dense vector of P(o | b, a) over all observations."""
    pre = predicted_state_dist(p, b, a)
    return np.asarray(pre @ p.observation_fn[a]).ravel()


def observation_prob(p: AugmentedPomdp, b: Belief, a: int, o: int) -> float:
    """Marginal probability P(o | b, a) = sum_s' Z(s',a,o) sum_s T(s,a,s') b(s)."""
    return float(observation_probs(p, b, a)[o])


def belief_update(p: AugmentedPomdp, b: Belief, a: int, o: int) -> Belief:
    """Bayes posterior over states after taking a and observing o.

    Raises ZeroProbabilityObservation when P(o | b, a) is (numerically)
    zero; callers must not branch on such observations.  Posterior support
    entries below 1e-12 are dropped and the rest renormalized.
    """
    pre = predicted_state_dist(p, b, a)
    post = pre * p.z_column(a, o)
    total = post.sum()
    if total <= ZERO_OBS_EPS:
        raise ZeroProbabilityObservation(
            f"observation {o} has probability {total!r} after action {a}"
        )
    return Belief.from_dense(post / total)


def successor_beliefs(p: AugmentedPomdp, b: Belief, a: int):
    """All (observation, probability, posterior) branches with positive mass."""
    pre = predicted_state_dist(p, b, a)
    obs_probs = np.asarray(pre @ p.observation_fn[a]).ravel()
    out = []
    for o in np.nonzero(obs_probs > ZERO_OBS_EPS)[0]:
        post = pre * p.z_column(a, int(o))
        out.append((int(o), float(obs_probs[o]), Belief.from_dense(post / obs_probs[o])))
    return out


def expected_reward(p: AugmentedPomdp, b: Belief, a: int) -> float:
    """E_{s ~ b}[R(s, a)]; nonzero only for the collect action."""
    if a != p.sink_action:
        return 0.0
    return b.dot(p.target_indicator)
