"""Two-sided value bounds over the belief simplex.

Lower bounds are a set of alpha-vectors (max of dot products); upper bounds
are simplex-corner values from the fully observable relaxation plus a point
set evaluated with the sawtooth approximation.  Both representations share
the property that an improvement at one belief improves values at nearby
beliefs.
"""

from dataclasses import dataclass

import numpy as np

from .pomdp import AugmentedPomdp, Belief, successor_beliefs

USELESS_POINT_EPS = 1e-12


@dataclass(frozen=True)
class AlphaVector:
    """Hyperplane lower bound with the action of its one-step backup."""

    values: np.ndarray
    action: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        self.values.setflags(write=False)


class LowerBoundSet:
    """Set of alpha-vectors; V(b) = max over vectors of values . b.

    Backups only add vectors and pruning removes only pointwise-dominated
    ones, so the induced value at any fixed belief never decreases.
    """

    def __init__(self, vectors=()):
        self.vectors = list(vectors)
        self.size_at_last_prune = len(self.vectors)
        self._matrix = None

    def __len__(self):
        return len(self.vectors)

    def matrix(self):
        if self._matrix is None or self._matrix.shape[0] != len(self.vectors):
            self._matrix = np.array([a.values for a in self.vectors])
        return self._matrix

    def add(self, alpha: AlphaVector):
        self.vectors.append(alpha)
        self._matrix = None

    def value(self, b: Belief) -> float:
        if not self.vectors:
            return 0.0
        return float(self._dots(b).max())

    def best(self, b: Belief):
        """(value, vector index) of the maximizing vector; first wins ties."""
        if not self.vectors:
            raise ValueError("empty lower-bound set")
        dots = self._dots(b)
        i = int(np.argmax(dots))
        return float(dots[i]), i

    def _dots(self, b: Belief):
        return self.matrix()[:, b.states] @ b.probs

    def prune(self):
        """Drop pointwise-dominated vectors; earlier-inserted wins exact ties."""
        m = self.matrix()
        n = len(self.vectors)
        keep = np.ones(n, dtype=bool)
        for i in range(n):
            if not keep[i]:
                continue
            geq = (m >= m[i]).all(axis=1)
            geq[i] = False
            geq &= keep
            if not geq.any():
                continue
            js = np.nonzero(geq)[0]
            strict = (m[js] > m[i]).any(axis=1)
            if strict.any() or (js[~strict] < i).any():
                keep[i] = False
        if not keep.all():
            self.vectors = [a for a, k in zip(self.vectors, keep) if k]
            self._matrix = None
        self.size_at_last_prune = len(self.vectors)
        return self

    def snapshot(self):
        return LowerBoundSet(list(self.vectors))


def lower_value(lower: LowerBoundSet, b: Belief) -> float:
    return lower.value(b)


def prune(lower: LowerBoundSet) -> LowerBoundSet:
    return lower.prune()


class UpperBoundSet:
    """Corner values plus (belief, value) points under sawtooth projection.

    The sawtooth value of a point (b_i, v_i) at query b is

        c . b + r * (v_i - c . b_i),   r = min over support(b_i) of b(s)/b_i(s)

    and V(b) is the minimum over all points and the corner interpolation
    c . b itself.  Points are keyed by belief; inserting at an existing
    belief keeps the smaller value, so values never loosen.  Evaluations are
    memoized: every queried belief gets a cached value that is lowered
    incrementally as points are inserted.
    """

    _GROW = 256

    def __init__(self, corner_values):
        self.corner_values = np.asarray(corner_values, dtype=np.float64)
        self.corner_values.setflags(write=False)
        n = self.corner_values.size
        self._pt_rows = {}
        self._pt_beliefs = []
        self._pt_mat = np.empty((0, n))
        self._pt_vals = np.empty(0)
        self._pt_corner = np.empty(0)
        self._n_pts = 0
        self._reg_rows = {}
        self._reg_beliefs = []
        self._reg_mat = np.empty((0, n))
        self._reg_vals = np.empty(0)
        self._reg_corner = np.empty(0)
        self._n_reg = 0

    def __len__(self):
        return self._n_pts

    @property
    def points(self):
        return [(self._pt_beliefs[i], float(self._pt_vals[i])) for i in range(self._n_pts)]

    def corner_interpolation(self, b: Belief) -> float:
        return b.dot(self.corner_values)

    def value(self, b: Belief) -> float:
        row = self._reg_rows.get(b.key)
        if row is None:
            row = self._register(b)
        return float(self._reg_vals[row])

    def _register(self, b: Belief) -> int:
        row = self._n_reg
        if row == self._reg_mat.shape[0]:
            extra = np.zeros((self._GROW, self.corner_values.size))
            self._reg_mat = np.vstack([self._reg_mat, extra])
            self._reg_vals = np.concatenate([self._reg_vals, np.zeros(self._GROW)])
            self._reg_corner = np.concatenate([self._reg_corner, np.zeros(self._GROW)])
        self._reg_mat[row, b.states] = b.probs
        self._reg_corner[row] = self.corner_interpolation(b)
        self._reg_vals[row] = self._evaluate(b)
        self._reg_rows[b.key] = row
        self._reg_beliefs.append(b)
        self._n_reg += 1
        return row

    def _evaluate(self, b: Belief) -> float:
        best = self.corner_interpolation(b)
        if self._n_pts:
            P = self._pt_mat[: self._n_pts]
            dense = b.dense(self.corner_values.size)
            ratios = np.divide(
                dense[None, :], P, out=np.full_like(P, np.inf), where=P > 0.0
            ).min(axis=1)
            ratios = np.minimum(ratios, 1.0)
            f = best + ratios * (self._pt_vals[: self._n_pts] - self._pt_corner[: self._n_pts])
            best = min(best, float(f.min()))
        return max(best, 0.0)

    def insert(self, b: Belief, value: float):
        """Add or tighten the point at b, then lower all memoized values."""
        corner = self.corner_interpolation(b)
        value = max(0.0, float(value))
        row = self._pt_rows.get(b.key)
        if row is not None:
            if value >= self._pt_vals[row]:
                return
            self._pt_vals[row] = value
        elif value >= corner - USELESS_POINT_EPS:
            # No tighter than the corner interpolation anywhere; skip.
            return
        else:
            row = self._n_pts
            if row == self._pt_mat.shape[0]:
                extra = np.zeros((self._GROW, self.corner_values.size))
                self._pt_mat = np.vstack([self._pt_mat, extra])
                self._pt_vals = np.concatenate([self._pt_vals, np.zeros(self._GROW)])
                self._pt_corner = np.concatenate([self._pt_corner, np.zeros(self._GROW)])
            self._pt_mat[row, b.states] = b.probs
            self._pt_vals[row] = value
            self._pt_corner[row] = corner
            self._pt_rows[b.key] = row
            self._pt_beliefs.append(b)
            self._n_pts += 1
        if self._n_reg:
            R = self._reg_mat[: self._n_reg, b.states]
            ratios = np.divide(
                R, b.probs[None, :], out=np.full_like(R, np.inf), where=b.probs[None, :] > 0.0
            ).min(axis=1)
            ratios = np.minimum(ratios, 1.0)
            f = self._reg_corner[: self._n_reg] + ratios * (value - corner)
            np.minimum(self._reg_vals[: self._n_reg], np.maximum(f, 0.0),
                       out=self._reg_vals[: self._n_reg])

    def gc(self):
        """Drop points that nowhere improve on the corner interpolation.

        Insertion already rejects such points, so this is a cheap sweep kept
        for the pruning cadence; it never raises the value at any belief.
        """
        stale = [i for i in range(self._n_pts)
                 if self._pt_vals[i] >= self._pt_corner[i] - USELESS_POINT_EPS]
        if not stale:
            return self
        keep = [i for i in range(self._n_pts) if i not in set(stale)]
        beliefs = [self._pt_beliefs[i] for i in keep]
        vals = self._pt_vals[keep]
        self._pt_rows = {}
        self._pt_beliefs = []
        n = self.corner_values.size
        self._pt_mat = np.empty((0, n))
        self._pt_vals = np.empty(0)
        self._pt_corner = np.empty(0)
        self._n_pts = 0
        for b, v in zip(beliefs, vals):
            self.insert(b, float(v))
        return self


def upper_value(upper: UpperBoundSet, b: Belief) -> float:
    return upper.value(b)


def init_lower_blind(p: AugmentedPomdp, steps: int = 50, residual: float = 1e-6,
                     gamma: float = 1.0) -> LowerBoundSet:
    """Blind-policy lower bound: each action evaluated as a fixed policy.

    Sweeps x <- r_a + gamma * T_a x from the zero vector, which converges
    from below, so truncating at any sweep count keeps the bound sound.
    """
    vectors = []
    for a in range(p.n_actions):
        r = p.reward_vector(a)
        x = np.zeros(p.n_states)
        for _ in range(max(0, steps)):
            nxt = r + gamma * (p.transition[a] @ x)
            delta = float(np.abs(nxt - x).max())
            x = nxt
            if delta < residual:
                break
        vectors.append(AlphaVector(x, a))
    return LowerBoundSet(vectors)


def init_upper_vmdp(p: AugmentedPomdp, tol: float = 1e-8,
                    gamma: float = 1.0) -> UpperBoundSet:
    """Upper bound from the fully observable underlying MDP.

    Value iteration from the zero vector converges from below to the least
    fixed point, giving the optimal reachability values at simplex corners.
    """
    v = np.zeros(p.n_states)
    rewards = [p.reward_vector(a) for a in range(p.n_actions)]
    while True:
        q = np.stack([rewards[a] + gamma * (p.transition[a] @ v) for a in range(p.n_actions)])
        nxt = q.max(axis=0)
        delta = float(np.abs(nxt - v).max())
        v = nxt
        if delta < tol:
            break
    return UpperBoundSet(v)


def _branches(p: AugmentedPomdp, b: Belief):
    return {a: successor_beliefs(p, b, a) for a in range(p.n_actions)}


def backup_lower(p: AugmentedPomdp, lower: LowerBoundSet, b: Belief, *,
                 gamma: float = 1.0, branches=None) -> AlphaVector:
    """Point-based Bellman backup at b; adds the maximizing vector to the set.

    Observation branches with zero probability contribute the zero
    continuation, which is a sound lower bound for nonnegative rewards.
    """
    if branches is None:
        branches = _branches(p, b)
    best_val, best_alpha = -np.inf, None
    for a in range(p.n_actions):
        inner = np.zeros(p.n_states)
        for o, _, succ in branches[a]:
            if lower.vectors:
                _, i = lower.best(succ)
                alpha_star = lower.vectors[i].values
                inner += p.z_column(a, o) * alpha_star
        vals = p.reward_vector(a) + gamma * (p.transition[a] @ inner)
        v = b.dot(vals)
        if v > best_val:
            best_val, best_alpha = v, AlphaVector(vals, a)
    lower.add(best_alpha)
    return best_alpha


def q_upper(p: AugmentedPomdp, upper: UpperBoundSet, b: Belief, a: int, *,
            gamma: float = 1.0, branch=None) -> float:
    """One-step lookahead against the upper bound: R(b,a) + gamma E[V(b')]."""
    if branch is None:
        branch = successor_beliefs(p, b, a)
    future = sum(prob * upper.value(succ) for _, prob, succ in branch)
    r = b.dot(p.target_indicator) if a == p.sink_action else 0.0
    return r + gamma * future


def backup_upper(p: AugmentedPomdp, upper: UpperBoundSet, b: Belief, *,
                 gamma: float = 1.0, branches=None):
    """Bellman backup of the point set at b; keeps the smaller stored value."""
    if branches is None:
        branches = _branches(p, b)
    value = max(q_upper(p, upper, b, a, gamma=gamma, branch=branches[a])
                for a in range(p.n_actions))
    upper.insert(b, value)
    return b, value
