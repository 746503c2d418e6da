"""Independent dense oracles used by the test suite.

Everything here works on dense numpy arrays with its own belief-update and
value-iteration code, so assertions against the library exercise two
separate computation paths.
"""

import numpy as np
from scipy.optimize import linprog

DUST = 1e-12


def dense_kernels(p):
    """(T, Z, R) as dense arrays: T[a][s, s'], Z[a][s', o], R[a][s]."""
    T = np.stack([p.transition[a].toarray() for a in range(p.n_actions)])
    Z = np.stack([p.observation_fn[a].toarray() for a in range(p.n_actions)])
    R = np.stack([np.asarray(p.reward_vector(a)) for a in range(p.n_actions)])
    return T, Z, R


def dense_belief_update(T, Z, b, a, o):
    """Bayes posterior from dense kernels; returns (posterior, P(o|b,a))."""
    pre = b @ T[a]
    post = pre * Z[a][:, o]
    total = post.sum()
    if total <= DUST:
        return None, 0.0
    post = post / total
    post[post <= DUST] = 0.0
    return post / post.sum(), float(total)


def belief_key(vec):
    return tuple(np.round(vec, 10).tolist())


class BeliefMdp:
    """Explicit enumeration of the reachable belief MDP of an augmented POMDP."""

    def __init__(self, beliefs, transitions, rewards, index):
        self.beliefs = beliefs          # list of dense vectors
        self.transitions = transitions  # [node][action] -> list of (prob, succ)
        self.rewards = rewards          # array [node, action]
        self.index = index              # belief_key -> node id

    def __len__(self):
        return len(self.beliefs)

    def node_of(self, belief):
        """Node id of a library Belief, or None."""
        return self.index.get(belief_key(belief.dense(len(self.beliefs[0]))))

    def optimal_values(self, tol=1e-12, gamma=1.0, max_sweeps=1_000_000):
        """Undiscounted max total reward by VI from zero (least fixed point)."""
        v = np.zeros(len(self.beliefs))
        for _ in range(max_sweeps):
            nxt = np.array([
                max(self.rewards[n, a] + gamma * sum(pr * v[s] for pr, s in succs)
                    for a, succs in enumerate(self.transitions[n]))
                for n in range(len(self.beliefs))
            ])
            delta = float(np.abs(nxt - v).max())
            v = nxt
            if delta < tol:
                break
        return v

    def policy_finite_horizon(self, policy_fn, horizon, gamma=1.0):
        """Expected cumulative reward of policy_fn(belief_vec) -> action."""
        v = np.zeros(len(self.beliefs))
        for _ in range(horizon):
            nxt = np.empty_like(v)
            for n in range(len(self.beliefs)):
                a = policy_fn(self.beliefs[n])
                nxt[n] = self.rewards[n, a] + gamma * sum(
                    pr * v[s] for pr, s in self.transitions[n][a]
                )
            v = nxt
        return v

    def policy_push_forward(self, policy_fn, horizon):
        """Distribution over belief nodes after `horizon` steps of the policy."""
        dist = np.zeros(len(self.beliefs))
        dist[0] = 1.0
        for _ in range(horizon):
            nxt = np.zeros_like(dist)
            for n, mass in enumerate(dist):
                if mass <= 0.0:
                    continue
                a = policy_fn(self.beliefs[n])
                for pr, s in self.transitions[n][a]:
                    nxt[s] += mass * pr
            dist = nxt
        return dist


def enumerate_belief_mdp(p, max_nodes=5000):
    """Breadth-first enumeration mirroring the library's support truncation."""
    T, Z, _ = dense_kernels(p)
    rewards_sa = np.stack([p.reward_vector(a) for a in range(p.n_actions)])
    b0 = p.initial_belief.dense(p.n_states)
    beliefs = [b0]
    index = {belief_key(b0): 0}
    transitions = []
    rewards = []
    frontier = [0]
    while frontier:
        n = frontier.pop(0)
        b = beliefs[n]
        while len(transitions) <= n:
            transitions.append(None)
            rewards.append(None)
        row = []
        rew = []
        for a in range(p.n_actions):
            succs = []
            pre = b @ T[a]
            obs_p = pre @ Z[a]
            for o in np.nonzero(obs_p > DUST)[0]:
                post, prob = dense_belief_update(T, Z, b, a, int(o))
                key = belief_key(post)
                sid = index.get(key)
                if sid is None:
                    sid = len(beliefs)
                    if sid >= max_nodes:
                        raise RuntimeError(f"belief MDP larger than {max_nodes} nodes")
                    beliefs.append(post)
                    index[key] = sid
                    frontier.append(sid)
                succs.append((prob, sid))
            row.append(succs)
            rew.append(float(b @ rewards_sa[a]))
        transitions[n] = row
        rewards[n] = rew
    return BeliefMdp(beliefs, transitions, np.array(rewards), index)


def blind_policy_values(p, action, sweeps, gamma=1.0):
    """Dense fixed-action policy evaluation from the zero vector."""
    T, _, R = dense_kernels(p)
    x = np.zeros(p.n_states)
    for _ in range(sweeps):
        x = R[action] + gamma * (T[action] @ x)
    return x


def mdp_optimal_values(p, tol=1e-12, gamma=1.0):
    """Dense VI on the fully observable augmented MDP (from below)."""
    T, _, R = dense_kernels(p)
    v = np.zeros(p.n_states)
    while True:
        nxt = np.max(R + gamma * (T @ v), axis=0)
        if float(np.abs(nxt - v).max()) < tol:
            return nxt
        v = nxt


def sawtooth_lp_value(corner_values, points, b):
    """Exact convex-hull projection upper bound via an LP.

    Variables are convexity weights over all stored points plus all simplex
    corners; minimizes the interpolated value subject to reproducing b.
    """
    n = len(corner_values)
    cols = []
    vals = []
    for s in range(n):
        e = np.zeros(n)
        e[s] = 1.0
        cols.append(e)
        vals.append(corner_values[s])
    for belief, v in points:
        cols.append(belief.dense(n))
        vals.append(v)
    A_eq = np.stack(cols, axis=1)
    A_eq = np.vstack([A_eq, np.ones(len(cols))])
    b_eq = np.concatenate([b.dense(n), [1.0]])
    res = linprog(c=np.array(vals), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * len(cols), method="highs")
    assert res.success, res.message
    return float(res.fun)


def lp_max_reachability(n_nodes, interior_constraints, fixed_values, gamma=1.0):
    """Least solution of v >= r + gamma * sum(P v) per (node, action) row.

    interior_constraints: list of (node, reward, [(prob, succ), ...]).
    fixed_values: dict node -> pinned value (frontier nodes, absorbing ends).
    Minimizing the sum yields the least fixed point of the max-Bellman
    operator, i.e. the maximal reachability value given the pinned nodes.
    """
    A_ub = []
    b_ub = []
    for node, reward, succs in interior_constraints:
        row = np.zeros(n_nodes)
        row[node] -= 1.0
        for prob, s in succs:
            row[s] += gamma * prob
        A_ub.append(row)
        b_ub.append(-reward)
    A_eq = []
    b_eq = []
    for node, value in fixed_values.items():
        row = np.zeros(n_nodes)
        row[node] = 1.0
        A_eq.append(row)
        b_eq.append(value)
    res = linprog(
        c=np.ones(n_nodes), A_ub=np.array(A_ub), b_ub=np.array(b_ub),
        A_eq=np.array(A_eq) if A_eq else None, b_eq=np.array(b_eq) if b_eq else None,
        bounds=[(0.0, 1.0)] * n_nodes, method="highs",
    )
    assert res.success, res.message
    return res.x
