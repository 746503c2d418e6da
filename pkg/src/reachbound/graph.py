"""Incrementally built fragment of the belief MDP.

Nodes are beliefs, merged on insertion so the structure is a graph rather
than a tree: revisiting a belief through a different action/observation
history reuses the existing node.  Frontier nodes are those with no
expanded action; they hold the cut-off upper-bound values during exact
value iteration.
"""

from dataclasses import dataclass, field

from .pomdp import AugmentedPomdp, Belief, successor_beliefs

MERGE_TOL = 1e-9


@dataclass
class BeliefNode:
    id: int
    belief: Belief
    edges: dict = field(default_factory=dict)
    expanded_actions: set = field(default_factory=set)
    # visit_count counts action selections at this node, so it always
    # equals sum(action_counts.values()); chosen_count counts how often a
    # trial moved here, which keeps growing even at nodes whose gap is
    # already closed (they never select actions themselves).
    visit_count: int = 0
    action_counts: dict = field(default_factory=dict)
    chosen_count: int = 0
    local_upper: float = 1.0
    local_lower_cache: float = 0.0

    @property
    def is_frontier(self):
        return not self.expanded_actions

    def successors(self, a):
        return self.edges[a]


class BeliefGraph:
    """Belief-indexed node store rooted at the initial belief.

    Lookup uses the belief's canonical rounded key with an exact L-infinity
    check against candidates sharing that key, so merging is O(1) with a
    sound fallback.
    """

    def __init__(self, root_belief: Belief, merge_tol: float = MERGE_TOL):
        self.nodes = []
        self.merge_tol = merge_tol
        self._index = {}
        self.frontier = set()
        self.root, _ = self.find_or_insert(root_belief)

    def __len__(self):
        return len(self.nodes)

    def node(self, node_id: int) -> BeliefNode:
        return self.nodes[node_id]

    def find_or_insert(self, b: Belief):
        """Return (node id, inserted); merges beliefs within merge_tol."""
        bucket = self._index.get(b.key)
        if bucket is not None:
            for nid in bucket:
                if self.nodes[nid].belief.linf(b) <= self.merge_tol:
                    return nid, False
        nid = len(self.nodes)
        self.nodes.append(BeliefNode(id=nid, belief=b))
        self._index.setdefault(b.key, []).append(nid)
        self.frontier.add(nid)
        return nid, True

    def expand(self, p: AugmentedPomdp, node_id: int, a: int):
        """Materialize all positive-probability branches of action a."""
        node = self.nodes[node_id]
        if a in node.expanded_actions:
            raise ValueError(f"action {a} already expanded at node {node_id}")
        out = []
        edges = []
        for o, prob, succ in successor_beliefs(p, node.belief, a):
            sid, _ = self.find_or_insert(succ)
            edges.append((o, prob, sid))
            out.append(sid)
        node.edges[a] = edges
        node.expanded_actions.add(a)
        self.frontier.discard(node_id)
        return out

    def ensure_expanded(self, p: AugmentedPomdp, node_id: int):
        """Expand every action not yet materialized at the node."""
        node = self.nodes[node_id]
        for a in range(p.n_actions):
            if a not in node.expanded_actions:
                self.expand(p, node_id, a)
        return node

    def record_visit(self, node_id: int, a: int):
        node = self.nodes[node_id]
        node.visit_count += 1
        node.action_counts[a] = node.action_counts.get(a, 0) + 1

    def record_choice(self, node_id: int):
        self.nodes[node_id].chosen_count += 1

    def visit_count(self, node_id: int) -> int:
        return self.nodes[node_id].visit_count

    def dump(self, lower_fn=None, upper_fn=None) -> str:
        """Deterministic text rendering of the graph for golden tests."""
        lines = [f"belief-graph nodes={len(self.nodes)} root={self.root}"]
        for node in self.nodes:
            lo = f"{lower_fn(node.belief):.9g}" if lower_fn else "-"
            up = f"{upper_fn(node.belief):.9g}" if upper_fn else "-"
            support = ",".join(
                f"{s}:{p:.9g}" for s, p in zip(node.belief.states, node.belief.probs)
            )
            lines.append(
                f"node {node.id} frontier={int(node.is_frontier)} visits={node.visit_count}"
                f" lower={lo} upper={up} belief={support}"
            )
            for a in sorted(node.edges):
                for o, prob, sid in node.edges[a]:
                    lines.append(f"  a={a} o={o} p={prob:.9g} -> {sid}")
        return "\n".join(lines) + "\n"
