"""Model text format, benchmark generators, and the loop fixture.

The plain-text model format is line oriented (see MODELS.md for the
grammar):

    pomdp <|S|> <|A|> <|O|>
    start <s>:<p> ...
    T: <a> <s> <s'> <p>
    Z: <a> <s'> <o> <p>
    target: <s> ...
    label <name>: <s> ...

`#` starts a comment, blank lines are ignored, and every (s, a) transition
row and (s', a) observation row must sum to 1.  Benchmark layouts (grids,
obstacles, stations) are fixed by this package and documented in MODELS.md;
generators are deterministic functions of their parameters.
"""

import re
from dataclasses import dataclass

import scipy.sparse as sp

from .pomdp import Belief, Pomdp, ReachboundError

_TOKEN = re.compile(r"\S+")


class ModelSyntaxError(ReachboundError):
    def __init__(self, line, col, message):
        self.line, self.col, self.message = line, col, message
        super().__init__(f"line {line}, col {col}: {message}")


def _tokens(line_text):
    return [(m.group(), m.start() + 1) for m in _TOKEN.finditer(line_text)]


class _KernelBuilder:
    def __init__(self, n_actions, n_rows, n_cols):
        self.shape = (n_rows, n_cols)
        self.entries = [{} for _ in range(n_actions)]

    def add(self, a, r, c, p, line, col):
        if (r, c) in self.entries[a]:
            raise ModelSyntaxError(line, col, f"duplicate entry ({a}, {r}, {c})")
        self.entries[a][(r, c)] = p

    def matrices(self):
        mats = []
        for ent in self.entries:
            if ent:
                rows, cols = zip(*ent.keys())
                mats.append(sp.coo_matrix((list(ent.values()), (rows, cols)),
                                          shape=self.shape).tocsr())
            else:
                mats.append(sp.csr_matrix(self.shape))
        return mats


def parse_model(text: str) -> Pomdp:
    """Parse the text format into a validated Pomdp.

    Raises ModelSyntaxError with line/column positions for malformed input
    and ModelValidationError (naming the offending row) for kernels that
    fail stochasticity.
    """
    header = None
    start = None
    targets = None
    labels = {}
    T = Z = None
    n_lines = 0

    def want_int(tok, col, line, upper=None, what="index"):
        try:
            v = int(tok)
        except ValueError:
            raise ModelSyntaxError(line, col, f"expected integer {what}, got {tok!r}") from None
        if v < 0 or (upper is not None and v >= upper):
            raise ModelSyntaxError(line, col, f"{what} {v} out of range [0, {upper})")
        return v

    def want_float(tok, col, line):
        try:
            return float(tok)
        except ValueError:
            raise ModelSyntaxError(line, col, f"expected probability, got {tok!r}") from None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        n_lines = lineno
        body = raw.split("#", 1)[0]
        toks = _tokens(body)
        if not toks:
            continue
        tag, col0 = toks[0]
        if header is None:
            if tag != "pomdp":
                raise ModelSyntaxError(lineno, col0, "file must begin with a 'pomdp' header")
            if len(toks) != 4:
                raise ModelSyntaxError(lineno, col0, "header needs |S| |A| |O|")
            ns = want_int(toks[1][0], toks[1][1], lineno, what="state count")
            na = want_int(toks[2][0], toks[2][1], lineno, what="action count")
            no = want_int(toks[3][0], toks[3][1], lineno, what="observation count")
            if min(ns, na, no) < 1:
                raise ModelSyntaxError(lineno, col0, "counts must be positive")
            header = (ns, na, no)
            T = _KernelBuilder(na, ns, ns)
            Z = _KernelBuilder(na, ns, no)
            continue
        ns, na, no = header
        if tag == "start":
            pairs = []
            for tok, col in toks[1:]:
                if ":" not in tok:
                    raise ModelSyntaxError(lineno, col, f"expected state:prob, got {tok!r}")
                s_txt, p_txt = tok.split(":", 1)
                s = want_int(s_txt, col, lineno, ns, "state")
                pairs.append((s, want_float(p_txt, col, lineno)))
            if not pairs:
                raise ModelSyntaxError(lineno, col0, "empty start belief")
            try:
                start = Belief.from_pairs(pairs)
            except ReachboundError as exc:
                raise ModelSyntaxError(lineno, col0, str(exc)) from None
        elif tag == "T:":
            if len(toks) != 5:
                raise ModelSyntaxError(lineno, col0, "transition line needs a s s' p")
            a = want_int(toks[1][0], toks[1][1], lineno, na, "action")
            s = want_int(toks[2][0], toks[2][1], lineno, ns, "state")
            s2 = want_int(toks[3][0], toks[3][1], lineno, ns, "state")
            T.add(a, s, s2, want_float(toks[4][0], toks[4][1], lineno), lineno, col0)
        elif tag == "Z:":
            if len(toks) != 5:
                raise ModelSyntaxError(lineno, col0, "observation line needs a s' o p")
            a = want_int(toks[1][0], toks[1][1], lineno, na, "action")
            s2 = want_int(toks[2][0], toks[2][1], lineno, ns, "state")
            o = want_int(toks[3][0], toks[3][1], lineno, no, "observation")
            Z.add(a, s2, o, want_float(toks[4][0], toks[4][1], lineno), lineno, col0)
        elif tag == "target:":
            targets = [want_int(t, c, lineno, ns, "state") for t, c in toks[1:]]
            if not targets:
                raise ModelSyntaxError(lineno, col0, "empty target set")
        elif tag == "label":
            if len(toks) < 2 or not toks[1][0].endswith(":"):
                raise ModelSyntaxError(lineno, col0, "label line needs 'label <name>: s ...'")
            name = toks[1][0][:-1]
            labels[name] = [want_int(t, c, lineno, ns, "state") for t, c in toks[2:]]
        else:
            raise ModelSyntaxError(lineno, col0, f"unknown directive {tag!r}")

    def missing(what):
        return ModelSyntaxError(n_lines + 1, 1, f"missing {what}")

    if header is None:
        raise missing("'pomdp' header")
    if start is None:
        raise missing("'start' line")
    if targets is None:
        raise missing("'target:' line")
    ns, na, no = header
    return Pomdp.build(ns, na, no, T.matrices(), Z.matrices(), start, targets, labels)


def serialize_model(p: Pomdp) -> str:
    """Canonical text rendering; byte-identical for equal models."""
    out = [f"pomdp {p.n_states} {p.n_actions} {p.n_observations}"]
    out.append("start " + " ".join(
        f"{s}:{q!r}" for s, q in zip(p.initial_belief.states.tolist(),
                                     p.initial_belief.probs.tolist())
    ))
    for a in range(p.n_actions):
        m = p.transition[a].tocoo()
        for r, c, v in sorted(zip(m.row.tolist(), m.col.tolist(), m.data.tolist())):
            out.append(f"T: {a} {r} {c} {v!r}")
    for a in range(p.n_actions):
        m = p.observation_fn[a].tocoo()
        for r, c, v in sorted(zip(m.row.tolist(), m.col.tolist(), m.data.tolist())):
            out.append(f"Z: {a} {r} {c} {v!r}")
    out.append("target: " + " ".join(str(s) for s in sorted(p.targets)))
    for name in sorted(p.labels):
        out.append(f"label {name}: " + " ".join(str(s) for s in p.labels[name]))
    return "\n".join(out) + "\n"


def load_model(path) -> Pomdp:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def save_model(p: Pomdp, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_model(p))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _dict_kernels(n_actions, n_rows, n_cols, fill):
    """fill(a, r) -> {col: prob}; returns CSR matrices."""
    mats = []
    for a in range(n_actions):
        rows, cols, vals = [], [], []
        for r in range(n_rows):
            for c, v in sorted(fill(a, r).items()):
                rows.append(r)
                cols.append(c)
                vals.append(v)
        mats.append(sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols)).tocsr())
    return mats


def generate_chain(n_steps: int, slip: float = 0.0) -> Pomdp:
    """Fully observable line of n_steps moves ending in an absorbing target.

    With slip > 0 each move stays put with that probability; the optimal
    reachability value is 1 either way, reached after n_steps successful
    moves (so the discounted optimum from the start is gamma**n_steps once
    the collect step is counted).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    ns = n_steps + 1

    def trans(_a, s):
        if s == n_steps:
            return {s: 1.0}
        if slip > 0.0:
            return {s + 1: 1.0 - slip, s: slip}
        return {s + 1: 1.0}

    def obs(_a, s):
        return {s: 1.0}

    return Pomdp.build(
        ns, 1, ns, _dict_kernels(1, ns, ns, trans), _dict_kernels(1, ns, ns, obs),
        Belief.point(0), {n_steps}, {"start": [0]},
    )


@dataclass(frozen=True)
class LoopFixture:
    """A four-belief loop trap plus its exact belief-level description.

    The underlying model hides a static coin; beliefs b1..b4 are 50/50 (or
    coin_prob) mixtures over the coin, so the fully observable relaxation
    values every non-dead corner at 1 while the true optimum is
    max(coin_prob, 1 - coin_prob), realized by gambling at b4.  Belief-level
    edges: b1 -a-> {b1: 0.6, b2: 0.4}; b2 -a-> b3, -b-> b1, -c-> b2;
    b3 -a-> b3, -b-> b4; all other actions self-loop.  This shape defeats
    pure upper-Q action selection and probability-weighted observation
    selection, which never leave b1.
    """

    pomdp: Pomdp
    coin_prob: float
    beliefs: dict
    edges: dict
    optimal_values: dict

    @property
    def optimal_value(self):
        return self.optimal_values["b1"]


def loop_fixture(coin_prob: float = 0.5) -> LoopFixture:
    if not (0.0 < coin_prob < 1.0):
        raise ValueError("coin_prob must be in (0, 1)")
    q = float(coin_prob)
    # states: (node, coin) for node B1..B4 -> 2*node + coin; then GOAL, DEAD
    GOAL, DEAD = 8, 9
    ns, na, no = 10, 5, 4
    A, B, C, GH, GT = range(5)
    O1, O2, OGOAL, ODEAD = range(4)

    node_moves = {
        0: {A: {0: 0.6, 1: 0.4}, B: {0: 1.0}, C: {0: 1.0}},
        1: {A: {2: 1.0}, B: {0: 1.0}, C: {1: 1.0}},
        2: {A: {2: 1.0}, B: {3: 1.0}, C: {2: 1.0}},
        3: {A: {3: 1.0}, B: {3: 1.0}, C: {3: 1.0}},
    }

    def trans(a, s):
        if s in (GOAL, DEAD):
            return {s: 1.0}
        node, coin = divmod(s, 2)
        if a in (GH, GT):
            if node != 3:
                return {s: 1.0}
            wins = (coin == 0) if a == GH else (coin == 1)
            return {GOAL if wins else DEAD: 1.0}
        return {2 * n2 + coin: p for n2, p in node_moves[node][a].items()}

    def obs(_a, s):
        if s == GOAL:
            return {OGOAL: 1.0}
        if s == DEAD:
            return {ODEAD: 1.0}
        node = s // 2
        return {O2 if node == 1 else O1: 1.0}

    pomdp = Pomdp.build(
        ns, na, no, _dict_kernels(na, ns, ns, trans), _dict_kernels(na, ns, no, obs),
        Belief.from_pairs([(0, q), (1, 1.0 - q)]), {GOAL},
        {"goal": [GOAL], "dead": [DEAD]},
    )
    beliefs = {
        f"b{i + 1}": Belief.from_pairs([(2 * i, q), (2 * i + 1, 1.0 - q)])
        for i in range(4)
    }
    beliefs["goal"] = Belief.point(GOAL)
    beliefs["dead"] = Belief.point(DEAD)
    edges = {
        "b1": {"a": [("b1", 0.6), ("b2", 0.4)], "b": [("b1", 1.0)], "c": [("b1", 1.0)]},
        "b2": {"a": [("b3", 1.0)], "b": [("b1", 1.0)], "c": [("b2", 1.0)]},
        "b3": {"a": [("b3", 1.0)], "b": [("b4", 1.0)], "c": [("b3", 1.0)]},
        "b4": {"gh": [("goal", q), ("dead", 1.0 - q)],
               "gt": [("goal", 1.0 - q), ("dead", q)]},
    }
    v = max(q, 1.0 - q)
    values = {"b1": v, "b2": v, "b3": v, "b4": v, "goal": 1.0, "dead": 0.0}
    return LoopFixture(pomdp, q, beliefs, edges, values)


def generate_grid_av(n: int, slip: float, obstacles, target, init_region=None) -> Pomdp:
    """Grid navigation: reach the target cell, never touch an obstacle.

    States are the n*n cells plus a deploy state; every move action from
    the deploy state places the agent uniformly over the initial region.
    Moves slip (stay put) with probability `slip` and bump on walls;
    obstacle and target cells are absorbing.  Observations only distinguish
    {neutral, obstacle signal (at or orthogonally next to one), target}.
    """
    if n < 2:
        raise ValueError("grid needs n >= 2")
    obstacles = {tuple(c) for c in obstacles}
    target = tuple(target)
    all_cells = [(x, y) for y in range(n) for x in range(n)]
    for c in obstacles | {target}:
        if not (0 <= c[0] < n and 0 <= c[1] < n):
            raise ValueError(f"cell {c} outside the {n}x{n} grid")
    if target in obstacles:
        raise ValueError("target cell cannot be an obstacle")
    if init_region is None:
        init_region = all_cells
    init_cells = [c for c in init_region if c not in obstacles and c != target]
    if not init_cells:
        raise ValueError("initial region is empty")

    def idx(cell):
        return cell[1] * n + cell[0]

    deploy = n * n
    ns, na, no = n * n + 1, 4, 3
    moves = [(0, 1), (0, -1), (1, 0), (-1, 0)]
    target_idx = idx(target)
    obstacle_idx = {idx(c) for c in obstacles}

    def trans(a, s):
        if s == deploy:
            share = 1.0 / len(init_cells)
            out = {}
            for c in init_cells:
                out[idx(c)] = out.get(idx(c), 0.0) + share
            return out
        if s == target_idx or s in obstacle_idx:
            return {s: 1.0}
        x, y = s % n, s // n
        dx, dy = moves[a]
        nx, ny = x + dx, y + dy
        dest = s if not (0 <= nx < n and 0 <= ny < n) else ny * n + nx
        if dest == s:
            return {s: 1.0}
        return {dest: 1.0 - slip, s: slip} if slip > 0.0 else {dest: 1.0}

    def near_obstacle(s):
        x, y = s % n, s // n
        if (x, y) in obstacles:
            return True
        return any((x + dx, y + dy) in obstacles for dx, dy in moves)

    def obs(_a, s):
        if s == deploy:
            return {0: 1.0}
        if s == target_idx:
            return {2: 1.0}
        return {1: 1.0} if near_obstacle(s) else {0: 1.0}

    labels = {
        "obstacles": sorted(obstacle_idx),
        "deploy": [deploy],
        "init": sorted(idx(c) for c in init_cells),
    }
    return Pomdp.build(
        ns, na, no, _dict_kernels(na, ns, ns, trans), _dict_kernels(na, ns, no, obs),
        Belief.point(deploy), {target_idx}, labels,
    )


def generate_refuel(n: int, energy_init=None, stations=(), obstacles=(),
                    target=None, start=(0, 0), slip: float = 0.1) -> Pomdp:
    """Energy-constrained grid navigation with recharging stations.

    State is (cell, energy) over non-obstacle, non-target cells with energy
    in 1..n-2, plus absorbing goal and dead states, so
    |S| = (n*n - #obstacles - 1) * (n - 2) + 2.  Each move costs one energy
    unit and slips (stays put) with probability `slip`; moves into walls or
    obstacles bump.  Arriving at a station restores full energy; reaching
    energy 0 anywhere else is absorbing failure.  Position is not
    observable: observations only flag {neutral, at-station, goal, dead}.
    """
    if n < 3:
        raise ValueError("refuel needs n >= 3")
    full = n - 2
    target = tuple(target) if target is not None else (n - 1, n - 1)
    start = tuple(start)
    stations = {tuple(c) for c in stations}
    obstacles = {tuple(c) for c in obstacles}
    if target in obstacles or start in obstacles:
        raise ValueError("start/target cannot be obstacles")
    cells = [(x, y) for y in range(n) for x in range(n)
             if (x, y) not in obstacles and (x, y) != target]
    rank = {c: i for i, c in enumerate(cells)}
    GOAL = len(cells) * full
    DEAD = GOAL + 1
    ns, na, no = DEAD + 1, 4, 4
    moves = [(0, 1), (0, -1), (1, 0), (-1, 0)]

    def resolve(cell, energy):
        """Post-move state id for landing on `cell` with `energy` left."""
        if cell == target:
            return GOAL
        if cell in stations:
            return rank[cell] * full + (full - 1)
        if energy <= 0:
            return DEAD
        return rank[cell] * full + (energy - 1)

    def trans(a, s):
        if s in (GOAL, DEAD):
            return {s: 1.0}
        cell = cells[s // full]
        e = s % full + 1
        dx, dy = moves[a]
        nxt = (cell[0] + dx, cell[1] + dy)
        if not (0 <= nxt[0] < n and 0 <= nxt[1] < n) or nxt in obstacles:
            nxt = cell
        out = {}
        for dest_cell, prob in ((nxt, 1.0 - slip), (cell, slip)):
            if prob <= 0.0:
                continue
            sid = resolve(dest_cell, e - 1)
            out[sid] = out.get(sid, 0.0) + prob
        return out

    def obs(_a, s):
        if s == GOAL:
            return {2: 1.0}
        if s == DEAD:
            return {3: 1.0}
        return {1: 1.0} if cells[s // full] in stations else {0: 1.0}

    if energy_init is None:
        energy_init = full
    if energy_init > full or energy_init < 0:
        raise ValueError(f"energy_init must be in 0..{full}")
    init = resolve(start, energy_init) if start != target else GOAL
    if start in stations:
        init = resolve(start, full)
    labels = {
        "stations": sorted(rank[c] * full + (full - 1) for c in stations if c in rank),
        "dead": [DEAD],
    }
    return Pomdp.build(
        ns, na, no, _dict_kernels(na, ns, ns, trans), _dict_kernels(na, ns, no, obs),
        Belief.point(init), {GOAL}, labels,
    )


# ---------------------------------------------------------------------------
# Presets (layouts fixed by this package; see MODELS.md)
# ---------------------------------------------------------------------------

PRESET_SPECS = {
    "chain-3": ("chain", {"n_steps": 3}),
    "chain-6": ("chain", {"n_steps": 6, "slip": 0.2}),
    "fixture-fig1": ("fixture_fig1", {"coin_prob": 0.5}),
    "grid-av-4": ("grid_av", {
        "n": 4, "slip": 0.1, "obstacles": ((1, 1),), "target": (3, 3),
    }),
    "grid-av-10": ("grid_av", {
        "n": 10, "slip": 0.3, "obstacles": ((2, 3), (5, 6), (7, 2)),
        "target": (9, 9),
        "init_region": tuple((x, y) for y in range(5) for x in range(5)),
    }),
    "grid-av-20": ("grid_av", {
        "n": 20, "slip": 0.5,
        "obstacles": ((3, 4), (7, 11), (12, 6), (15, 15), (9, 17)),
        "target": (19, 19),
        "init_region": tuple((x, y) for y in range(5) for x in range(5)),
    }),
    "refuel-6": ("refuel", {
        "n": 6, "stations": ((2, 2), (4, 4)), "obstacles": ((1, 3), (3, 1)),
        "target": (5, 5), "start": (0, 0), "slip": 0.1,
    }),
    "refuel-8": ("refuel", {
        "n": 8, "stations": ((2, 2), (4, 4), (6, 6)),
        "obstacles": ((1, 4), (4, 1), (5, 5)),
        "target": (7, 7), "start": (0, 0), "slip": 0.1,
    }),
    "refuel-20": ("refuel", {
        "n": 20, "stations": ((4, 4), (8, 8), (12, 12), (16, 16)),
        "obstacles": ((2, 6), (6, 2), (10, 14), (14, 10)),
        "target": (19, 19), "start": (0, 0), "slip": 0.1,
    }),
}

_FAMILY_BUILDERS = {
    "chain": generate_chain,
    "grid_av": generate_grid_av,
    "refuel": generate_refuel,
    "fixture_fig1": lambda **kw: loop_fixture(**kw).pomdp,
}


def build_family(family: str, **params) -> Pomdp:
    family = family.replace("-", "_")
    if family not in _FAMILY_BUILDERS:
        raise ValueError(f"unknown model family {family!r}; "
                         f"choose from {sorted(_FAMILY_BUILDERS)}")
    return _FAMILY_BUILDERS[family](**params)


def preset(name: str) -> Pomdp:
    """Build a named benchmark preset."""
    if name not in PRESET_SPECS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESET_SPECS)}")
    family, params = PRESET_SPECS[name]
    return build_family(family, **params)
