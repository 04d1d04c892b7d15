"""Belief martingales: the representation side of the solver.

The value admits a second route: minimize E[sum_k tau * H(t_k, M_k)] over
discrete-time belief martingales M on the simplex grid. This module houses
the tree data structure, its Riemann-sum cost, extraction of an optimal
martingale from a solved value field (greedy along envelope supports), an
independent brute-force minimizer for two-type instances used as an oracle,
Bayes-consistent strategy synthesis for the informed player, and seeded
Monte Carlo play against several opponent models.

Tree layout. A martingale is stored in merged layers: layer l holds the
distinct beliefs reachable after the split at time index layer_time_index[l],
and edges carry transition probabilities between consecutive layers. The
root belief is pre-split: init_edges sends it into layer 0 (the initial
split happens at t_0 and is the identity when the root is not split). With
forced terminal revelation one extra layer is appended at the final time,
holding simplex vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .game import GameSpec, hamiltonian_profile, payoff_tensor
from .solver import CheckReport, OffGridError, SimplexGrid, ValueField

__all__ = [
    "BeliefMartingale",
    "InformedStrategy",
    "SimulationResult",
    "MartingaleReport",
    "extract_optimal_martingale",
    "martingale_cost",
    "brute_force_value",
    "one_step_dpp",
    "check_martingale",
    "synthesize_strategy",
    "simulate_play",
    "martingale_to_dict",
    "martingale_from_dict",
]

_PROB_SUM_TOL = 1e-12
_EXPORT_NODE_CAP = 1_000_000

OPPONENT_MODES = ("best_response", "uniform", "fixed")


@dataclass(frozen=True, eq=False)
class BeliefMartingale:
    """A discrete-time belief martingale as a layered, merged tree.

    times: the shared time grid t_0 .. t_n.
    root_belief: the prior at t_0, before any split.
    layer_beliefs[l]: (g_l, I) beliefs of layer l.
    layer_time_index[l]: time index of layer l; 0, 1, ..., n, with at most
        one trailing repeat of n (the forced terminal revelation).
    layer_reach[l]: (g_l,) probabilities of reaching each node.
    init_edges: ((pos, prob), ...) from the root into layer 0.
    edges[l][parent]: ((child_pos, prob), ...) from layer l to layer l+1.
    """

    times: np.ndarray
    root_belief: np.ndarray
    layer_beliefs: tuple
    layer_time_index: tuple
    layer_reach: tuple
    init_edges: tuple
    edges: tuple

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64).ravel()
        if times.shape[0] < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing with >= 2 entries")
        root = np.asarray(self.root_belief, dtype=np.float64).ravel()
        dim = root.shape[0]
        if np.any(root < 0.0) or abs(float(root.sum()) - 1.0) > _PROB_SUM_TOL:
            raise ValueError("root belief is not a probability vector")
        layers = tuple(np.asarray(b, dtype=np.float64) for b in self.layer_beliefs)
        if not layers:
            raise ValueError("martingale needs at least one layer")
        for b in layers:
            if b.ndim != 2 or b.shape[1] != dim or b.shape[0] < 1:
                raise ValueError("layer beliefs must be (g, I) with the root's I")
            if np.any(b < 0.0) or np.any(np.abs(b.sum(axis=1) - 1.0) > 1e-9):
                raise ValueError("layer contains an invalid belief")
        kidx = tuple(int(k) for k in self.layer_time_index)
        if len(kidx) != len(layers) or kidx[0] != 0:
            raise ValueError("layer_time_index must start at 0, one per layer")
        last = times.shape[0] - 1
        for a, b in zip(kidx, kidx[1:]):
            if not (b == a + 1 or (b == a == last)):
                raise ValueError("layer time indices must step by 1 "
                                 "(terminal layer may repeat)")
        if kidx[-1] != last:
            raise ValueError("the final layer must sit at the final time")
        reach = tuple(np.asarray(r, dtype=np.float64).ravel() for r in self.layer_reach)
        if len(reach) != len(layers) or any(
                r.shape[0] != b.shape[0] for r, b in zip(reach, layers)):
            raise ValueError("layer_reach shape mismatch")
        if any(np.any(r < 0.0) for r in reach):
            raise ValueError("reach probabilities must be nonnegative")
        init = tuple((int(p), float(q)) for p, q in self.init_edges)
        if not init or any(not (0 <= p < layers[0].shape[0]) or q <= 0.0
                           for p, q in init):
            raise ValueError("invalid initial edges")
        edges = []
        if len(self.edges) != len(layers) - 1:
            raise ValueError("need one edge block per layer transition")
        for l, block in enumerate(self.edges):
            if len(block) != layers[l].shape[0]:
                raise ValueError(f"edge block {l} must have one entry per parent")
            fixed = []
            for parent_edges in block:
                pe = tuple((int(p), float(q)) for p, q in parent_edges)
                if not pe or any(not (0 <= p < layers[l + 1].shape[0]) or q <= 0.0
                                 for p, q in pe):
                    raise ValueError(f"invalid edges out of layer {l}")
                fixed.append(pe)
            edges.append(tuple(fixed))
        for arr in (times, root) + layers + reach:
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "root_belief", root)
        object.__setattr__(self, "layer_beliefs", layers)
        object.__setattr__(self, "layer_time_index", kidx)
        object.__setattr__(self, "layer_reach", reach)
        object.__setattr__(self, "init_edges", init)
        object.__setattr__(self, "edges", tuple(edges))

    @property
    def dimension(self) -> int:
        return self.root_belief.shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.layer_beliefs)


# --- extraction from a solved field --------------------------------------


def extract_optimal_martingale(vf: ValueField, p0,
                               terminal_reveal: bool = False) -> BeliefMartingale:
    """Greedy optimal martingale: follow the envelope supports of the field.

    At every layer each node splits into the support of its envelope entry,
    with the recorded coefficients as transition probabilities; nodes hit by
    several parents are merged (the continuation depends only on (k, belief)).
    The resulting cost reproduces the field value at (t_0, p0); p0 must be a
    grid node (OffGridError otherwise).

    terminal_reveal appends a costless split of every terminal belief into
    simplex vertices, so that leaves are Dirac beliefs.
    """
    grid = vf.grid
    j0 = grid.index_of_belief(p0)
    n = vf.n_steps

    # Layer 0 is the result of the (possibly trivial) split at t_0.
    pairs = vf.supports[0][j0]
    ids = [i for i, _ in pairs]
    init_edges = tuple((pos, lam) for pos, (_, lam) in enumerate(pairs))
    layer_ids = [ids]
    layer_reach = [np.array([lam for _, lam in pairs])]
    edge_blocks = []
    for k in range(1, n + 1):
        pos_of: dict[int, int] = {}
        child_ids: list[int] = []
        reach: list[float] = []
        block = []
        for parent_pos, parent_id in enumerate(layer_ids[-1]):
            out = []
            for child_id, lam in vf.supports[k][parent_id]:
                if child_id not in pos_of:
                    pos_of[child_id] = len(child_ids)
                    child_ids.append(child_id)
                    reach.append(0.0)
                pos = pos_of[child_id]
                reach[pos] += layer_reach[-1][parent_pos] * lam
                out.append((pos, lam))
            block.append(tuple(out))
        edge_blocks.append(tuple(block))
        layer_ids.append(child_ids)
        layer_reach.append(np.array(reach))

    layer_beliefs = [grid.nodes[ids_k] for ids_k in layer_ids]
    time_index = list(range(n + 1))

    if terminal_reveal:
        beliefs = layer_beliefs[-1]
        reach = layer_reach[-1]
        vert_pos: dict[int, int] = {}
        vert_ids: list[int] = []
        vert_reach: list[float] = []
        block = []
        for pos in range(beliefs.shape[0]):
            out = []
            for i in range(grid.dimension):
                w = float(beliefs[pos][i])
                if w <= 0.0:
                    continue
                if i not in vert_pos:
                    vert_pos[i] = len(vert_ids)
                    vert_ids.append(i)
                    vert_reach.append(0.0)
                vpos = vert_pos[i]
                vert_reach[vpos] += float(reach[pos]) * w
                out.append((vpos, w))
            block.append(tuple(out))
        edge_blocks.append(tuple(block))
        layer_beliefs.append(np.eye(grid.dimension)[vert_ids])
        layer_reach.append(np.array(vert_reach))
        time_index.append(n)

    return BeliefMartingale(vf.times, grid.nodes[j0], tuple(layer_beliefs),
                            tuple(time_index), tuple(layer_reach), init_edges,
                            tuple(edge_blocks))


def martingale_cost(spec: GameSpec, m: BeliefMartingale, jobs: int = 1) -> float:
    """Riemann-sum cost sum_k tau * E[H(t_k, M_k)] of a martingale."""
    n = spec.time_steps
    if m.times.shape[0] != n + 1 or abs(float(m.times[-1]) - spec.horizon) > 1e-9:
        raise ValueError("martingale time grid does not match the spec")
    tau = spec.horizon / n
    total = 0.0
    for l, k in enumerate(m.layer_time_index):
        if k >= n:
            continue
        h = hamiltonian_profile(spec, float(m.times[k]), m.layer_beliefs[l],
                                jobs=jobs)
        total += tau * float(np.sum(m.layer_reach[l] * h))
    return total


# --- independent brute force (two types) ---------------------------------


def brute_force_value(spec: GameSpec, p0, split_budget: int) -> float:
    """Exhaustive DP over grid-supported martingales for two-type games.

    Walks the time layers backward; at each step a belief may stay put or
    split among grid nodes bracketing it, with at most split_budget children.
    On a one-dimensional belief space every basic split has at most two
    atoms (one linear barycenter constraint plus the simplex constraint), so
    enumerating singletons and bracketing pairs is exhaustive for any budget
    >= 2; budget 1 forbids splitting entirely. Shares no code with the
    envelope machinery, which is the point: it is the oracle for the
    representation identity.

    Only small instances are accepted (I = 2, r <= 12, n <= 8).
    """
    if spec.n_types != 2:
        raise ValueError("brute force supports exactly two types")
    r = spec.grid_resolution
    n = spec.time_steps
    if r > 12 or n > 8:
        raise ValueError(f"instance too large for brute force "
                         f"(r={r} > 12 or n={n} > 8)")
    if split_budget < 1:
        raise ValueError("split_budget must be at least 1")

    p0 = np.asarray(p0, dtype=np.float64).ravel()
    c0 = int(round(float(p0[0]) * r))
    if abs(float(p0[0]) * r - c0) > 1e-9 * r or not (0 <= c0 <= r):
        raise OffGridError(f"belief {p0.tolist()} is not a node of the "
                           f"resolution-{r} grid; snap it or refine the grid")

    # Ascending index c <-> belief (c/r, (r-c)/r).
    beliefs = np.column_stack([np.arange(r + 1) / r, np.arange(r, -1, -1) / r])
    times = np.linspace(0.0, spec.horizon, n + 1)
    tau = spec.horizon / n

    value = np.zeros(r + 1)
    for k in range(n - 1, -1, -1):
        h = hamiltonian_profile(spec, float(times[k]), beliefs)
        phi = tau * h + value
        nxt = np.empty(r + 1)
        for c in range(r + 1):
            best = phi[c]
            if split_budget >= 2:
                for a in range(c + 1):
                    for b in range(c + 1, r + 1):
                        lam = (b - c) / (b - a)
                        cand = lam * phi[a] + (1.0 - lam) * phi[b]
                        if cand < best:
                            best = cand
            nxt[c] = best
        value = nxt
    return float(value[c0])


# --- checks ---------------------------------------------------------------


def one_step_dpp(vf: ValueField, tol: float = 1e-9, jobs: int = 1) -> CheckReport:
    """Residual of W[k] = sum_j lam_j (W[k+1] + tau H(t_k, .))[j] per node.

    The sum runs over each node's stored envelope support, which is exactly
    how the scheme produced W[k]; the residual is rounding noise unless the
    field was tampered with.
    """
    tau = vf.tau
    worst = 0.0
    where = None
    for k in range(vf.n_steps):
        h = hamiltonian_profile(vf.spec, float(vf.times[k]), vf.grid.nodes,
                                jobs=jobs)
        phi = vf.values[k + 1] + tau * h
        for j in range(vf.grid.n_nodes):
            target = 0.0
            for i, lam in vf.supports[k][j]:
                target += lam * phi[i]
            gap = abs(vf.values[k][j] - target)
            if gap > worst:
                worst = float(gap)
                where = (k, j)
    return CheckReport("one-step-dpp", worst <= tol, worst, tol, where,
                       {"layers": vf.n_steps})


@dataclass(frozen=True)
class MartingaleReport:
    """check_martingale outcome; terminal revelation is reported, not required."""

    max_barycenter_error: float
    max_prob_sum_error: float
    leaves_on_grid: bool | None
    terminal_revealed: bool
    passed: bool


def check_martingale(m: BeliefMartingale, grid: SimplexGrid | None = None,
                     tol: float = 1e-9,
                     prob_tol: float = _PROB_SUM_TOL) -> MartingaleReport:
    """Verify the martingale property and transition-probability sums.

    Barycenter residuals (componentwise |sum prob*child - belief|) must stay
    within tol at the root and at every non-leaf node; probability sums
    within prob_tol. With a grid supplied, leaves must be grid nodes. Whether
    every leaf is a Dirac belief is reported as terminal_revealed, and it is
    never part of pass/fail.
    """
    bary = 0.0
    psum = 0.0

    mean = np.zeros(m.dimension)
    total = 0.0
    for pos, prob in m.init_edges:
        mean += prob * m.layer_beliefs[0][pos]
        total += prob
    bary = max(bary, float(np.max(np.abs(mean - m.root_belief))))
    psum = max(psum, abs(total - 1.0))

    for l, block in enumerate(m.edges):
        child = m.layer_beliefs[l + 1]
        for parent, out in enumerate(block):
            mean = np.zeros(m.dimension)
            total = 0.0
            for pos, prob in out:
                mean += prob * child[pos]
                total += prob
            bary = max(bary, float(np.max(np.abs(mean - m.layer_beliefs[l][parent]))))
            psum = max(psum, abs(total - 1.0))

    leaves = m.layer_beliefs[-1]
    on_grid: bool | None = None
    if grid is not None:
        on_grid = True
        for row in leaves:
            try:
                grid.index_of_belief(row)
            except OffGridError:
                on_grid = False
                break
    revealed = bool(np.all(np.max(leaves, axis=1) >= 1.0 - 1e-9))
    passed = bary <= tol and psum <= prob_tol and (on_grid is not False)
    return MartingaleReport(bary, psum, on_grid, revealed, passed)


# --- strategy synthesis and simulation ------------------------------------


@dataclass(frozen=True, eq=False)
class InformedStrategy:
    """Playable form of a martingale: actions plus per-type splitting kernels.

    u_stars[l] is the (g_l, |U|) optimal mixed action at every acting layer
    (time index < n). init_kernels[i] is type i's law over the initial
    edges; kernels[l][parent] is the (I, children) conditional law over the
    parent's outgoing edges. Rows for types the node cannot carry (belief
    component zero) are uniform placeholders - such (type, node) pairs have
    probability zero under play.
    """

    martingale: BeliefMartingale
    u_stars: tuple
    init_kernels: np.ndarray
    kernels: tuple


def synthesize_strategy(vf: ValueField, m: BeliefMartingale) -> InformedStrategy:
    """Bayes-consistent informed strategy along a martingale.

    Kernels follow from the defining property of the belief process: the
    chance that type i moves along an edge is the edge probability times the
    ratio of the type's weight at the child to its weight at the parent.
    """
    spec = vf.spec
    n = vf.n_steps
    u_stars = []
    for l, k in enumerate(m.layer_time_index):
        if k >= n:
            break
        _, mixes = hamiltonian_profile(spec, float(vf.times[k]),
                                       m.layer_beliefs[l], with_actions=True)
        u_stars.append(mixes)

    dim = m.dimension
    n_init = len(m.init_edges)
    init_kernels = np.full((dim, n_init), 1.0 / n_init)
    for i in range(dim):
        if m.root_belief[i] <= 0.0:
            continue
        for e, (pos, prob) in enumerate(m.init_edges):
            init_kernels[i, e] = prob * m.layer_beliefs[0][pos][i] / m.root_belief[i]

    kernels = []
    for l, block in enumerate(m.edges):
        child = m.layer_beliefs[l + 1]
        parent_beliefs = m.layer_beliefs[l]
        layer_kernels = []
        for parent, out in enumerate(block):
            kern = np.full((dim, len(out)), 1.0 / len(out))
            for i in range(dim):
                w = parent_beliefs[parent][i]
                if w <= 0.0:
                    continue
                for e, (pos, prob) in enumerate(out):
                    kern[i, e] = prob * child[pos][i] / w
            layer_kernels.append(kern)
        kernels.append(tuple(layer_kernels))
    return InformedStrategy(m, tuple(u_stars), init_kernels, tuple(kernels))


@dataclass(frozen=True)
class SimulationResult:
    """Monte Carlo estimate of the running payoff under a strategy."""

    mean: float
    stderr: float
    samples: int
    seed: int
    opponent: str


def _pack_tree(spec: GameSpec, strategy: InformedStrategy, opponent: str,
               fixed_action: int):
    """Flatten layers 0..n into the csr arrays the walk kernel consumes."""
    m = strategy.martingale
    n = spec.time_steps
    sizes = [m.layer_beliefs[l].shape[0] for l in range(n + 1)]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    total = int(offsets[-1])
    nu, nv = spec.n_u, spec.n_v

    node_ucdf = np.ones((total, nu))
    node_opp = np.zeros(total, dtype=np.int64)
    for l in range(n):
        rows = slice(int(offsets[l]), int(offsets[l + 1]))
        mixes = strategy.u_stars[l]
        node_ucdf[rows] = np.cumsum(mixes, axis=1)
        if opponent == "fixed":
            node_opp[rows] = fixed_action
        elif opponent == "uniform":
            node_opp[rows] = -1
        else:
            tensor = payoff_tensor(spec, float(m.times[l]))
            beliefs = m.layer_beliefs[l]
            g = beliefs.shape[0]
            matrices = np.zeros((g, nu, nv))
            for i in range(spec.n_types):
                matrices += beliefs[:, i, None, None] * tensor[i]
            col = np.zeros((g, nv))
            for a in range(nu):
                col += mixes[:, a, None] * matrices[:, a, :]
            node_opp[rows] = np.argmax(col, axis=1)

    edge_child = []
    edge_cdf = []
    edge_ptr = np.zeros(total + 1, dtype=np.int64)
    count = 0
    for l in range(n):
        block = m.edges[l]
        for parent, out in enumerate(block):
            gid = int(offsets[l]) + parent
            edge_ptr[gid] = count
            kern = strategy.kernels[l][parent]
            cdf = np.cumsum(kern, axis=1)
            for e, (pos, _) in enumerate(out):
                edge_child.append(int(offsets[l + 1]) + pos)
                edge_cdf.append(cdf[:, e])
                count += 1
    for gid in range(int(offsets[n]), total + 1):
        edge_ptr[gid] = count
    edge_child = np.asarray(edge_child, dtype=np.int64)
    edge_cdf = np.ascontiguousarray(np.asarray(edge_cdf, dtype=np.float64))

    init_cdf = np.ascontiguousarray(np.cumsum(strategy.init_kernels, axis=1))
    init_child = np.arange(sizes[0], dtype=np.int64)

    payoff_tab = np.empty((n, spec.n_types, nu, nv))
    for k in range(n):
        payoff_tab[k] = payoff_tensor(spec, float(m.times[k]))
    return (np.cumsum(m.root_belief), init_cdf, init_child, node_ucdf,
            node_opp, edge_ptr, edge_child, edge_cdf, payoff_tab)


def simulate_play(spec: GameSpec, strategy: InformedStrategy,
                  opponent: str = "best_response", seed: int = 424242,
                  samples: int = 100_000,
                  fixed_action: int = 0) -> SimulationResult:
    """Monte Carlo play of a synthesized strategy.

    Per sample: draw the type from the prior, walk the tree with the type's
    splitting kernels, draw the informed player's pure action from u_star at
    the current node, let the opponent respond, and accumulate tau * payoff.
    The opponent sees the public belief and the announced mixed action, never
    the realized pure action or the type: "best_response" plays the pointwise
    maximizer (ties to the lowest index), "uniform" randomizes over columns,
    "fixed" always plays fixed_action.

    Uniform draws come from one Philox block of shape (samples, 2 + 3n), row
    s being sample s's private substream, so results do not depend on the
    kernel backend or any parallel schedule.
    """
    if opponent not in OPPONENT_MODES:
        raise ValueError(f"unknown opponent mode {opponent!r}")
    if opponent == "fixed" and not (0 <= fixed_action < spec.n_v):
        raise ValueError(f"fixed_action {fixed_action} outside 0..{spec.n_v - 1}")
    if samples < 2:
        raise ValueError("samples must be at least 2")
    m = strategy.martingale
    n = spec.time_steps
    if m.times.shape[0] != n + 1 or len(m.layer_beliefs) < n + 1:
        raise ValueError("strategy tree does not match the spec's time grid")

    (prior_cdf, init_cdf, init_child, node_ucdf, node_opp, edge_ptr,
     edge_child, edge_cdf, payoff_tab) = _pack_tree(spec, strategy, opponent,
                                                    fixed_action)
    rng = np.random.Generator(np.random.Philox(seed))
    uni = rng.random((samples, 2 + 3 * n))
    payoffs = np.empty(samples)
    tau = spec.horizon / n
    _kernels.simulate_walk(uni, prior_cdf, init_cdf, init_child, node_ucdf,
                           node_opp, edge_ptr, edge_child, edge_cdf,
                           payoff_tab, tau, payoffs)
    mean = float(np.mean(payoffs))
    stderr = float(np.std(payoffs, ddof=1) / math.sqrt(samples))
    return SimulationResult(mean, stderr, samples, int(seed), opponent)


# --- serialization --------------------------------------------------------


def _identity_init(m: BeliefMartingale) -> bool:
    return (len(m.init_edges) == 1 and m.layer_beliefs[0].shape[0] == 1
            and bool(np.array_equal(m.layer_beliefs[0][0], m.root_belief)))


def martingale_to_dict(m: BeliefMartingale) -> dict:
    """Nested-tree document of a martingale.

    Nodes carry k, belief, reach_prob and children (a list of {prob, node});
    reach_prob is the probability of the path leading to that copy of the
    node, so a merged node appears once per incoming path. Refuses trees
    whose expansion exceeds one million nodes.
    """
    counter = {"nodes": 0}

    def expand(layer: int, pos: int, reach: float) -> dict:
        counter["nodes"] += 1
        if counter["nodes"] > _EXPORT_NODE_CAP:
            raise ValueError("martingale expands past the export cap "
                             f"of {_EXPORT_NODE_CAP} nodes")
        children = []
        if layer < len(m.edges):
            for pos_c, prob in m.edges[layer][pos]:
                children.append({"prob": prob,
                                 "node": expand(layer + 1, pos_c, reach * prob)})
        return {"k": m.layer_time_index[layer],
                "belief": [float(w) for w in m.layer_beliefs[layer][pos]],
                "reach_prob": reach,
                "children": children}

    if _identity_init(m):
        tree = expand(0, 0, 1.0)
    else:
        children = [{"prob": prob, "node": expand(0, pos, prob)}
                    for pos, prob in m.init_edges]
        tree = {"k": 0,
                "belief": [float(w) for w in m.root_belief],
                "reach_prob": 1.0,
                "children": children}
    return {"times": [float(t) for t in m.times], "tree": tree}


def _check_node_keys(node: dict) -> None:
    if set(node) != {"k", "belief", "reach_prob", "children"}:
        raise ValueError(f"martingale node must have keys k, belief, "
                         f"reach_prob, children; got {sorted(node)}")


def martingale_from_dict(doc: dict) -> BeliefMartingale:
    """Rebuild a martingale from its nested-tree document.

    Path nodes are kept distinct (no merging), which the checks tolerate;
    reach probabilities are recomputed along paths and must agree with the
    stored ones within 1e-9.
    """
    if set(doc) != {"times", "tree"}:
        raise ValueError("martingale document must have keys times, tree")
    times = np.asarray(doc["times"], dtype=np.float64)
    last = times.shape[0] - 1
    root = doc["tree"]
    _check_node_keys(root)
    if int(root["k"]) != 0:
        raise ValueError("root node must have k = 0")
    if abs(float(root["reach_prob"]) - 1.0) > 1e-9:
        raise ValueError("root reach_prob must be 1")

    root_belief = np.asarray(root["belief"], dtype=np.float64)
    kids = root["children"]
    pre_split = bool(kids) and int(kids[0]["node"]["k"]) == 0
    if pre_split:
        start_nodes = []
        for c in kids:
            node, prob = c["node"], float(c["prob"])
            _check_node_keys(node)
            if int(node["k"]) != 0:
                raise ValueError("initial-split children must stay at k = 0")
            if abs(float(node["reach_prob"]) - prob) > 1e-9:
                raise ValueError("stored reach_prob disagrees with the "
                                 "path product")
            start_nodes.append((node, prob))
        init_edges = tuple((pos, prob) for pos, (_, prob) in enumerate(start_nodes))
    else:
        start_nodes = [(root, 1.0)]
        init_edges = ((0, 1.0),)

    layer_nodes = [start_nodes]   # (node dict, path reach)
    layer_kidx = [0]
    edge_blocks = []
    while True:
        current = layer_nodes[-1]
        k_here = layer_kidx[-1]
        any_children = any(node["children"] for node, _ in current)
        if not any_children:
            break
        if not all(node["children"] for node, _ in current):
            raise ValueError("all nodes of a layer must be split together")
        child_k = {int(c["node"]["k"]) for node, _ in current
                   for c in node["children"]}
        if len(child_k) != 1:
            raise ValueError("children of one layer must share a time index")
        k_next = child_k.pop()
        if not (k_next == k_here + 1 or (k_next == k_here == last)):
            raise ValueError(f"edge from time index {k_here} to {k_next} "
                             "is not a unit step or terminal reveal")
        nxt = []
        block = []
        for node, reach in current:
            out = []
            for c in node["children"]:
                child = c["node"]
                _check_node_keys(child)
                prob = float(c["prob"])
                path_reach = reach * prob
                if abs(float(child["reach_prob"]) - path_reach) > 1e-9:
                    raise ValueError("stored reach_prob disagrees with the "
                                     "path product")
                out.append((len(nxt), prob))
                nxt.append((child, path_reach))
            block.append(tuple(out))
        edge_blocks.append(tuple(block))
        layer_nodes.append(nxt)
        layer_kidx.append(k_next)

    if layer_kidx[-1] != last:
        raise ValueError("martingale leaves must sit at the final time")
    layer_beliefs = tuple(
        np.asarray([node["belief"] for node, _ in layer], dtype=np.float64)
        for layer in layer_nodes)
    layer_reach = tuple(np.asarray([reach for _, reach in layer])
                        for layer in layer_nodes)
    return BeliefMartingale(times, root_belief, layer_beliefs,
                            tuple(layer_kidx), layer_reach, init_edges,
                            tuple(edge_blocks))
