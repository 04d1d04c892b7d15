"""Backward value computation on the belief simplex.

The value field is produced by the convexification recursion

    W[n] = 0,        W[k] = Vex( W[k+1] + tau * H(t_k, .) ),

where Vex is the lower convex envelope over the simplex grid, H is the
one-shot mixed game value, and tau = T / n. The envelope both propagates the
value and records, per node, the convex combination of grid nodes realizing
it; those supports drive martingale extraction, and the nodes whose support
is the singleton {self} ("exposed" nodes) are the discrete stand-ins for
extreme points in the dual supersolution test.

Envelope back ends: a monotone-chain hull for two types, lifted-hull lower
facets for three, and a per-node LP over all grid nodes in general (also the
fallback whenever the geometric paths degenerate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from . import _kernels
from .game import GameSpec, hamiltonian_profile, payoff_bounds, payoff_tensor, belief_measure
from .measures import wasserstein1

__all__ = [
    "SimplexGrid",
    "GridSizeError",
    "OffGridError",
    "EnvelopeError",
    "EnvelopeResult",
    "ValueField",
    "CheckReport",
    "RegularityReport",
    "build_grid",
    "convex_envelope",
    "solve_backward",
    "verify_subsolution",
    "verify_dual_supersolution",
    "regularity_report",
]

GRID_NODE_CAP = 2_000_000

# Two-sided LP tolerances for the envelope programs; the matrix-game LPs in
# the game module use the same settings.
_LP_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}

# A raw envelope value this close to the input is treated as touching, and the
# node is recorded as its own support (see convex_envelope).
_TOUCH_TOL = 1e-10

_COEFF_TOL = 1e-12


class GridSizeError(ValueError):
    """Requested simplex grid exceeds the node cap."""


class OffGridError(ValueError):
    """A belief expected to be a grid node is not one."""


class EnvelopeError(RuntimeError):
    """Envelope LP failed (cannot occur for finite inputs)."""


@dataclass(frozen=True, eq=False)
class SimplexGrid:
    """All beliefs with components k/resolution, in descending lex order.

    counts holds the integer numerators, one row per node; nodes is
    counts / resolution. Descending lexicographic order puts the first
    vertex (1, 0, ..., 0) at index 0 and (0, ..., 0, 1) last.
    """

    dimension: int
    resolution: int
    counts: np.ndarray
    nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.counts.shape[0]

    def index_of(self, counts) -> int:
        """Rank of an integer composition among the grid nodes."""
        c = np.asarray(counts, dtype=np.int64).ravel()
        if c.shape[0] != self.dimension or np.any(c < 0) or int(c.sum()) != self.resolution:
            raise OffGridError(f"{c.tolist()} is not a composition of "
                               f"{self.resolution} into {self.dimension} parts")
        # Count the compositions that precede c in descending lex order: at
        # position j, every larger leading value f contributes a full block of
        # C(rem - f + parts - 2, parts - 2) tails, and the sum over
        # f = c_j + 1 .. rem telescopes to a single binomial.
        rank = 0
        rem = self.resolution
        for j in range(self.dimension - 1):
            parts_left = self.dimension - j - 1
            if rem - int(c[j]) >= 1:
                rank += math.comb(rem - int(c[j]) - 1 + parts_left, parts_left)
            rem -= int(c[j])
        return rank

    def index_of_belief(self, p, tol: float = 1e-9) -> int:
        """Grid index of a belief, required to sit on the grid within tol."""
        p = np.asarray(p, dtype=np.float64).ravel()
        if p.shape[0] != self.dimension:
            raise OffGridError(f"belief has dimension {p.shape[0]}, "
                               f"grid has {self.dimension}")
        scaled = p * self.resolution
        c = np.rint(scaled).astype(np.int64)
        if int(c.sum()) != self.resolution or np.any(c < 0) or \
                float(np.max(np.abs(p - c / self.resolution))) > tol:
            raise OffGridError(
                f"belief {p.tolist()} is not a node of the resolution-"
                f"{self.resolution} grid (tolerance {tol:g}); snap it to a "
                f"grid node or refine the grid")
        return self.index_of(c)

    def vertex_index(self, i: int) -> int:
        """Grid index of the pure belief concentrated on type i."""
        c = np.zeros(self.dimension, dtype=np.int64)
        c[i] = self.resolution
        return self.index_of(c)


def _compositions(total: int, parts: int) -> np.ndarray:
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    if parts == 2:
        first = np.arange(total, -1, -1, dtype=np.int64)
        return np.column_stack([first, total - first])
    blocks = []
    for first in range(total, -1, -1):
        rest = _compositions(total - first, parts - 1)
        head = np.full((rest.shape[0], 1), first, dtype=np.int64)
        blocks.append(np.hstack([head, rest]))
    return np.vstack(blocks)


def build_grid(dimension: int, resolution: int,
               cap: int = GRID_NODE_CAP) -> SimplexGrid:
    """Enumerate the simplex grid with the given denominator.

    Refuses (GridSizeError) when the node count C(r+I-1, I-1) exceeds cap,
    before any allocation happens.
    """
    if dimension < 1:
        raise ValueError("dimension must be at least 1")
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    n_nodes = math.comb(resolution + dimension - 1, dimension - 1)
    if n_nodes > cap:
        raise GridSizeError(
            f"simplex grid with I={dimension}, r={resolution} has {n_nodes} "
            f"nodes, above the cap of {cap}; lower the resolution")
    counts = _compositions(resolution, dimension)
    nodes = counts.astype(np.float64) / float(resolution)
    counts.setflags(write=False)
    nodes.setflags(write=False)
    return SimplexGrid(dimension, resolution, counts, nodes)


# --- convex envelope -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    """Lower convex envelope on the grid.

    values[j] <= f[j] is the envelope; supports[j] is the realizing convex
    combination as (node index, coefficient) pairs in ascending node order;
    exposed[j] marks nodes whose support is the singleton {j} itself.
    """

    values: np.ndarray
    supports: tuple
    exposed: np.ndarray


def _combine(f: np.ndarray, pairs) -> float:
    total = 0.0
    for idx, lam in pairs:
        total += lam * f[idx]
    return total


def _clean_support(ids, lams, f) -> tuple[tuple, float]:
    """Drop negligible coefficients, renormalize, and re-evaluate the value."""
    pairs = [(int(i), float(l)) for i, l in zip(ids, lams) if l > _COEFF_TOL]
    total = sum(l for _, l in pairs)
    pairs = [(i, l / total) for i, l in sorted(pairs)]
    return tuple(pairs), _combine(f, pairs)


def _envelope_chain(grid: SimplexGrid, f: np.ndarray):
    """Two-type path: integer abscissa makes the hull exact and cheap."""
    m = grid.n_nodes
    # Work in ascending order of the second weight so x is increasing.
    x = np.arange(m, dtype=np.float64)
    f_asc = np.ascontiguousarray(f[::-1])
    hull = _kernels.lower_hull_indices(x, f_asc)
    _, left, right, lam = _kernels.interpolate_on_hull(x, f_asc, hull)
    env = np.empty(m, dtype=np.float64)
    supports = [None] * m
    for q in range(m):
        j = m - 1 - q
        if left[q] == right[q]:
            supports[j] = ((j, 1.0),)
            env[j] = f[j]
        else:
            a = m - 1 - int(left[q])
            b = m - 1 - int(right[q])
            la = float(lam[q])
            supports[j], env[j] = _clean_support((b, a), (1.0 - la, la), f)
    return env, supports


def _lp_support(grid: SimplexGrid, f: np.ndarray, a_eq: np.ndarray, j: int):
    b_eq = np.append(grid.nodes[j], 1.0)
    res = linprog(f, A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None),
                  method="highs-ds", options=_LP_OPTIONS)
    if not res.success:
        raise EnvelopeError(f"envelope LP failed at node {j}: {res.message}")
    lam = np.clip(res.x, 0.0, None)
    ids = np.nonzero(lam > _COEFF_TOL)[0]
    return _clean_support(ids, lam[ids], f)


def _envelope_lp(grid: SimplexGrid, f: np.ndarray, node_ids=None):
    """Per-node LP over all grid nodes; exact but the slowest back end."""
    m = grid.n_nodes
    if node_ids is None:
        node_ids = range(m)
    a_eq = np.vstack([grid.nodes.T, np.ones((1, m))])
    env = np.empty(m, dtype=np.float64)
    supports = [None] * m
    is_vertex = grid.counts.max(axis=1) == grid.resolution
    for j in node_ids:
        if is_vertex[j]:
            # A vertex is extreme in the simplex: no other combination hits it.
            supports[j] = ((j, 1.0),)
            env[j] = f[j]
            continue
        supports[j], env[j] = _lp_support(grid, f, a_eq, j)
    return env, supports


def _envelope_hull(grid: SimplexGrid, f: np.ndarray):
    """Three-type path: lower facets of the lifted hull, LP as a safety net.

    Returns None when qhull rejects the cloud outright (degenerate lift, e.g.
    an affine f); single awkward nodes fall back to the LP individually.
    """
    m = grid.n_nodes
    xy = grid.nodes[:, :2]
    lifted = np.column_stack([xy, f])
    try:
        hull = ConvexHull(lifted, qhull_options="Qt")
    except QhullError:
        return None
    low = hull.equations[:, 2] < -1e-12
    if not np.any(low):
        return None
    planes = hull.equations[low]
    tris = hull.simplices[low]
    # Every lower-facet plane supports the envelope from below, and at a node
    # inside a facet's shadow the plane value IS the envelope; the pointwise
    # max over planes is therefore the envelope at every node.
    heights = -(xy @ planes[:, :2].T + planes[:, 3:4].T) / planes[:, 2:3].T
    best = np.argmax(heights, axis=1)
    env = np.empty(m, dtype=np.float64)
    supports = [None] * m
    a_eq = None
    for j in range(m):
        tri = tris[best[j]]
        if j in tri:
            supports[j] = ((j, 1.0),)
            env[j] = f[j]
            continue
        v0, v1, v2 = tri
        t_mat = np.column_stack([xy[v1] - xy[v0], xy[v2] - xy[v0]])
        det = t_mat[0, 0] * t_mat[1, 1] - t_mat[0, 1] * t_mat[1, 0]
        ok = abs(det) > 1e-14
        if ok:
            rhs = xy[j] - xy[v0]
            b1 = (rhs[0] * t_mat[1, 1] - rhs[1] * t_mat[0, 1]) / det
            b2 = (rhs[1] * t_mat[0, 0] - rhs[0] * t_mat[1, 0]) / det
            bary = np.array([1.0 - b1 - b2, b1, b2])
            ok = bool(np.min(bary) > -1e-7)
        if not ok:
            # Flat or sliver triangle; settle this node by LP instead.
            if a_eq is None:
                a_eq = np.vstack([grid.nodes.T, np.ones((1, m))])
            supports[j], env[j] = _lp_support(grid, f, a_eq, j)
            continue
        bary = np.clip(bary, 0.0, None)
        supports[j], env[j] = _clean_support(tri, bary / bary.sum(), f)
    return env, supports


def convex_envelope(grid: SimplexGrid, f, method: str = "auto") -> EnvelopeResult:
    """Lower convex envelope of node values over the whole simplex grid.

    env[j] = min { sum lam_i f[i] : sum lam_i node_i = node_j, lam in the
    simplex over grid nodes }. The support of each node records an optimal
    basic combination. Whenever the raw envelope comes within 1e-10 of f[j]
    the value is snapped to f[j] exactly and the node marked exposed; this
    keeps touching nodes bit-identical to their inputs, which downstream
    identity checks (and the scheme's vertex equalities) rely on.

    method "auto" picks the fast path by dimension; "lp" forces the per-node
    LP everywhere (useful as an oracle).
    """
    f = np.asarray(f, dtype=np.float64).ravel()
    m = grid.n_nodes
    if f.shape[0] != m:
        raise ValueError(f"expected {m} node values, got {f.shape[0]}")
    if not np.all(np.isfinite(f)):
        raise ValueError("node values must be finite")
    if method not in ("auto", "lp"):
        raise ValueError(f"unknown envelope method {method!r}")

    if method == "lp":
        env, supports = _envelope_lp(grid, f)
    elif m == 1 or grid.resolution == 1:
        # Only vertices present; each node is extreme.
        env = f.copy()
        supports = [((j, 1.0),) for j in range(m)]
    elif grid.dimension == 2:
        env, supports = _envelope_chain(grid, f)
    elif grid.dimension == 3:
        out = _envelope_hull(grid, f)
        if out is None:
            env, supports = _envelope_lp(grid, f)
        else:
            env, supports = out
    else:
        env, supports = _envelope_lp(grid, f)

    exposed = np.zeros(m, dtype=bool)
    for j in range(m):
        if env[j] >= f[j] - _TOUCH_TOL:
            env[j] = f[j]
            supports[j] = ((j, 1.0),)
            exposed[j] = True
    env.setflags(write=False)
    return EnvelopeResult(env, tuple(supports), exposed)


# --- backward scheme -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ValueField:
    """Value of the game on (time layer) x (grid node).

    values[k][j] approximates the game value started at time times[k] from
    belief grid.nodes[j]; supports[k][j] is the envelope combination behind
    that entry (for k = n, trivially the node itself), and exposed[k][j]
    flags the singleton-support nodes.
    """

    spec: GameSpec
    times: np.ndarray
    grid: SimplexGrid
    values: np.ndarray
    supports: tuple
    exposed: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def tau(self) -> float:
        return self.spec.horizon / self.spec.time_steps


def solve_backward(spec: GameSpec, jobs: int = 1,
                   envelope_method: str = "auto") -> ValueField:
    """Run the backward convexification scheme for one game.

    H is frozen at the left endpoint of every step: layer k applies the
    envelope to W[k+1] + tau * H(t_k, .). jobs parallelizes the per-node
    Hamiltonian LPs inside each layer; layers stay sequential, and results
    are identical for every jobs value.
    """
    grid = build_grid(spec.n_types, spec.grid_resolution)
    n = spec.time_steps
    tau = spec.horizon / n
    times = np.linspace(0.0, spec.horizon, n + 1)
    m = grid.n_nodes
    values = np.zeros((n + 1, m), dtype=np.float64)
    supports = [None] * (n + 1)
    exposed = np.zeros((n + 1, m), dtype=bool)
    supports[n] = tuple(((j, 1.0),) for j in range(m))
    exposed[n] = True
    for k in range(n - 1, -1, -1):
        h = hamiltonian_profile(spec, float(times[k]), grid.nodes, jobs=jobs)
        phi = values[k + 1] + tau * h
        res = convex_envelope(grid, phi, method=envelope_method)
        values[k] = res.values
        supports[k] = res.supports
        exposed[k] = res.exposed
    times.setflags(write=False)
    values.setflags(write=False)
    exposed.setflags(write=False)
    return ValueField(spec, times, grid, values, tuple(supports), exposed)


# --- verifiers -----------------------------------------------------------


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one verifier: worst residual, where, and against what."""

    name: str
    passed: bool
    max_violation: float
    tolerance: float
    location: tuple | None
    details: dict


def _layer_hamiltonians(vf: ValueField, jobs: int):
    for k in range(vf.n_steps):
        yield k, hamiltonian_profile(vf.spec, float(vf.times[k]),
                                     vf.grid.nodes, jobs=jobs)


def verify_subsolution(vf: ValueField, tol: float = 1e-8,
                       jobs: int = 1) -> CheckReport:
    """Forward-difference subsolution residual at every node and layer.

    Checks (W[k+1] - W[k]) / tau + H(t_k, .) >= -tol. The scheme's envelope
    never exceeds its argument, so violations beyond rounding indicate a
    broken build rather than a property of the game.
    """
    tau = vf.tau
    worst = -np.inf
    where = None
    for k, h in _layer_hamiltonians(vf, jobs):
        resid = (vf.values[k + 1] - vf.values[k]) / tau + h
        j = int(np.argmin(resid))
        if -resid[j] > worst:
            worst = float(-resid[j])
            where = (k, j)
    return CheckReport("subsolution", worst <= tol, worst, tol, where,
                       {"layers": vf.n_steps})


def verify_dual_supersolution(vf: ValueField, tol: float = 1e-8,
                              vertex_tol: float = 1e-9,
                              jobs: int = 1) -> CheckReport:
    """Supersolution residual at exposed nodes, plus vertex equalities.

    At exposed (singleton-support) nodes the scheme gives
    W[k] = W[k+1] + tau * H(t_k, .) up to rounding, so
    (W[k+1] - W[k]) / tau + H <= tol must hold there; pure beliefs are
    always exposed and must satisfy the equality to vertex_tol in value
    units.
    """
    tau = vf.tau
    grid = vf.grid
    vertex_ids = [grid.vertex_index(i) for i in range(grid.dimension)]
    worst = -np.inf
    where = None
    worst_vertex = 0.0
    vertex_where = None
    n_exposed = 0
    for k, h in _layer_hamiltonians(vf, jobs):
        resid = (vf.values[k + 1] - vf.values[k]) / tau + h
        mask = vf.exposed[k]
        n_exposed += int(np.count_nonzero(mask))
        if np.any(mask):
            masked = np.where(mask, resid, -np.inf)
            j = int(np.argmax(masked))
            if masked[j] > worst:
                worst = float(masked[j])
                where = (k, j)
        for j in vertex_ids:
            gap = abs(vf.values[k][j] - (vf.values[k + 1][j] + tau * h[j]))
            if gap > worst_vertex:
                worst_vertex = float(gap)
                vertex_where = (k, j)
    passed = worst <= tol and worst_vertex <= vertex_tol
    return CheckReport("dual-supersolution", passed, worst, tol, where,
                       {"vertex_residual": worst_vertex,
                        "vertex_tolerance": vertex_tol,
                        "vertex_location": vertex_where,
                        "exposed_nodes": n_exposed})


@dataclass(frozen=True)
class RegularityReport:
    """Convexity and Lipschitz diagnostics of a solved field.

    sup_bound/lip_x/lip_t are the sampled payoff estimates (the sup is also
    maximized over the exact payoff tables at the layer times, which is what
    actually bounds H). belief_excess is max over sampled node pairs of
    |dW| - (lip_x * d1 + 2 * sup * T / r); nonpositive means the bound held.
    """

    convexity_gap: float
    convexity_tol: float
    time_increment_max: float
    time_increment_bound: float
    belief_excess: float
    pairs_checked: int
    sup_bound: float
    lip_x: float
    lip_t: float
    passed: bool


def regularity_report(vf: ValueField, pairs: int = 200, seed: int = 1729,
                      jobs: int = 1) -> RegularityReport:
    """Check convexity per layer, time-Lipschitz, and belief-Lipschitz bounds.

    The node pairs for the belief-Lipschitz sample are drawn from a fixed
    Philox stream, so the report is deterministic for a given seed.
    """
    spec = vf.spec
    grid = vf.grid
    n = vf.n_steps
    est = payoff_bounds(spec)
    sup = est.sup_bound
    for k in range(n):
        sup = max(sup, float(np.max(np.abs(payoff_tensor(spec, float(vf.times[k]))))))

    convexity_gap = 0.0
    for k in range(n + 1):
        env = convex_envelope(grid, vf.values[k]).values
        convexity_gap = max(convexity_gap,
                            float(np.max(np.abs(vf.values[k] - env))))

    tau = vf.tau
    increments = np.abs(np.diff(vf.values, axis=0))
    time_increment_max = float(np.max(increments)) if n > 0 else 0.0
    time_increment_bound = sup * tau + 1e-9

    rng = np.random.Generator(np.random.Philox(seed))
    measure_cache: dict = {}

    def measure_at(j: int):
        if j not in measure_cache:
            measure_cache[j] = belief_measure(spec, grid.nodes[j])
        return measure_cache[j]

    slack = 2.0 * sup * spec.horizon / grid.resolution
    belief_excess = -np.inf
    checked = 0
    for _ in range(pairs):
        k = int(rng.integers(0, n + 1))
        i, j = (int(v) for v in rng.integers(0, grid.n_nodes, size=2))
        if i == j:
            continue
        d1 = wasserstein1(measure_at(i), measure_at(j))
        lhs = abs(vf.values[k][i] - vf.values[k][j])
        belief_excess = max(belief_excess, lhs - (est.lip_x * d1 + slack))
        checked += 1
    if checked == 0:
        belief_excess = 0.0
    passed = (convexity_gap <= 1e-9 and
              time_increment_max <= time_increment_bound and
              belief_excess <= 1e-12)
    return RegularityReport(convexity_gap, 1e-9, time_increment_max,
                            time_increment_bound, float(belief_excess),
                            checked, sup, est.lip_x, est.lip_t, passed)
