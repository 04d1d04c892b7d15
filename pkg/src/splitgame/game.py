"""Game model: type set, prior, finite controls, and the one-shot value.

The informed player (row, minimizer) knows the realized type x_i; the
uninformed player (column, maximizer) knows only the public belief p. The
one-shot value at (t, p) is the mixed value of the |U| x |V| matrix game with
entries sum_i p_i l(x_i, t, u_a, v_b), computed by linear programming. Finite
control sets violate the inf-sup = sup-inf identity in pure actions, so all
values are taken in the mixed extension, where the minimax theorem restores it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .measures import DiscreteMeasure
from .payoff import LipschitzEstimate, PayoffExpr, lipschitz_bound, evaluate_broadcast

__all__ = [
    "Belief",
    "MixedAction",
    "GameSpec",
    "HamiltonianResult",
    "GameValueError",
    "payoff_tensor",
    "payoff_matrix",
    "solve_matrix_game",
    "matrix_game_value",
    "matrix_isaacs_gap",
    "hamiltonian",
    "hamiltonian_profile",
    "isaacs_gap",
    "best_response_v",
    "belief_measure",
    "payoff_bounds",
]

_SIMPLEX_SUM_TOL = 1e-12

_LP_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


class GameValueError(RuntimeError):
    """Matrix-game LP failed (cannot occur for finite bounded matrices)."""


def _validated_simplex(weights, what: str) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size == 0:
        raise ValueError(f"{what} must have at least one component")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{what} must be finite")
    if np.any(w < 0.0):
        raise ValueError(f"{what} components must be nonnegative")
    total = float(np.sum(w))
    if abs(total - 1.0) > _SIMPLEX_SUM_TOL:
        raise ValueError(f"{what} sums to {total!r}, not 1")
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class Belief:
    """A point of the simplex: weights over the I type points."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights",
                           _validated_simplex(self.weights, "belief"))

    @property
    def dimension(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class MixedAction:
    """A probability vector over a finite control set."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "probabilities",
                           _validated_simplex(self.probabilities, "mixed action"))

    @classmethod
    def pure(cls, index: int, size: int) -> "MixedAction":
        probs = np.zeros(size)
        probs[index] = 1.0
        return cls(probs)

    @property
    def size(self) -> int:
        return self.probabilities.shape[0]


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Immutable description of one game instance.

    type_points: (I, N) pairwise distinct type locations.
    prior: initial public belief over the types.
    controls_u / controls_v: (nu, du) / (nv, dv) pure action points.
    payoff: running cost l(x, t, u, v).
    horizon: terminal time T > 0 (play starts at 0).
    time_steps: number of uniform backward steps n.
    grid_resolution: simplex grid denominator r.
    """

    type_points: np.ndarray
    prior: Belief
    controls_u: np.ndarray
    controls_v: np.ndarray
    payoff: PayoffExpr
    horizon: float
    time_steps: int
    grid_resolution: int

    def __post_init__(self) -> None:
        pts = np.asarray(self.type_points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("type_points must be a nonempty (I, N) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("type_points must be finite")
        for i in range(pts.shape[0]):
            for j in range(i + 1, pts.shape[0]):
                if np.array_equal(pts[i], pts[j]):
                    raise ValueError(f"type points {i} and {j} coincide")
        cu = np.atleast_2d(np.asarray(self.controls_u, dtype=np.float64))
        cv = np.atleast_2d(np.asarray(self.controls_v, dtype=np.float64))
        if cu.shape[0] < 1 or cv.shape[0] < 1:
            raise ValueError("both control sets must be nonempty")
        if not isinstance(self.prior, Belief):
            object.__setattr__(self, "prior", Belief(self.prior))
        if self.prior.dimension != pts.shape[0]:
            raise ValueError("prior dimension does not match the type count")
        if not (float(self.horizon) > 0.0):
            raise ValueError("horizon must be positive")
        if int(self.time_steps) < 1:
            raise ValueError("time_steps must be a positive integer")
        if int(self.grid_resolution) < 1:
            raise ValueError("grid_resolution must be a positive integer")
        self.payoff.check_dimensions(pts.shape[1], cu.shape[1], cv.shape[1])
        pts.setflags(write=False)
        cu.setflags(write=False)
        cv.setflags(write=False)
        object.__setattr__(self, "type_points", pts)
        object.__setattr__(self, "controls_u", cu)
        object.__setattr__(self, "controls_v", cv)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "time_steps", int(self.time_steps))
        object.__setattr__(self, "grid_resolution", int(self.grid_resolution))

    @property
    def n_types(self) -> int:
        return self.type_points.shape[0]

    @property
    def n_u(self) -> int:
        return self.controls_u.shape[0]

    @property
    def n_v(self) -> int:
        return self.controls_v.shape[0]


@dataclass(frozen=True)
class HamiltonianResult:
    """One-shot mixed value with the two optimal mixed actions."""

    value: float
    u_star: MixedAction
    v_star: MixedAction


# --- payoff tables -----------------------------------------------------

def payoff_tensor(spec: GameSpec, t: float) -> np.ndarray:
    """The (I, nu, nv) table l(x_i, t, u_a, v_b) at one time.

    Evaluated in a single broadcast pass; the table is the raw material for
    payoff matrices, Hamiltonians, and simulation.
    """
    pts, cu, cv = spec.type_points, spec.controls_u, spec.controls_v
    xs = [pts[:, d][:, None, None] for d in range(pts.shape[1])]
    us = [cu[:, d][None, :, None] for d in range(cu.shape[1])]
    vs = [cv[:, d][None, None, :] for d in range(cv.shape[1])]
    vals = evaluate_broadcast(spec.payoff, xs, float(t), us, vs)
    return np.broadcast_to(vals, (spec.n_types, spec.n_u, spec.n_v)).astype(
        np.float64, copy=True)


def _matrix_at(tensor: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Belief-weighted payoff matrix, accumulated in fixed index order."""
    out = np.zeros(tensor.shape[1:], dtype=np.float64)
    for i in range(tensor.shape[0]):
        out += p[i] * tensor[i]
    return out


def payoff_matrix(spec: GameSpec, t: float, p: Belief) -> np.ndarray:
    """The |U| x |V| matrix A(u, v) = sum_i p_i l(x_i, t, u, v)."""
    p = p if isinstance(p, Belief) else Belief(p)
    if p.dimension != spec.n_types:
        raise ValueError("belief dimension does not match the type count")
    return _matrix_at(payoff_tensor(spec, t), p.weights)


# --- matrix games ------------------------------------------------------

def _row_lp(a: np.ndarray) -> tuple[float, np.ndarray]:
    """Min over mixed rows of the max over columns; returns (value, row mix)."""
    nu, nv = a.shape
    c = np.zeros(nu + 1)
    c[nu] = 1.0
    a_ub = np.hstack([a.T, -np.ones((nv, 1))])
    a_eq = np.zeros((1, nu + 1))
    a_eq[0, :nu] = 1.0
    bounds = [(0.0, None)] * nu + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(nv), A_eq=a_eq, b_eq=np.ones(1),
                  bounds=bounds, method="highs", options=_LP_OPTIONS)
    if not res.success:
        raise GameValueError(f"row LP failed: {res.message}")
    mix = np.clip(res.x[:nu], 0.0, None)
    mix = mix / np.sum(mix)
    return float(res.fun), mix


def _col_lp(a: np.ndarray) -> tuple[float, np.ndarray]:
    """Max over mixed columns of the min over rows; returns (value, col mix)."""
    nu, nv = a.shape
    c = np.zeros(nv + 1)
    c[nv] = -1.0
    a_ub = np.hstack([-a, np.ones((nu, 1))])
    a_eq = np.zeros((1, nv + 1))
    a_eq[0, :nv] = 1.0
    bounds = [(0.0, None)] * nv + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(nu), A_eq=a_eq, b_eq=np.ones(1),
                  bounds=bounds, method="highs", options=_LP_OPTIONS)
    if not res.success:
        raise GameValueError(f"column LP failed: {res.message}")
    mix = np.clip(res.x[:nv], 0.0, None)
    mix = mix / np.sum(mix)
    return -float(res.fun), mix


def solve_matrix_game(a) -> tuple[float, np.ndarray, np.ndarray]:
    """Mixed value and optimal mixed actions of a matrix game.

    The row player minimizes. Returns (value, row_mix, col_mix) where value is
    the row LP optimum (min-max); by the minimax theorem it coincides with the
    column LP optimum up to solver tolerance.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    value, row_mix = _row_lp(a)
    _, col_mix = _col_lp(a)
    return value, row_mix, col_mix


def matrix_game_value(a) -> float:
    """Mixed value of a matrix game (row player minimizes)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    return _row_lp(a)[0]


def matrix_isaacs_gap(a, mode: str = "mixed") -> float:
    """Gap between minimax and maximin for one matrix.

    In "pure" mode this is min_u max_v - max_v min_u over pure actions, which
    may be positive. In "mixed" mode the two LP values agree up to solver
    noise, and the absolute difference is returned as the diagnostic.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if mode == "pure":
        return float(np.min(np.max(a, axis=1)) - np.max(np.min(a, axis=0)))
    if mode == "mixed":
        row_value, _ = _row_lp(a)
        col_value, _ = _col_lp(a)
        return abs(row_value - col_value)
    raise ValueError(f"unknown isaacs mode {mode!r}")


# --- one-shot game operations ------------------------------------------

def hamiltonian(spec: GameSpec, t: float, p: Belief) -> HamiltonianResult:
    """One-shot mixed value at (t, p) with both optimal mixed actions.

    u_star attains the min over mixed row actions of the max over columns;
    v_star attains the max over mixed column actions of the min over rows.
    """
    a = payoff_matrix(spec, t, p)
    value, row_mix = _row_lp(a)
    _, col_mix = _col_lp(a)
    return HamiltonianResult(value, MixedAction(row_mix), MixedAction(col_mix))


def hamiltonian_profile(spec: GameSpec, t: float, beliefs: np.ndarray,
                        jobs: int = 1, with_actions: bool = False):
    """One-shot values over many beliefs at one time.

    Args:
        spec: the game.
        t: the layer time (the payoff table is evaluated once).
        beliefs: (n, I) array of beliefs.
        jobs: worker threads; results are written into index slots, so any
            jobs value produces identical bytes.
        with_actions: when True also return the (n, nu) row-mix array.

    Returns:
        values (n,), or (values, row_mixes) when with_actions is set.
    """
    beliefs = np.atleast_2d(np.asarray(beliefs, dtype=np.float64))
    tensor = payoff_tensor(spec, t)
    n = beliefs.shape[0]
    values = np.empty(n, dtype=np.float64)
    mixes = np.empty((n, spec.n_u), dtype=np.float64) if with_actions else None

    def work(j: int) -> None:
        value, mix = _row_lp(_matrix_at(tensor, beliefs[j]))
        values[j] = value
        if mixes is not None:
            mixes[j] = mix

    if jobs > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, range(n)))
    else:
        for j in range(n):
            work(j)
    if with_actions:
        return values, mixes
    return values


def isaacs_gap(spec: GameSpec, t: float, p: Belief, mode: str = "mixed") -> float:
    """Minimax-vs-maximin gap of the one-shot game at (t, p)."""
    return matrix_isaacs_gap(payoff_matrix(spec, t, p), mode)


def best_response_v(spec: GameSpec, t: float, u: MixedAction, p: Belief) -> MixedAction:
    """Best pure column reply to a mixed row action under belief p.

    Ties break to the lowest column index, so the reply is deterministic.
    """
    a = payoff_matrix(spec, t, p)
    if u.size != spec.n_u:
        raise ValueError("mixed action size does not match |U|")
    col_payoffs = np.zeros(spec.n_v)
    for idx in range(spec.n_u):
        col_payoffs += u.probabilities[idx] * a[idx]
    return MixedAction.pure(int(np.argmax(col_payoffs)), spec.n_v)


# --- bridges to measures / payoff bounds -------------------------------

def belief_measure(spec: GameSpec, p: Belief) -> DiscreteMeasure:
    """The measure on type points induced by a belief (zero atoms dropped)."""
    p = p if isinstance(p, Belief) else Belief(p)
    return DiscreteMeasure(spec.type_points, p.weights)


def payoff_bounds(spec: GameSpec) -> LipschitzEstimate:
    """Sampled sup/Lipschitz estimates of l over the spec's own domain.

    The x box is the bounding box of the type points; t ranges over [0, T];
    controls are the spec's finite sets.
    """
    pts = spec.type_points
    x_bounds = np.column_stack([pts.min(axis=0), pts.max(axis=0)])
    return lipschitz_bound(spec.payoff, x_bounds, (0.0, spec.horizon),
                           spec.controls_u, spec.controls_v)
