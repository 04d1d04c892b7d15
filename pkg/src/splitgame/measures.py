"""Finitely supported probability measures and exact Wasserstein-1 transport.

Measures are finite lists of weighted atoms in R^N. The Wasserstein-1
(Monge-Kantorovich) distance between two of them is computed exactly as a
transport linear program with Euclidean ground cost; couplings come back as
explicit plans. Desk-scale atom counts keep the exact LP cheap, so there is no
entropic or sliced approximation anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "DiscreteMeasure",
    "Coupling",
    "TransportError",
    "wasserstein1",
    "optimal_coupling",
    "second_moment",
]

_WEIGHT_SUM_TOL = 1e-12
_MARGINAL_TOL = 1e-9
# Plan entries at or below this are structural zeros. Must sit above the LP
# feasibility tolerance (1e-10), or solver residue gets pinned as real mass.
_PIN_TOL = 1e-9

_LP_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


class TransportError(RuntimeError):
    """Transport LP did not return an optimal solution (internal error)."""


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """A finitely supported probability measure on R^N.

    points: (n, N) array of pairwise distinct atom locations.
    weights: (n,) array of positive weights summing to 1.

    Construction canonicalizes the input: a 1-D point list is treated as n
    one-dimensional atoms, exact-duplicate points are merged (weights added),
    zero-weight atoms are dropped, atoms are sorted lexicographically by
    coordinates, and weights are renormalized to sum exactly to the float sum 1.
    The sorted order gives couplings a well-defined row/column indexing.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must be an (n, N) array or a flat list")
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights disagree on the atom count")
        if pts.shape[0] == 0:
            raise ValueError("a measure needs at least one atom")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise ValueError("points and weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        total = float(np.sum(w))
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")

        order = np.lexsort(pts.T[::-1])
        pts = pts[order]
        w = w[order]
        merged_pts: list[np.ndarray] = []
        merged_w: list[float] = []
        for j in range(pts.shape[0]):
            if merged_pts and np.array_equal(pts[j], merged_pts[-1]):
                merged_w[-1] += float(w[j])
            else:
                merged_pts.append(pts[j])
                merged_w.append(float(w[j]))
        pts = np.array(merged_pts, dtype=np.float64)
        w = np.array(merged_w, dtype=np.float64)
        keep = w > 0.0
        pts = pts[keep]
        w = w[keep]
        w = w / np.sum(w)
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class Coupling:
    """A transport plan between two discrete measures.

    plan[i, j] is the mass moved from row atom i to column atom j. Marginals
    must match the two measures within 1e-9.
    """

    row_measure: DiscreteMeasure
    col_measure: DiscreteMeasure
    plan: np.ndarray

    def __post_init__(self) -> None:
        plan = np.asarray(self.plan, dtype=np.float64)
        n = self.row_measure.n_atoms
        m = self.col_measure.n_atoms
        if plan.shape != (n, m):
            raise ValueError(f"plan shape {plan.shape} does not match ({n}, {m})")
        if np.any(plan < -1e-12):
            raise ValueError("plan entries must be nonnegative")
        plan = np.clip(plan, 0.0, None)
        row_err = np.max(np.abs(plan.sum(axis=1) - self.row_measure.weights))
        col_err = np.max(np.abs(plan.sum(axis=0) - self.col_measure.weights))
        if row_err > _MARGINAL_TOL or col_err > _MARGINAL_TOL:
            raise ValueError(
                f"plan marginals off by (rows {row_err:.3e}, cols {col_err:.3e})"
            )
        plan.setflags(write=False)
        object.__setattr__(self, "plan", plan)

    def cost(self) -> float:
        """Transport cost of this plan under the Euclidean ground distance."""
        dist = _distance_matrix(self.row_measure.points, self.col_measure.points)
        return float(np.sum(self.plan * dist))


def _distance_matrix(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    diff = xs[:, None, :] - ys[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _marginal_system(n: int, m: int) -> np.ndarray:
    """Equality matrix mapping a flattened (n, m) plan to its 2 marginals."""
    a = np.zeros((n + m, n * m))
    for i in range(n):
        a[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        a[n + j, j::m] = 1.0
    return a


def _solve_transport(m: DiscreteMeasure, mp: DiscreteMeasure):
    cost = _distance_matrix(m.points, mp.points).ravel()
    a_eq = _marginal_system(m.n_atoms, mp.n_atoms)
    b_eq = np.concatenate([m.weights, mp.weights])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None),
                  method="highs", options=_LP_OPTIONS)
    if not res.success:
        raise TransportError(f"transport LP failed: {res.message}")
    return res, cost, a_eq, b_eq


def wasserstein1(m: DiscreteMeasure, mp: DiscreteMeasure) -> float:
    """Exact Wasserstein-1 distance between two discrete measures.

    Solves the transport LP with Euclidean ground cost. Both measures must
    live in the same ambient dimension.
    """
    if m.dimension != mp.dimension:
        raise ValueError("measures live in different ambient dimensions")
    res, _, _, _ = _solve_transport(m, mp)
    return float(res.fun)


def optimal_coupling(m: DiscreteMeasure, mp: DiscreteMeasure) -> Coupling:
    """An optimal coupling with deterministic tie-breaking.

    Ties are broken by the plan's zero pattern: walking the flattened
    (row-major) entries in order, every entry that can vanish on the optimal
    face is forced to exact zero, so the earliest entries are as small as
    possible. A final cost minimization restricted to that zero pattern then
    returns a basic optimal plan. Zero bounds carry no floating-point noise,
    which keeps the accumulated restrictions feasible; the cost cap used
    during the zero tests is deliberately loose (the final solve restores
    exact optimality). Entries already zero in the incumbent solution are
    excluded for free, so at most n+m-1 refinement solves run.
    """
    if m.dimension != mp.dimension:
        raise ValueError("measures live in different ambient dimensions")
    res, cost, a_eq, b_eq = _solve_transport(m, mp)
    n, k = m.n_atoms, mp.n_atoms
    nv = n * k
    best = float(res.fun)
    x = np.clip(np.asarray(res.x, dtype=np.float64), 0.0, None)

    lower = np.zeros(nv)
    upper = np.full(nv, np.inf)
    a_ub = cost[None, :]
    b_ub = np.array([best + 1e-7 * (1.0 + abs(best))])
    for j in range(nv):
        if x[j] > _PIN_TOL:
            res_j = linprog(
                np.eye(1, nv, j).ravel(), A_ub=a_ub, b_ub=b_ub,
                A_eq=a_eq, b_eq=b_eq,
                bounds=np.column_stack([lower, upper]),
                method="highs", options=_LP_OPTIONS,
            )
            if not res_j.success:
                raise TransportError(f"coupling refinement LP failed: {res_j.message}")
            x = np.clip(np.asarray(res_j.x, dtype=np.float64), 0.0, None)
        if x[j] <= _PIN_TOL:
            x[j] = 0.0
            upper[j] = 0.0
    final = linprog(cost, A_eq=a_eq, b_eq=b_eq,
                    bounds=np.column_stack([lower, upper]),
                    method="highs", options=_LP_OPTIONS)
    if not final.success:
        raise TransportError(f"coupling restriction LP failed: {final.message}")
    x = np.clip(np.asarray(final.x, dtype=np.float64), 0.0, None)
    x[upper == 0.0] = 0.0
    return Coupling(m, mp, x.reshape(n, k))


def second_moment(m: DiscreteMeasure) -> float:
    """Second moment of a discrete measure: sum of w_i |x_i|^2."""
    return float(np.sum(m.weights * np.sum(m.points * m.points, axis=1)))
