"""Numerical inner loops, with optional numba compilation.

The per-element hot loops live here: the monotone-chain lower hull that powers
the two-type convex envelope, and the Monte Carlo tree walk behind play
simulation. Each kernel is written once as a plain Python function over numpy
arrays; when numba is importable (and not disabled through the SPLITGAME_NUMBA
environment variable) the same source object is compiled with @njit. Both paths
therefore execute the identical sequence of IEEE floating-point operations and
produce bitwise-equal results. Kernels restrict themselves to +, -, *, /,
comparisons and integer indexing on precomputed float64/int64 arrays; anything
touching libm-style special functions is evaluated outside (in numpy), which is
what makes the bitwise guarantee hold.

Set SPLITGAME_NUMBA=0 to force the uncompiled path.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - this environment ships numba
    numba = None
    _HAVE_NUMBA = False


def _env_wants_numba() -> bool:
    raw = os.environ.get("SPLITGAME_NUMBA", "").strip().lower()
    return raw not in ("0", "false", "off", "no")


NUMBA_ENABLED = _HAVE_NUMBA and _env_wants_numba()


def backend_name() -> str:
    """Name of the active kernel backend: "numba" or "python"."""
    return "numba" if NUMBA_ENABLED else "python"


# --- kernel sources ----------------------------------------------------


def _lower_hull_indices_impl(x, f):
    """Vertex indices of the lower convex hull of the points (x[i], f[i]).

    x must be strictly increasing. Collinear middle points are dropped, so
    consecutive hull segments have strictly increasing slope.
    """
    n = x.shape[0]
    hull = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        while m >= 2:
            a = hull[m - 2]
            b = hull[m - 1]
            cross = (x[b] - x[a]) * (f[i] - f[a]) - (f[b] - f[a]) * (x[i] - x[a])
            if cross <= 0.0:
                m -= 1
            else:
                break
        hull[m] = i
        m += 1
    return hull[:m].copy()


def _interpolate_on_hull_impl(x, f, hull):
    """Envelope values and two-point supports along a lower hull polyline.

    For every i: env[i] is the hull height at x[i], and
    env[i] = lam[i]*f[left[i]] + (1-lam[i])*f[right[i]], with
    left[i] == right[i] exactly when x[i] is a hull vertex.
    """
    n = x.shape[0]
    env = np.empty(n, dtype=np.float64)
    left = np.empty(n, dtype=np.int64)
    right = np.empty(n, dtype=np.int64)
    lam = np.empty(n, dtype=np.float64)
    seg = 0
    nseg = hull.shape[0]
    for i in range(n):
        while seg + 1 < nseg and x[hull[seg + 1]] <= x[i]:
            seg += 1
        a = hull[seg]
        if x[a] == x[i]:
            env[i] = f[a]
            left[i] = a
            right[i] = a
            lam[i] = 1.0
        else:
            b = hull[seg + 1]
            w = (x[i] - x[a]) / (x[b] - x[a])
            env[i] = (1.0 - w) * f[a] + w * f[b]
            left[i] = a
            right[i] = b
            lam[i] = 1.0 - w
    return env, left, right, lam


def _simulate_walk_impl(uni, prior_cdf, init_cdf, init_child, node_ucdf,
                        node_opp, edge_ptr, edge_child, edge_cdf, payoff_tab,
                        tau, payoffs):
    """Walk the belief tree once per sample row, accumulating running payoff.

    uni: (samples, 2 + 3*n_steps) uniforms; row s is sample s's private stream
      (column layout: type draw, initial-split draw, then per step an action
      draw, an opponent draw, and a transition draw - always consumed, so the
      stream layout does not depend on the opponent mode).
    prior_cdf: (I,) cdf of the type draw.
    init_cdf: (I, E0) per-type cdf over the root's initial edges.
    init_child: (E0,) global node index of each initial edge target.
    node_ucdf: (total_nodes, nu) per-node cdf of the informed player's action.
    node_opp: (total_nodes,) opponent action index, or -1 for uniform play.
    edge_ptr: (total_nodes + 1,) csr offsets into edge_child / edge_cdf.
    edge_child: (E,) global child node index per edge.
    edge_cdf: (E, I) per-type cdf along each node's edge slice.
    payoff_tab: (n_steps, I, nu, nv) running-payoff table at the layer times.
    tau: time step. payoffs: (samples,) output buffer.
    """
    samples = uni.shape[0]
    n_steps = payoff_tab.shape[0]
    n_i = prior_cdf.shape[0]
    n_u = node_ucdf.shape[1]
    n_v = payoff_tab.shape[3]
    n_e0 = init_child.shape[0]
    for s in range(samples):
        w = uni[s, 0]
        i = 0
        while i + 1 < n_i and w >= prior_cdf[i]:
            i += 1
        w = uni[s, 1]
        e = 0
        while e + 1 < n_e0 and w >= init_cdf[i, e]:
            e += 1
        node = init_child[e]
        col = 2
        total = 0.0
        for k in range(n_steps):
            w = uni[s, col]
            col += 1
            a = 0
            while a + 1 < n_u and w >= node_ucdf[node, a]:
                a += 1
            w = uni[s, col]
            col += 1
            b = node_opp[node]
            if b < 0:
                b = int(w * n_v)
                if b >= n_v:
                    b = n_v - 1
            total = total + tau * payoff_tab[k, i, a, b]
            w = uni[s, col]
            col += 1
            e = edge_ptr[node]
            hi = edge_ptr[node + 1]
            while e + 1 < hi and w >= edge_cdf[e, i]:
                e += 1
            node = edge_child[e]
        payoffs[s] = total


# --- backend selection -------------------------------------------------

if NUMBA_ENABLED:
    _jit = numba.njit(cache=True, nogil=True)
    lower_hull_indices = _jit(_lower_hull_indices_impl)
    interpolate_on_hull = _jit(_interpolate_on_hull_impl)
    simulate_walk = _jit(_simulate_walk_impl)
else:
    lower_hull_indices = _lower_hull_indices_impl
    interpolate_on_hull = _interpolate_on_hull_impl
    simulate_walk = _simulate_walk_impl


def python_kernels() -> dict:
    """The uncompiled kernel functions, keyed by name (for benchmarks/tests)."""
    return {
        "lower_hull_indices": _lower_hull_indices_impl,
        "interpolate_on_hull": _interpolate_on_hull_impl,
        "simulate_walk": _simulate_walk_impl,
    }


def compiled_kernels() -> dict | None:
    """Numba-compiled kernels regardless of SPLITGAME_NUMBA, or None.

    Lets benchmarks and equivalence tests compare both paths inside a single
    process. Returns None when numba is not importable.
    """
    if not _HAVE_NUMBA:
        return None
    jit = numba.njit(cache=True, nogil=True)
    return {
        "lower_hull_indices": jit(_lower_hull_indices_impl),
        "interpolate_on_hull": jit(_interpolate_on_hull_impl),
        "simulate_walk": jit(_simulate_walk_impl),
    }
