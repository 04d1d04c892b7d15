"""Time the numba kernels against their pure-python sources.

Run as a script; it prints per-kernel timings and speedups. Both backends
come from the same source functions, so the numbers measure compilation
alone, not algorithmic differences.
"""

import time

import numpy as np

from splitgame import GameSpec, parse, solve_backward
from splitgame._kernels import compiled_kernels, python_kernels
from splitgame.martingale import (_pack_tree, extract_optimal_martingale,
                                  synthesize_strategy)


def _time(fn, repeats):
    fn()  # warm up (and compile, on the numba path)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def _reference_spec(time_steps=6, grid_resolution=10):
    return GameSpec(
        type_points=[[0.0], [1.0]],
        prior=[0.5, 0.5],
        controls_u=[[-1.0], [1.0]],
        controls_v=[[-1.0], [1.0]],
        payoff=parse("t*u1*v1 + (1 - t)*abs(x1 - u1)"),
        horizon=1.0,
        time_steps=time_steps,
        grid_resolution=grid_resolution,
    )


def bench_hull(backends, size=20_000, repeats=30):
    rng = np.random.Generator(np.random.Philox(1))
    x = np.unique(rng.uniform(0.0, 1.0, size))
    f = rng.normal(0.0, 1.0, x.size)
    rows = []
    for name, kernels in backends.items():
        hull_fn = kernels["lower_hull_indices"]
        interp_fn = kernels["interpolate_on_hull"]
        hull = hull_fn(x, f)
        rows.append((name,
                     _time(lambda: hull_fn(x, f), repeats),
                     _time(lambda: interp_fn(x, f, hull), repeats)))
    print(f"\nlower hull + interpolation, {x.size} breakpoints:")
    for name, t_hull, t_interp in rows:
        print(f"  {name:<8} hull {t_hull * 1e3:8.3f} ms   "
              f"interpolate {t_interp * 1e3:8.3f} ms")
    if len(rows) == 2:
        print(f"  speedup  hull {rows[0][1] / rows[1][1]:8.1f} x    "
              f"interpolate {rows[0][2] / rows[1][2]:8.1f} x")


def bench_walk(backends, samples=200_000, repeats=5):
    spec = _reference_spec()
    vf = solve_backward(spec)
    m = extract_optimal_martingale(vf, np.array([0.5, 0.5]))
    strategy = synthesize_strategy(vf, m)
    packed = _pack_tree(spec, strategy, "best_response", 0)
    tau = spec.horizon / spec.time_steps
    rng = np.random.Generator(np.random.Philox(2))
    uni = rng.uniform(0.0, 1.0, (samples, 2 + 3 * spec.time_steps))
    out = np.empty(samples)
    rows = []
    for name, kernels in backends.items():
        walk = kernels["simulate_walk"]
        rows.append((name,
                     _time(lambda: walk(uni, *packed, tau, out), repeats)))
    print(f"\nsimulated plays, {samples} samples x {spec.time_steps} steps:")
    for name, t in rows:
        print(f"  {name:<8} {t * 1e3:8.1f} ms   "
              f"({samples / t / 1e6:6.2f} M samples/s)")
    if len(rows) == 2:
        print(f"  speedup  {rows[0][1] / rows[1][1]:8.1f} x")


def main():
    backends = {"python": python_kernels()}
    compiled = compiled_kernels()
    if compiled is None:
        print("numba not installed; timing the python backend only")
    else:
        import numba
        print(f"numba {numba.__version__}")
        backends["numba"] = compiled
    bench_hull(backends)
    bench_walk(backends)


if __name__ == "__main__":
    main()
