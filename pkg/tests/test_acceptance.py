"""End-to-end acceptance checks, one per contract, at the contract tolerances.

Each test prints a single ``[acceptance NN] PASS`` line once its assertions
have gone through, so a ``pytest -v`` run doubles as the acceptance report.
"""

from __future__ import annotations

import os

import numpy as np
import pytest

from conftest import make_random_two_type, make_spec
from splitgame import (
    brute_force_value,
    convex_envelope,
    extract_optimal_martingale,
    hamiltonian_profile,
    martingale_cost,
    matrix_isaacs_gap,
    one_step_dpp,
    payoff_bounds,
    payoff_tensor,
    regularity_report,
    simulate_play,
    solve_backward,
    synthesize_strategy,
    verify_dual_supersolution,
    verify_subsolution,
)
from splitgame.cli import main

HALF = np.array([0.5, 0.5])


def _ok(num: int, text: str) -> None:
    print(f"[acceptance {num:02d}] PASS — {text}")


def test_terminal_layer_is_exactly_zero(timedep_field):
    assert np.all(timedep_field.values[-1] == 0.0)
    vf = solve_backward(make_random_two_type(7))
    assert np.all(vf.values[-1] == 0.0)
    _ok(1, "terminal layer is identically zero")


def test_every_layer_is_its_own_convex_envelope():
    spec = make_spec("t*u1*v1 + (1 - t)*abs(x1 - u1)",
                     time_steps=10, grid_resolution=20)
    vf = solve_backward(spec)
    worst = 0.0
    for k in range(vf.n_steps + 1):
        env = convex_envelope(vf.grid, vf.values[k]).values
        worst = max(worst, float(np.max(np.abs(vf.values[k] - env))))
    assert worst <= 1e-9
    _ok(2, f"every layer equals its own convex envelope (gap {worst:.2e})")


def test_backward_scheme_matches_direct_martingale_optimum(timedep_spec,
                                                           timedep_field):
    cases = [(timedep_spec, timedep_field)]
    for seed in (101, 102, 103, 104):
        spec = make_random_two_type(seed)
        cases.append((spec, solve_backward(spec)))
    worst = 0.0
    for spec, vf in cases:
        j = vf.grid.index_of_belief(HALF)
        direct = brute_force_value(spec, HALF, split_budget=2)
        worst = max(worst, abs(float(vf.values[0][j]) - direct))
    assert worst <= 1e-6
    _ok(3, f"scheme agrees with direct optimization on {len(cases)} games "
           f"(gap {worst:.2e})")


def test_extracted_martingale_attains_the_value_at_every_node(timedep_spec,
                                                              timedep_field):
    grid = timedep_field.grid
    worst = 0.0
    for j in range(grid.n_nodes):
        m = extract_optimal_martingale(timedep_field, grid.nodes[j])
        cost = martingale_cost(timedep_spec, m)
        worst = max(worst, abs(cost - float(timedep_field.values[0][j])))
    assert worst <= 1e-7
    _ok(4, f"extracted martingale attains the value at all {grid.n_nodes} "
           f"grid beliefs (gap {worst:.2e})")


def test_one_step_dynamic_programming_residual(timedep_field):
    report = one_step_dpp(timedep_field)
    assert report.passed
    assert report.max_violation <= 1e-9
    _ok(5, f"one-step dynamic programming holds "
           f"(residual {report.max_violation:.2e})")


def test_scheme_is_numerical_sub_and_supersolution(timedep_field):
    fields = [timedep_field, solve_backward(make_random_two_type(202))]
    for vf in fields:
        sub = verify_subsolution(vf, tol=1e-8)
        dual = verify_dual_supersolution(vf, tol=1e-8, vertex_tol=1e-9)
        assert sub.passed and sub.max_violation <= 1e-8
        assert dual.passed and dual.max_violation <= 1e-8
        assert dual.details["vertex_residual"] <= 1e-9
    _ok(6, "subsolution and exposed-node supersolution residuals in bounds")


def test_mixed_matrix_games_have_no_duality_gap():
    rng = np.random.Generator(np.random.Philox(4242))
    worst = 0.0
    for _ in range(100):
        rows, cols = (int(v) for v in rng.integers(1, 7, size=2))
        a = rng.normal(0.0, 2.0, (rows, cols))
        worst = max(worst, abs(matrix_isaacs_gap(a, mode="mixed")))
    assert worst <= 1e-9
    _ok(7, f"100 random mixed matrix games close their duality gap "
           f"(worst {worst:.2e})")


def test_value_field_regularity_bounds(timedep_field):
    rep = regularity_report(timedep_field)
    assert rep.passed
    assert rep.time_increment_max <= rep.time_increment_bound
    assert rep.belief_excess <= 1e-12
    rep2 = regularity_report(solve_backward(make_random_two_type(303)))
    assert rep2.passed
    _ok(8, "time and belief Lipschitz bounds hold on sampled node pairs")


def test_closed_form_instances(revealing_field, constant_spec):
    # Fully revealing: matching the known type is free, so the field vanishes
    # and the optimal split jumps to the vertices immediately.
    worst = float(np.max(np.abs(revealing_field.values)))
    assert worst <= 1e-9
    m = extract_optimal_martingale(revealing_field, HALF)
    beliefs = np.asarray(m.layer_beliefs[0])
    order = np.argsort(beliefs[:, 0])
    assert np.allclose(beliefs[order], [[0.0, 1.0], [1.0, 0.0]], atol=1e-12)
    probs = sorted(weight for _, weight in m.init_edges)
    assert probs == pytest.approx([0.5, 0.5], abs=1e-12)

    # Constant payoff: remaining horizon times the constant, to rounding.
    vf = solve_backward(constant_spec)
    for k in range(vf.n_steps + 1):
        expect = 0.75 * (constant_spec.horizon - float(vf.times[k]))
        assert np.max(np.abs(vf.values[k] - expect)) <= 1e-12

    # Time-independent payoff: the field is the remaining horizon times the
    # convexified instantaneous game value.
    spec = make_spec("abs(x1 - u1) + 0.5*u1*v1",
                     time_steps=5, grid_resolution=8)
    vf = solve_backward(spec)
    h = hamiltonian_profile(spec, 0.0, vf.grid.nodes)
    env = convex_envelope(vf.grid, h).values
    gap = 0.0
    for k in range(vf.n_steps + 1):
        expect = (spec.horizon - float(vf.times[k])) * env
        gap = max(gap, float(np.max(np.abs(vf.values[k] - expect))))
    assert gap <= 1e-8
    _ok(9, "revealing, constant, and time-independent games match their "
           "closed forms")


def test_monte_carlo_play_matches_computed_value(timedep_spec, timedep_field):
    j = timedep_field.grid.index_of_belief(HALF)
    value = float(timedep_field.values[0][j])
    m = extract_optimal_martingale(timedep_field, HALF)
    strategy = synthesize_strategy(timedep_field, m)
    result = simulate_play(timedep_spec, strategy, opponent="best_response",
                           seed=424242, samples=100_000)
    sup = payoff_bounds(timedep_spec).sup_bound
    for k in range(timedep_spec.time_steps):
        t = float(timedep_field.times[k])
        sup = max(sup, float(np.max(np.abs(payoff_tensor(timedep_spec, t)))))
    tau = timedep_spec.horizon / timedep_spec.time_steps
    threshold = max(3.0 * result.stderr, 5.0 * sup * tau)
    assert abs(result.mean - value) <= threshold
    _ok(10, f"simulated mean {result.mean:.6f} within {threshold:.3g} of "
            f"computed value {value:.6f}")


def test_payoff_shift_and_order_are_preserved(timedep_spec, timedep_field):
    shifted = make_spec("t*u1*v1 + (1 - t)*abs(x1 - u1) + 0.25",
                        time_steps=6, grid_resolution=10)
    vf2 = solve_backward(shifted)
    worst = 0.0
    for k in range(vf2.n_steps + 1):
        expect = 0.25 * (timedep_spec.horizon - float(vf2.times[k]))
        diff = vf2.values[k] - timedep_field.values[k] - expect
        worst = max(worst, float(np.max(np.abs(diff))))
    assert worst <= 1e-9

    larger = make_spec("t*u1*v1 + (1 - t)*abs(x1 - u1) + 0.1*(1 + u1*v1)",
                       time_steps=6, grid_resolution=10)
    vf3 = solve_backward(larger)
    min_gain = float(np.min(vf3.values - timedep_field.values))
    assert min_gain >= -1e-8
    _ok(11, "constant shifts translate the field and pointwise-larger "
            "payoffs never lower it")


def test_check_artifacts_are_byte_identical(tmp_path):
    config = tmp_path / "game.yaml"
    config.write_text(
        "types: [[0.0], [1.0]]\n"
        "prior: [0.5, 0.5]\n"
        "controls_u: [[-1.0], [1.0]]\n"
        "controls_v: [[-1.0], [1.0]]\n"
        'payoff: "t*u1*v1 + (1 - t)*abs(x1 - u1)"\n'
        "horizon: 1.0\n"
        "time_steps: 6\n"
        "grid_resolution: 10\n")
    blobs = []
    for out, jobs in (("a", "1"), ("b", "1"), ("c", "3")):
        out_dir = str(tmp_path / out)
        assert main(["check", "--spec", str(config), "--out", out_dir,
                     "--jobs", jobs]) == 0
        with open(os.path.join(out_dir, "check.json"), "rb") as fh:
            blobs.append(fh.read())
    assert blobs[0] == blobs[1] == blobs[2]
    _ok(12, "verification artifacts are byte-identical across runs and "
            "worker counts")
