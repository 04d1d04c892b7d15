"""Command-line front end: config files, commands, and bit-exact artifacts.

Config files are YAML with exactly the keys types, prior, controls_u,
controls_v, payoff, horizon, time_steps, grid_resolution. Every error path
carries the file (and where possible the line) of the offending entry.

Artifacts are deterministic by construction: reals print with 17 significant
digits (lossless for binary doubles), JSON keys are sorted, nothing embeds
timestamps or absolute paths, and all parallelism writes into preassigned
slots - so identical configs produce byte-identical files at any --jobs
setting and on either kernel backend.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from .game import (GameSpec, hamiltonian, matrix_isaacs_gap, payoff_bounds,
                   payoff_matrix, payoff_tensor)
from .martingale import (OPPONENT_MODES, BeliefMartingale, brute_force_value,
                         check_martingale, extract_optimal_martingale,
                         martingale_cost, martingale_from_dict,
                         martingale_to_dict, one_step_dpp, simulate_play,
                         synthesize_strategy)
from .payoff import ParseError, parse
from .solver import (OffGridError, ValueField, build_grid, regularity_report,
                     solve_backward, verify_dual_supersolution,
                     verify_subsolution)

__all__ = [
    "ConfigError",
    "Tolerances",
    "RunConfig",
    "load_spec",
    "export_value_csv",
    "export_martingale",
    "import_martingale",
    "run",
    "main",
]

COMMANDS = ("solve", "hamiltonian", "isaacs", "martingale", "simulate", "check")

_SPEC_KEYS = ("types", "prior", "controls_u", "controls_v", "payoff",
              "horizon", "time_steps", "grid_resolution")


class ConfigError(ValueError):
    """A problem in the config file or the command line, with location."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --- config ingestion ------------------------------------------------------


def _key_lines(text: str) -> dict:
    """Line numbers of the top-level mapping keys (1-based)."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if node is None or not isinstance(node, yaml.MappingNode):
        return {}
    return {key.value: key.start_mark.line + 1 for key, _ in node.value}


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ConfigError(f"{where} must be finite")
    return out


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


def _point_list(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where} must be a nonempty list of coordinate lists")
    rows = []
    width = None
    for idx, row in enumerate(value):
        if not isinstance(row, list) or not row:
            raise ConfigError(f"{where}[{idx}] must be a nonempty coordinate list")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ConfigError(f"{where}[{idx}] has {len(row)} coordinates, "
                              f"expected {width}")
        rows.append([_number(c, f"{where}[{idx}]") for c in row])
    return np.asarray(rows, dtype=np.float64)


def load_spec(path: str) -> GameSpec:
    """Parse a game config file into a validated GameSpec.

    The prior must sum to 1 within 1e-9; it is then renormalized exactly so
    the stricter in-memory invariant holds. All other validation is delegated
    to the domain types, with errors rewrapped to carry file/line context.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read spec file: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else path
        raise ConfigError(f"{where}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping of "
                          f"{', '.join(_SPEC_KEYS)}")
    lines = _key_lines(text)

    def where(key: str) -> str:
        line = lines.get(key)
        return f"{path}:{line}" if line is not None else path

    unknown = sorted(set(raw) - set(_SPEC_KEYS))
    if unknown:
        raise ConfigError(f"{where(unknown[0])}: unknown key(s) "
                          f"{', '.join(unknown)}; allowed keys are "
                          f"{', '.join(_SPEC_KEYS)}")
    missing = [k for k in _SPEC_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {', '.join(missing)}")

    try:
        types = _point_list(raw["types"], "types")
        controls_u = _point_list(raw["controls_u"], "controls_u")
        controls_v = _point_list(raw["controls_v"], "controls_v")
        if not isinstance(raw["prior"], list) or not raw["prior"]:
            raise ConfigError("prior must be a nonempty list of weights")
        prior = np.asarray([_number(v, f"prior[{i}]")
                            for i, v in enumerate(raw["prior"])])
        if np.any(prior < 0.0):
            raise ConfigError("prior weights must be nonnegative")
        total = float(prior.sum())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"prior sums to {total:g}")
        prior = prior / total
        horizon = _number(raw["horizon"], "horizon")
        time_steps = _integer(raw["time_steps"], "time_steps")
        grid_resolution = _integer(raw["grid_resolution"], "grid_resolution")
        if not isinstance(raw["payoff"], str):
            raise ConfigError("payoff must be an expression string")
    except ConfigError as exc:
        key = str(exc).split("[")[0].split(" ")[0]
        prefix = where(key) if key in _SPEC_KEYS else path
        raise ConfigError(f"{prefix}: {exc}") from None

    try:
        expr = parse(raw["payoff"])
    except ParseError as exc:
        raise ConfigError(f"{where('payoff')}: {exc}") from exc
    try:
        return GameSpec(types, prior, controls_u, controls_v, expr,
                        horizon, time_steps, grid_resolution)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# --- run configuration ------------------------------------------------------


@dataclass(frozen=True)
class Tolerances:
    """Check tolerances, one decade of slack per composition layer."""

    envelope: float = 1e-9
    check: float = 1e-8
    derived: float = 1e-7
    oracle: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("envelope", "check", "derived", "oracle"):
            if not (getattr(self, name) > 0.0):
                raise ConfigError(f"tolerance {name} must be positive")


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation, fully resolved."""

    spec_path: str
    command: str
    out_dir: str
    time_steps: int | None = None
    grid_resolution: int | None = None
    seed: int = 424242
    samples: int = 100_000
    tolerances: Tolerances = field(default_factory=Tolerances)
    force_terminal_reveal: bool = False
    opponent: str = "best_response"
    fixed_action: int = 0
    jobs: int = 1
    envelope_method: str = "auto"

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not self.spec_path or not self.out_dir:
            raise ConfigError("spec path and output directory must be non-empty")
        for name in ("time_steps", "grid_resolution"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} override must be positive")
        if self.samples < 2:
            raise ConfigError("samples must be at least 2")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.opponent not in OPPONENT_MODES:
            raise ConfigError(f"unknown opponent mode {self.opponent!r}")
        if self.fixed_action < 0:
            raise ConfigError("fixed-action must be nonnegative")
        if self.envelope_method not in ("auto", "lp"):
            raise ConfigError(f"unknown envelope method {self.envelope_method!r}")


# --- exports ----------------------------------------------------------------


def export_value_csv(vf: ValueField, path: str) -> None:
    """The value field as CSV, one row per (layer, node), 17 digits."""
    dim = vf.grid.dimension
    header = (["k", "t", "node_index"]
              + [f"p_{i + 1}" for i in range(dim)] + ["W", "exposed"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(vf.times.shape[0]):
            t_s = _fmt(vf.times[k])
            for j in range(vf.grid.n_nodes):
                row = [str(k), t_s, str(j)]
                row += [_fmt(p) for p in vf.grid.nodes[j]]
                row.append(_fmt(vf.values[k][j]))
                row.append(str(int(vf.exposed[k][j])))
                fh.write(",".join(row) + "\n")


def _write_json(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_martingale(m: BeliefMartingale, path: str) -> None:
    """The martingale as a nested-tree JSON document."""
    _write_json(martingale_to_dict(m), path)


def import_martingale(path: str) -> BeliefMartingale:
    """Inverse of export_martingale (path nodes stay unmerged)."""
    with open(path, "r", encoding="utf-8") as fh:
        return martingale_from_dict(json.load(fh))


# --- commands ---------------------------------------------------------------


def _effective_spec(config: RunConfig) -> GameSpec:
    spec = load_spec(config.spec_path)
    updates = {}
    if config.time_steps is not None:
        updates["time_steps"] = config.time_steps
    if config.grid_resolution is not None:
        updates["grid_resolution"] = config.grid_resolution
    return dataclasses.replace(spec, **updates) if updates else spec


def _prior_index(vf: ValueField):
    try:
        return vf.grid.index_of_belief(vf.spec.prior.weights)
    except OffGridError as exc:
        raise ConfigError(f"prior is not on the solver grid: {exc}") from exc


def _sup_with_layers(spec: GameSpec, times: np.ndarray) -> float:
    sup = payoff_bounds(spec).sup_bound
    for k in range(spec.time_steps):
        sup = max(sup, float(np.max(np.abs(payoff_tensor(spec, float(times[k]))))))
    return sup


def _per_node_rows(spec: GameSpec, jobs: int, work):
    """Evaluate work(k, j) over all (layer < n, node) slots, in parallel."""
    grid = build_grid(spec.n_types, spec.grid_resolution)
    n = spec.time_steps
    times = np.linspace(0.0, spec.horizon, n + 1)
    slots = [(k, j) for k in range(n) for j in range(grid.n_nodes)]
    results = [None] * len(slots)

    def fill(idx: int) -> None:
        k, j = slots[idx]
        results[idx] = work(float(times[k]), grid.nodes[j])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(fill, range(len(slots))))
    else:
        for idx in range(len(slots)):
            fill(idx)
    return grid, times, slots, results


def _cmd_solve(spec: GameSpec, config: RunConfig) -> int:
    vf = solve_backward(spec, jobs=config.jobs,
                        envelope_method=config.envelope_method)
    export_value_csv(vf, os.path.join(config.out_dir, "value.csv"))
    return 0


def _cmd_hamiltonian(spec: GameSpec, config: RunConfig) -> int:
    grid, times, slots, results = _per_node_rows(
        spec, config.jobs, lambda t, p: hamiltonian(spec, t, p))
    path = os.path.join(config.out_dir, "hamiltonian.csv")
    header = (["k", "t", "node_index"]
              + [f"p_{i + 1}" for i in range(grid.dimension)] + ["H"]
              + [f"u_{a + 1}" for a in range(spec.n_u)]
              + [f"v_{b + 1}" for b in range(spec.n_v)])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for (k, j), res in zip(slots, results):
            row = [str(k), _fmt(times[k]), str(j)]
            row += [_fmt(p) for p in grid.nodes[j]]
            row.append(_fmt(res.value))
            row += [_fmt(w) for w in res.u_star.probabilities]
            row += [_fmt(w) for w in res.v_star.probabilities]
            fh.write(",".join(row) + "\n")
    return 0


def _cmd_isaacs(spec: GameSpec, config: RunConfig) -> int:
    def work(t: float, p: np.ndarray):
        a = payoff_matrix(spec, t, p)
        return matrix_isaacs_gap(a, "pure"), matrix_isaacs_gap(a, "mixed")

    grid, times, slots, results = _per_node_rows(spec, config.jobs, work)
    path = os.path.join(config.out_dir, "isaacs.csv")
    header = (["k", "t", "node_index"]
              + [f"p_{i + 1}" for i in range(grid.dimension)]
              + ["gap_pure", "gap_mixed"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for (k, j), (pure, mixed) in zip(slots, results):
            row = [str(k), _fmt(times[k]), str(j)]
            row += [_fmt(p) for p in grid.nodes[j]]
            row += [_fmt(pure), _fmt(mixed)]
            fh.write(",".join(row) + "\n")
    return 0


def _cmd_martingale(spec: GameSpec, config: RunConfig) -> int:
    tols = config.tolerances
    vf = solve_backward(spec, jobs=config.jobs,
                        envelope_method=config.envelope_method)
    j0 = _prior_index(vf)
    m = extract_optimal_martingale(vf, vf.grid.nodes[j0],
                                   terminal_reveal=config.force_terminal_reveal)
    cost = martingale_cost(spec, m, jobs=config.jobs)
    value = float(vf.values[0][j0])
    export_value_csv(vf, os.path.join(config.out_dir, "value.csv"))
    export_martingale(m, os.path.join(config.out_dir, "martingale.json"))
    gap = abs(cost - value)
    _write_json({
        "p0": [float(w) for w in vf.grid.nodes[j0]],
        "value": value,
        "martingale_cost": cost,
        "abs_error": gap,
        "tolerance": tols.derived,
        "passed": bool(gap <= tols.derived),
    }, os.path.join(config.out_dir, "attainment.json"))
    return 0 if gap <= tols.derived else 1


def _cmd_simulate(spec: GameSpec, config: RunConfig) -> int:
    vf = solve_backward(spec, jobs=config.jobs,
                        envelope_method=config.envelope_method)
    j0 = _prior_index(vf)
    m = extract_optimal_martingale(vf, vf.grid.nodes[j0],
                                   terminal_reveal=config.force_terminal_reveal)
    strategy = synthesize_strategy(vf, m)
    res = simulate_play(spec, strategy, opponent=config.opponent,
                        seed=config.seed, samples=config.samples,
                        fixed_action=config.fixed_action)
    reference = float(vf.values[0][j0])
    tau = spec.horizon / spec.time_steps
    threshold = max(3.0 * res.stderr, 5.0 * _sup_with_layers(spec, vf.times) * tau)
    passed = abs(res.mean - reference) <= threshold
    _write_json({
        "mean": res.mean,
        "stderr": res.stderr,
        "samples": res.samples,
        "seed": res.seed,
        "opponent": res.opponent,
        "fixed_action": config.fixed_action if config.opponent == "fixed" else None,
        "reference_value": reference,
        "threshold": threshold,
        "passed": bool(passed),
    }, os.path.join(config.out_dir, "simulation.json"))
    return 0 if passed else 1


def _location(loc) -> list | None:
    return None if loc is None else [int(v) for v in loc]


def _cmd_check(spec: GameSpec, config: RunConfig) -> int:
    tols = config.tolerances
    jobs = config.jobs
    vf = solve_backward(spec, jobs=jobs, envelope_method=config.envelope_method)
    entries = []

    def add(name: str, passed: bool, summary: str, details: dict) -> None:
        entries.append({"name": name, "passed": bool(passed),
                        "summary": summary, "details": details})

    sub = verify_subsolution(vf, tol=tols.check, jobs=jobs)
    add(sub.name, sub.passed,
        f"max violation {sub.max_violation:.3e} (tol {sub.tolerance:g})",
        {"max_violation": sub.max_violation, "tolerance": sub.tolerance,
         "location": _location(sub.location)})

    dual = verify_dual_supersolution(vf, tol=tols.check,
                                     vertex_tol=tols.envelope, jobs=jobs)
    add(dual.name, dual.passed,
        f"max violation {dual.max_violation:.3e} (tol {dual.tolerance:g}), "
        f"vertex residual {dual.details['vertex_residual']:.3e} "
        f"(tol {dual.details['vertex_tolerance']:g})",
        {"max_violation": dual.max_violation, "tolerance": dual.tolerance,
         "location": _location(dual.location),
         "vertex_residual": dual.details["vertex_residual"],
         "vertex_tolerance": dual.details["vertex_tolerance"],
         "exposed_nodes": dual.details["exposed_nodes"]})

    reg = regularity_report(vf, jobs=jobs)
    add("regularity", reg.passed,
        f"convexity gap {reg.convexity_gap:.3e}, time increment "
        f"{reg.time_increment_max:.3e} (bound {reg.time_increment_bound:.3e}), "
        f"belief excess {reg.belief_excess:.3e}",
        {"convexity_gap": reg.convexity_gap,
         "convexity_tol": reg.convexity_tol,
         "time_increment_max": reg.time_increment_max,
         "time_increment_bound": reg.time_increment_bound,
         "belief_excess": reg.belief_excess,
         "pairs_checked": reg.pairs_checked,
         "sup_bound": reg.sup_bound,
         "lip_x": reg.lip_x,
         "lip_t": reg.lip_t})

    dpp = one_step_dpp(vf, tol=tols.envelope, jobs=jobs)
    add(dpp.name, dpp.passed,
        f"max residual {dpp.max_violation:.3e} (tol {dpp.tolerance:g})",
        {"max_violation": dpp.max_violation, "tolerance": dpp.tolerance,
         "location": _location(dpp.location)})

    j0 = _prior_index(vf)
    m = extract_optimal_martingale(vf, vf.grid.nodes[j0],
                                   terminal_reveal=config.force_terminal_reveal)
    mart = check_martingale(m, vf.grid, tol=tols.envelope)
    add("martingale-property", mart.passed,
        f"barycenter error {mart.max_barycenter_error:.3e} "
        f"(tol {tols.envelope:g}), prob-sum error "
        f"{mart.max_prob_sum_error:.3e}, terminal "
        f"{'revealed' if mart.terminal_revealed else 'not revealed'}",
        {"max_barycenter_error": mart.max_barycenter_error,
         "max_prob_sum_error": mart.max_prob_sum_error,
         "leaves_on_grid": mart.leaves_on_grid,
         "terminal_revealed": mart.terminal_revealed})

    cost = martingale_cost(spec, m, jobs=jobs)
    value = float(vf.values[0][j0])
    gap = abs(cost - value)
    add("attainment", gap <= tols.derived,
        f"|cost - value| = {gap:.3e} (tol {tols.derived:g})",
        {"martingale_cost": cost, "value": value, "abs_error": gap,
         "tolerance": tols.derived})

    if (spec.n_types == 2 and spec.grid_resolution <= 12
            and spec.time_steps <= 8):
        bf = brute_force_value(spec, vf.grid.nodes[j0], 2)
        bf_gap = abs(bf - value)
        add("oracle-agreement", bf_gap <= tols.oracle,
            f"|brute force - value| = {bf_gap:.3e} (tol {tols.oracle:g})",
            {"brute_force": bf, "value": value, "abs_error": bf_gap,
             "tolerance": tols.oracle})

    all_passed = all(e["passed"] for e in entries)
    _write_json({"passed": all_passed, "checks": entries},
                os.path.join(config.out_dir, "check.json"))
    for e in entries:
        print(f"{'PASS' if e['passed'] else 'FAIL'} {e['name']}: {e['summary']}")
    return 0 if all_passed else 1


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    spec = _effective_spec(config)
    os.makedirs(config.out_dir, exist_ok=True)
    handler = {
        "solve": _cmd_solve,
        "hamiltonian": _cmd_hamiltonian,
        "isaacs": _cmd_isaacs,
        "martingale": _cmd_martingale,
        "simulate": _cmd_simulate,
        "check": _cmd_check,
    }[config.command]
    return handler(spec, config)


# --- argument parsing --------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="game config file (YAML)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--time-steps", type=int, default=None,
                        help="override the config's time_steps")
    common.add_argument("--grid", type=int, default=None,
                        help="override the config's grid_resolution")
    common.add_argument("--seed", type=int, default=424242)
    common.add_argument("--samples", type=int, default=100_000)
    common.add_argument("--jobs", type=int, default=1,
                        help="worker threads for per-node LPs")
    common.add_argument("--tol-envelope", type=float, default=1e-9)
    common.add_argument("--tol-check", type=float, default=1e-8)
    common.add_argument("--tol-derived", type=float, default=1e-7)
    common.add_argument("--tol-oracle", type=float, default=1e-6)
    common.add_argument("--force-terminal-reveal", action="store_true",
                        help="append a costless vertex split at the horizon")
    common.add_argument("--opponent", choices=OPPONENT_MODES,
                        default="best_response")
    common.add_argument("--fixed-action", type=int, default=0,
                        help="column index used by the fixed opponent")
    common.add_argument("--envelope-method", choices=("auto", "lp"),
                        default="auto")

    parser = argparse.ArgumentParser(
        prog="splitgame",
        description="Value solver for zero-sum games with one-sided "
                    "incomplete information.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common],
                   help="backward scheme; writes value.csv")
    sub.add_parser("hamiltonian", parents=[common],
                   help="one-shot values and selectors per (t, belief)")
    sub.add_parser("isaacs", parents=[common],
                   help="pure/mixed minimax gaps per (t, belief)")
    sub.add_parser("martingale", parents=[common],
                   help="optimal martingale, its cost, and attainment")
    sub.add_parser("simulate", parents=[common],
                   help="Monte Carlo play of the synthesized strategy")
    sub.add_parser("check", parents=[common],
                   help="full verification suite; exit 0 iff all pass")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = RunConfig(
            spec_path=args.spec,
            command=args.command,
            out_dir=args.out,
            time_steps=args.time_steps,
            grid_resolution=args.grid,
            seed=args.seed,
            samples=args.samples,
            tolerances=Tolerances(args.tol_envelope, args.tol_check,
                                  args.tol_derived, args.tol_oracle),
            force_terminal_reveal=args.force_terminal_reveal,
            opponent=args.opponent,
            fixed_action=args.fixed_action,
            jobs=args.jobs,
            envelope_method=args.envelope_method,
        )
        return run(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr, flush=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface module errors as exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr, flush=True)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
