"""Config ingestion, artifact formats, exit codes, and byte determinism."""

from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
import pytest

import splitgame as sg
from splitgame.cli import ConfigError, RunConfig, Tolerances, load_spec, main

GOOD_CONFIG = """\
types: [[0.0], [1.0]]
prior: [0.5, 0.5]
controls_u: [[-1.0], [1.0]]
controls_v: [[-1.0], [1.0]]
payoff: "t*u1*v1 + (1 - t)*abs(x1 - u1)"
horizon: 1.0
time_steps: 4
grid_resolution: 8
"""

ONE_TYPE_CONFIG = """\
types: [[0.0]]
prior: [1.0]
controls_u: [[0.5]]
controls_v: [[0.0]]
payoff: "u1"
horizon: 1.0
time_steps: 2
grid_resolution: 1
"""


@pytest.fixture()
def good_config(tmp_path):
    path = tmp_path / "game.yaml"
    path.write_text(GOOD_CONFIG)
    return str(path)


# --- config loading ------------------------------------------------------------


def test_load_spec_round_trip(good_config):
    spec = load_spec(good_config)
    assert spec.n_types == 2
    assert spec.horizon == 1.0
    assert spec.time_steps == 4
    assert spec.grid_resolution == 8
    assert np.allclose(spec.prior.weights, [0.5, 0.5])
    assert spec.payoff.to_text() == "t * u1 * v1 + (1.0 - t) * abs(x1 - u1)"


def test_prior_normalized_after_tolerant_check(tmp_path):
    path = tmp_path / "game.yaml"
    path.write_text(GOOD_CONFIG.replace("[0.5, 0.5]",
                                        "[0.5000000001, 0.4999999999]"))
    spec = load_spec(str(path))
    assert spec.prior.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_bad_prior_sum_reports_value_and_line(tmp_path):
    path = tmp_path / "game.yaml"
    path.write_text(GOOD_CONFIG.replace("[0.5, 0.5]", "[0.5, 0.6]"))
    with pytest.raises(ConfigError) as err:
        load_spec(str(path))
    assert "prior sums to 1.1" in str(err.value)
    assert f"{path}:2" in str(err.value)


def test_unknown_key_rejected_with_line(tmp_path):
    path = tmp_path / "game.yaml"
    path.write_text(GOOD_CONFIG + "verbosity: 3\n")
    with pytest.raises(ConfigError) as err:
        load_spec(str(path))
    assert "unknown key" in str(err.value)
    assert "verbosity" in str(err.value)
    assert f"{path}:9" in str(err.value)


def test_missing_key_rejected(tmp_path):
    path = tmp_path / "game.yaml"
    path.write_text(GOOD_CONFIG.replace("horizon: 1.0\n", ""))
    with pytest.raises(ConfigError) as err:
        load_spec(str(path))
    assert "horizon" in str(err.value)


def test_payoff_parse_error_carries_location(tmp_path):
    path = tmp_path / "game.yaml"
    path.write_text(GOOD_CONFIG.replace(
        'payoff: "t*u1*v1 + (1 - t)*abs(x1 - u1)"', 'payoff: "min(x1,"'))
    with pytest.raises(ConfigError) as err:
        load_spec(str(path))
    assert "offset 7" in str(err.value)
    assert f"{path}:5" in str(err.value)


def test_boolean_not_accepted_as_number(tmp_path):
    path = tmp_path / "game.yaml"
    path.write_text(GOOD_CONFIG.replace("time_steps: 4", "time_steps: true"))
    with pytest.raises(ConfigError):
        load_spec(str(path))


def test_ragged_control_lists_rejected(tmp_path):
    path = tmp_path / "game.yaml"
    path.write_text(GOOD_CONFIG.replace("controls_u: [[-1.0], [1.0]]",
                                        "controls_u: [[-1.0], [1.0, 2.0]]"))
    with pytest.raises(ConfigError):
        load_spec(str(path))


def test_missing_file_raises_config_error():
    with pytest.raises(ConfigError):
        load_spec("/nonexistent/game.yaml")


def test_invalid_yaml_rejected(tmp_path):
    path = tmp_path / "game.yaml"
    path.write_text("types: [[0.0]\n")
    with pytest.raises(ConfigError):
        load_spec(str(path))


# --- run configuration -----------------------------------------------------------


def test_run_config_validation(good_config):
    with pytest.raises(ConfigError):
        RunConfig(good_config, "dance", "out")
    with pytest.raises(ConfigError):
        RunConfig(good_config, "solve", "")
    with pytest.raises(ConfigError):
        RunConfig(good_config, "solve", "out", jobs=0)
    with pytest.raises(ConfigError):
        RunConfig(good_config, "solve", "out", opponent="psychic")
    with pytest.raises(ConfigError):
        Tolerances(envelope=0.0)


# --- artifacts -------------------------------------------------------------------


def test_value_csv_shape_for_single_type(tmp_path):
    config = tmp_path / "game.yaml"
    config.write_text(ONE_TYPE_CONFIG)
    out = tmp_path / "out"
    assert main(["solve", "--spec", str(config), "--out", str(out)]) == 0
    lines = (out / "value.csv").read_text().splitlines()
    assert lines[0] == "k,t,node_index,p_1,W,exposed"
    assert len(lines) == 4  # header + (n+1) layers x 1 node


def test_value_csv_round_trips_bit_exact(good_config, tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--spec", good_config, "--out", str(out)]) == 0
    spec = load_spec(good_config)
    vf = sg.solve_backward(spec)
    lines = (out / "value.csv").read_text().splitlines()
    header = lines[0].split(",")
    k_col = header.index("k")
    j_col = header.index("node_index")
    w_col = header.index("W")
    for line in lines[1:]:
        cells = line.split(",")
        k = int(cells[k_col])
        j = int(cells[j_col])
        assert float(cells[w_col]) == vf.values[k][j]


def test_martingale_artifacts_round_trip(good_config, tmp_path):
    out = tmp_path / "out"
    assert main(["martingale", "--spec", good_config, "--out", str(out)]) == 0
    report = json.loads((out / "attainment.json").read_text())
    assert report["passed"] is True
    assert report["abs_error"] <= report["tolerance"]
    m = sg.import_martingale(str(out / "martingale.json"))
    assert sg.check_martingale(m).passed
    spec = load_spec(good_config)
    assert sg.martingale_cost(spec, m) == pytest.approx(
        report["martingale_cost"], abs=1e-12)


def test_simulation_report(good_config, tmp_path):
    out = tmp_path / "out"
    code = main(["simulate", "--spec", good_config, "--out", str(out),
                 "--samples", "5000", "--seed", "11"])
    assert code == 0
    report = json.loads((out / "simulation.json").read_text())
    assert report["samples"] == 5000
    assert report["seed"] == 11
    assert report["opponent"] == "best_response"
    assert report["passed"] is True
    assert abs(report["mean"] - report["reference_value"]) <= report["threshold"]


def test_hamiltonian_and_isaacs_tables(good_config, tmp_path):
    out = tmp_path / "out"
    assert main(["hamiltonian", "--spec", good_config, "--out", str(out)]) == 0
    assert main(["isaacs", "--spec", good_config, "--out", str(out)]) == 0
    h_lines = (out / "hamiltonian.csv").read_text().splitlines()
    g_lines = (out / "isaacs.csv").read_text().splitlines()
    assert h_lines[0] == "k,t,node_index,p_1,p_2,H,u_1,u_2,v_1,v_2"
    assert g_lines[0] == "k,t,node_index,p_1,p_2,gap_pure,gap_mixed"
    assert len(h_lines) == len(g_lines) == 1 + 4 * 9  # n layers x nodes
    gaps = np.array([line.split(",")[-1] for line in g_lines[1:]], dtype=float)
    assert np.all(gaps <= 1e-9)


def test_check_passes_and_writes_report(good_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["check", "--spec", good_config, "--out", str(out)]) == 0
    report = json.loads((out / "check.json").read_text())
    assert report["passed"] is True
    names = [entry["name"] for entry in report["checks"]]
    assert "subsolution" in names
    assert "dual-supersolution" in names
    assert "regularity" in names
    assert "one-step-dpp" in names
    assert "martingale-property" in names
    assert "attainment" in names
    stdout = capsys.readouterr().out
    assert stdout.count("PASS") == len(names)
    assert "FAIL" not in stdout


# --- exit codes ---------------------------------------------------------------------


def test_config_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(GOOD_CONFIG.replace("[0.5, 0.5]", "[0.5, 0.6]"))
    out = tmp_path / "out"
    assert main(["solve", "--spec", str(bad), "--out", str(out)]) == 2
    assert "prior sums to 1.1" in capsys.readouterr().err


def test_off_grid_prior_exits_two(good_config, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["martingale", "--spec", good_config, "--out", str(out),
                 "--grid", "7"])
    assert code == 2
    assert "grid" in capsys.readouterr().err


# --- determinism ---------------------------------------------------------------------


def _artifact_bytes(out_dir):
    blobs = {}
    for name in sorted(os.listdir(out_dir)):
        with open(os.path.join(out_dir, name), "rb") as fh:
            blobs[name] = fh.read()
    return blobs


def test_artifacts_byte_identical_across_runs_and_jobs(good_config, tmp_path):
    outs = [str(tmp_path / f"out{i}") for i in range(3)]
    assert main(["check", "--spec", good_config, "--out", outs[0]]) == 0
    assert main(["check", "--spec", good_config, "--out", outs[1]]) == 0
    assert main(["check", "--spec", good_config, "--out", outs[2],
                 "--jobs", "4"]) == 0
    first = _artifact_bytes(outs[0])
    assert first == _artifact_bytes(outs[1])
    assert first == _artifact_bytes(outs[2])


def test_artifacts_byte_identical_across_backends(good_config, tmp_path):
    script = ("import sys; from splitgame.cli import main; "
              "sys.exit(main(sys.argv[1:]))")
    blobs = {}
    for flag in ("1", "0"):
        out = str(tmp_path / f"out_numba_{flag}")
        env = dict(os.environ, SPLITGAME_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, "-c", script, "martingale",
             "--spec", good_config, "--out", out],
            env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        blobs[flag] = _artifact_bytes(out)
    assert blobs["1"] == blobs["0"]


def test_backend_flag_selects_python_kernels(good_config):
    script = ("import os, splitgame; "
              "print(splitgame.backend_name())")
    env = dict(os.environ, SPLITGAME_NUMBA="0")
    proc = subprocess.run([sys.executable, "-c", script], env=env,
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "python"
