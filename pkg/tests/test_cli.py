import csv
import json
import math
import subprocess
import sys

import pytest
from scipy import special

from sdbbm import cli

SIM = {"T": 9.0, "checkpoints": [0.5, 1.0], "sigma": {"kind": "gaussian-bump", "K": 1.0}, "R": 6}


def run(tmp_path, command, cfg, name="out.csv", *extra):
    out = tmp_path / name
    code = cli.run([command, "--json", json.dumps(cfg), "--out", str(out), *extra])
    return code, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_q_function_rows(tmp_path):
    code, out = run(tmp_path, "q-function", {"x": [0, 1]})
    assert code == 0
    rows = read_rows(out)
    assert rows[0] == ["x", "Q"]
    assert rows[1] == ["0.0", "0.0"]
    assert float(rows[2][1]) == pytest.approx(1.076159, abs=1e-6)


def test_solve_lambda_theta_zero(tmp_path):
    code, out = run(tmp_path, "solve-lambda", {"spec": [[0.0, 1.0]], "K": 1.0, "m": 50})
    assert code == 0
    rows = read_rows(out)[1:]
    assert len(rows) == 51 and all(float(r[1]) == 0.0 for r in rows)


def test_floats_round_trip(tmp_path):
    code, out = run(tmp_path, "solve-lambda", {"theta": 1.0, "K": 1.0, "m": 10})
    from sdbbm.volterra import LaplaceSpec, SolverGrid, solve_lambda

    exact = solve_lambda(LaplaceSpec.single(1.0), 1.0, SolverGrid(1.0, 10)).values
    assert [float(r[1]) for r in read_rows(out)[1:]] == exact.tolist()


@pytest.mark.parametrize(
    "command,cfg",
    [
        ("lambda-extended", {"theta": 1.0, "K": 1.0, "S": 5.0, "step": 0.01}),
        ("log-laplace", {"spec": [[1.0, 0.5], [1.0, 1.0]], "K": 1.0}),
        ("levy-probe", {"K": 1.0, "theta_min": 0.1, "theta_max": 5.0, "theta_step": 0.1, "step": 0.01}),
        ("degenerate-curve", {"theta": 1.0, "Ks": [1, 10]}),
        ("convergence-study", {"theta": 1.0, "K": 1.0, "refinements": 2}),
    ],
)
def test_subcommands_succeed(tmp_path, command, cfg):
    code, out = run(tmp_path, command, cfg)
    assert code == 0 and len(read_rows(out)) >= 2


def test_report_written(tmp_path):
    code, out = run(tmp_path, "convergence-study", {"theta": 1.0, "K": 1.0, "refinements": 3})
    report = json.loads(out.with_suffix(".json").read_text())
    assert report["order_estimate"] >= 0.9


def test_convergence_K_zero_is_exact(tmp_path):
    report = cli.convergence_study({"theta": 1.0, "K": 0.0, "refinements": 2})
    assert max(report["sup_difference"]) <= 1e-14


def test_simulate_columns_and_determinism(tmp_path):
    code, a = run(tmp_path, "simulate", SIM, "a.csv", "--threads", "1", "--seed", "7")
    code2, b = run(tmp_path, "simulate", SIM, "b.csv", "--threads", "3", "--seed", "7")
    assert code == code2 == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_rows(a)
    assert rows[0] == ["replicate", "t_1", "t_2", "value_1", "value_2", "peak_population"]
    assert len(rows) == 7
    _, c = run(tmp_path, "simulate", SIM, "c.csv", "--seed", "8")
    assert c.read_bytes() != a.read_bytes()


def test_seed_sources(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "7")
    _, env = run(tmp_path, "simulate", SIM, "env.csv")
    _, flag = run(tmp_path, "simulate", SIM, "flag.csv", "--seed", "7")
    assert env.read_bytes() == flag.read_bytes()
    monkeypatch.delenv(cli.SEED_ENV)
    _, default = run(tmp_path, "simulate", SIM, "default.csv")
    _, explicit = run(tmp_path, "simulate", SIM, "explicit.csv", "--seed", str(cli.DEFAULT_SEED))
    assert default.read_bytes() == explicit.read_bytes()


def test_validation_errors(tmp_path, capsys):
    bad_sigma = dict(SIM, sigma={"kind": "constant", "value": 0.7})
    code, out = run(tmp_path, "simulate", bad_sigma)
    assert code == 1 and not out.exists()
    assert "sigma" in capsys.readouterr().err
    assert cli.run(["q-function", "--json", '{"x": [0, 1'] ) == 1
    assert "line 1" in capsys.readouterr().err
    assert cli.run(["log-laplace", "--json", '{"theta": 1}']) == 1
    assert "'K'" in capsys.readouterr().err
    assert cli.run(["q-function", "--config", str(tmp_path / "missing.json")]) == 1
    assert cli.run(["simulate", "--json", json.dumps(SIM), "--threads", "zero"]) == 1


def test_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"x": [4.0]}))
    out = tmp_path / "q.csv"
    assert cli.run(["q-function", "--config", str(path), "--out", str(out)]) == 0
    assert math.isclose(float(read_rows(out)[1][1]), 4.0 * special.dawsn(2.0))


def test_verify_ergodic_exit_codes_and_determinism(tmp_path):
    cfg = {"base": {"checkpoints": [0.5, 1.0], "sigma": {"kind": "gaussian-bump", "K": 1.0}},
           "T_ladder": [4, 9], "R": 100, "theta": 1.0}
    code_a, a = run(tmp_path, "verify-ergodic", cfg, "a.csv", "--threads", "1")
    code_b, b = run(tmp_path, "verify-ergodic", cfg, "b.csv", "--threads", "2")
    assert code_a == code_b and code_a in (0, 2)
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
    report = json.loads(a.with_suffix(".json").read_text())
    assert (code_a == 0) == report["passed"]


def test_entry_point_module():
    proc = subprocess.run([sys.executable, "-m", "sdbbm.cli", "q-function", "--json", '{"x": [1]}'],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.startswith("x,Q\n1.0,1.07615901382")
