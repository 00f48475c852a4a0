import json

import numpy as np
import pytest

from nlsgraph import cli, io


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_grid():
    assert np.allclose(cli.parse_grid("0.6:1.6:0.1"), np.round(np.arange(0.6, 1.65, 0.1), 12))
    assert cli.parse_grid("0.6:1.6:0.1").size == 11


def test_solve_tadpole(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "--graph", "tadpole:1", "--mass", "1", "--p", "4", "--out", str(tmp_path))
    assert code == 0
    doc = json.loads(out)
    assert doc["converged"] and doc["energy"] < -1 / 96
    assert doc["kirchhoff_residual"] <= 1e-6
    kind, cols, rows = io.read_csv(tmp_path / "edges.csv")
    assert kind == "edges" and rows
    man = io.RunManifest.load(tmp_path / "manifest.json")
    assert man.command.startswith("solve") and str(tmp_path / "solve.json") in man.outputs


def test_solve_is_deterministic(capsys):
    argv = ("solve", "--graph", "star:2,1", "--mass", "1", "--density", "30", "--start", "3")
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    assert a == b


def test_solve_constrained(capsys):
    code, out, _ = run(capsys, "solve", "--graph", "gamma:6,3,2,2", "--mass", "1", "--density", "30", "--max-on", "s")
    assert code == 0
    assert json.loads(out)["constraint"] == {"kind": "max_on_edge", "edge": "s"}


@pytest.mark.slow
def test_sweep_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "--graph", "tadpole:1", "--p", "4", "--mass-grid", "0.6:1.6:0.1",
                       "--density", "50", "--out", str(tmp_path))
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "# nlsgraph sweep-csv v1"
    _, cols, rows = io.read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 11
    lam = [float(r["multiplier"]) for r in rows]
    assert all(b > a for a, b in zip(lam, lam[1:]))
    assert (tmp_path / "sweep.csv").read_text() == out


def test_uniq(capsys):
    code, out, _ = run(capsys, "uniq", "--graph", "tadpole:1", "--mass", "1", "--starts", "4", "--density", "30")
    assert code == 0
    assert json.loads(out)["n_clusters"] == 1


def test_verify_analytic(capsys):
    code, out, _ = run(capsys, "verify", "analytic")
    assert code == 0
    assert "PASS theta_4" in out and "2.720699" in out
    assert "FAIL" not in out


@pytest.mark.parametrize("suite", ["rearrange", "solver"])
def test_verify_suites(capsys, suite):
    code, out, _ = run(capsys, "verify", suite)
    assert code == 0 and "FAIL" not in out and "PASS" in out


@pytest.mark.parametrize("argv", [
    ("solve", "--graph", "tadpole:1", "--mass", "1", "--bogus"),
    ("frobnicate",),
    ("sweep", "--graph", "tadpole:1", "--mass-grid", "1:0:0.1"),
    ("solve", "--graph", "star:1,1", "--mass", "1"),
    ("solve", "--graph", "tadpole:1", "--mass", "3", "--p", "6"),
])
def test_usage_errors(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 2


def test_numerical_failure_exit_code(capsys):
    code, _, _ = run(capsys, "solve", "--graph", "tadpole:1", "--mass", "1", "--max-iter", "3", "--density", "20")
    assert code == 1
