import json
import math

import numpy as np
import pytest

from bsrecon.cli import build_parser, main
from bsrecon.gh import FiniteMetricSpace, save_csv


def _run(capsys, *argv):
    code = main(list(map(str, argv)))
    out = capsys.readouterr()
    return code, (json.loads(out.out) if out.out.strip() else None), out.err


@pytest.mark.parametrize("cmd", ["generate", "perturb", "reconstruct", "grade", "run", "sweep", "spectral-dist", "gh-dist"])
def test_help(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([cmd, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_end_to_end(tmp_path, capsys):
    ds, pert, pre = tmp_path / "d.txt", tmp_path / "p.txt", tmp_path / "rec"
    code, out, _ = _run(capsys, "generate", "-o", ds, "--cutoff", 400)
    assert code == 0 and out["n_eigenvalues"] == 21
    code, out, _ = _run(capsys, "perturb", ds, "-o", pert, "--eig-abs", 0.01, "--trace-l2", 0.01, "--seed", 2)
    assert code == 0 and out["n_eigenvalues"] == 20
    code, out, _ = _run(capsys, "spectral-dist", ds, pert, "--tol", 1e-5)
    assert code == 0 and 0 < out["spectral_distance"] < 0.1
    code, out, _ = _run(capsys, "reconstruct", ds, "--prefix", pre)
    assert code == 0 and out["Y_size"] > 1
    code, out, _ = _run(capsys, "grade", "--Y", out["dist"], "--net", out["net"])
    assert code == 0 and out["gh_lower"] <= out["gh_upper"] and out["d_H"] <= 4 * math.pi / 16


def test_grade_matches_pipeline_report(tmp_path, capsys):
    code, rep, _ = _run(capsys, "run", "--out-dir", tmp_path / "runs")
    assert code == 0
    run_dir = next((tmp_path / "runs").iterdir())
    code, out, _ = _run(capsys, "grade", "--Y", run_dir / rep["artifacts"]["Y_dist"], "--net", run_dir / "net.json")
    assert out["gh_upper"] == rep["gh_upper"] and out["d_H"] == rep["d_H"]


def test_grade_needs_inputs(capsys):
    code, _, err = _run(capsys, "grade")
    assert code == 2 and "nothing to grade" in err


def test_config_file_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"manifold": {"variant": "rectangle", "params": {"lx": 3.0, "ly": 2.0}}, "mesh_h": 0.25, "delta_inv": 10.0}))
    code, out, _ = _run(capsys, "generate", "--config", cfg, "-o", tmp_path / "d.txt")
    assert code == 0 and out["mesh_nodes"] == 2 * (12 + 8)
    manifold = json.dumps({"variant": "interval", "params": {"length": 2.0}})
    code, out, _ = _run(capsys, "generate", "--manifold", manifold, "--cutoff", 30, "-o", tmp_path / "e.txt")
    assert out["n_eigenvalues"] == 4


def test_gh_dist(tmp_path, capsys):
    X = FiniteMetricSpace(np.array([[0.0, 1.0], [1.0, 0.0]]))
    Y = FiniteMetricSpace(np.array([[0.0, 3.0], [3.0, 0.0]]))
    save_csv(X, tmp_path / "x.csv")
    save_csv(Y, tmp_path / "y.csv")
    code, out, _ = _run(capsys, "gh-dist", tmp_path / "x.csv", tmp_path / "y.csv", "--exact")
    assert code == 0 and out["gh_exact"] == 1.0
    code, out, _ = _run(capsys, "gh-dist", tmp_path / "x.csv", tmp_path / "y.csv", "--bounds")
    assert out["gh_lower"] <= 1.0 <= out["gh_upper"]


def test_sweep_cli(tmp_path, capsys):
    code, rows, _ = _run(capsys, "sweep", "--axis", "noise", "--values", "0,0.05", "-o", tmp_path / "s.csv")
    assert code == 0 and len(rows) == 2
    assert (tmp_path / "s.csv").read_text().startswith("value,")


def test_errors_exit_nonzero(tmp_path, capsys):
    code, _, err = _run(capsys, "spectral-dist", tmp_path / "missing.txt", tmp_path / "missing.txt")
    assert code == 1 and "error" in err
    code, _, err = _run(capsys, "generate", "--eta", -1, "-o", tmp_path / "d.txt")
    assert code == 1
    code, _, err = _run(capsys, "sweep", "--axis", "noise", "--values", "0,0.1,0.05")
    assert code == 1
