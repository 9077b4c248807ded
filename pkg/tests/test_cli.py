import json

import numpy as np
import pytest

from kahlernet.balanced import read_gram
from kahlernet.cli import main
from kahlernet.networks import read_network
from kahlernet.sampling import read_samples
from kahlernet.projective import fermat


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_count(capsys):
    code, out, _ = run(capsys, "count", "--n", "2", "--k", "2")
    assert code == 0 and out.splitlines()[0] == "D_match = 4"
    code, out, _ = run(capsys, "count", "--n", "2", "--k", "4", "--width", "4", "--B-base", "2")
    assert code == 0 and "D_match = 7" in out
    est = float(out.split("estB = ")[1])
    assert abs(est - 2 * (1 - 3 / 5.25)) < 1e-12


def test_rank_identity(capsys):
    code, out, err = run(capsys, "rank", "--dim", "10", "--width", "4", "--spectrum", "identity")
    assert code == 0
    assert float(out.split()[0]) == pytest.approx(0.6, abs=1e-12)
    assert "Frobenius" in err


def test_usage_errors(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "count", "--n", "2", "--k", "2", "--bogus")[0] == 1
    assert run(capsys, "count", "--n", "2")[0] == 1
    assert run(capsys, "count", "--n", "2", "--k", "3")[0] == 1    # odd k
    assert run(capsys, "--help")[0] == 0
    assert run(capsys, "sample", "--help")[0] == 0
    assert run(capsys, "train", "--count", "10")[0] == 1


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# capacity query\nn = 2\nk = 4\n")
    code, out, _ = run(capsys, "count", "--config", str(cfg))
    assert code == 0 and "D_match = 7" in out
    code, out, _ = run(capsys, "count", "--config", str(cfg), "--k", "2")
    assert "D_match = 4" in out
    cfg.write_text("colour = blue\n")
    assert run(capsys, "count", "--config", str(cfg), "--n", "1", "--k", "2")[0] == 1


def test_sample_and_train(capsys, tmp_path):
    pts = tmp_path / "pts.dat"
    code, out, _ = run(capsys, "sample", "--count", "300", "--seed", "3", "--out", str(pts))
    assert code == 0 and "wrote 300 points" in out
    assert len(read_samples(pts, fermat())) == 300
    arch = tmp_path / "arch.json"
    arch.write_text(json.dumps({"family": "bihomogeneous", "num_vars": 5, "input_degree": 1,
                                "powers": [2], "widths": [3], "init": "near_fs"}))
    net_out, report = tmp_path / "net.txt", tmp_path / "rep.json"
    code, out, _ = run(capsys, "train", "--arch", str(arch), "--points", str(pts), "--steps", "5",
                       "--lr", "0.05", "--report", str(report), "--out", str(net_out))
    assert code == 0 and "sigma held-out" in out
    assert read_network(net_out).arch.widths == (3,)
    assert len(json.loads(report.read_text())["loss_trace"]) == 6


def test_sample_projective(capsys, tmp_path):
    code, out, _ = run(capsys, "sample", "--projective", "2", "--count", "50", "--out", str(tmp_path / "p.dat"))
    assert code == 0 and "residual 0.00e+00" in out


def test_balanced_and_rho(capsys, tmp_path):
    g = tmp_path / "g.mat"
    code, out, _ = run(capsys, "balanced", "--k", "2", "--cubature", "--tol", "1e-10", "--iters", "100", "--out", str(g))
    assert code == 0 and out.startswith("status converged")
    G, k = read_gram(g)
    assert k == 2 and G.shape == (3, 3)
    code, out, _ = run(capsys, "rho", "--k", "2", "--cubature", "--metric", str(g))
    assert code == 0
    assert float(out.split("max|rho-1| ")[1]) < 1e-9
    assert run(capsys, "rho", "--k", "3", "--metric", str(g))[0] == 1


def test_non_convergence_and_numerical_failure(capsys):
    # three iterations cannot reach 1e-15
    assert run(capsys, "balanced", "--k", "2", "--count", "2000", "--iters", "3", "--tol", "1e-15")[0] == 2
    # fewer points than sections: singular Gram matrix
    code, out, _ = run(capsys, "balanced", "--k", "3", "--n", "2", "--count", "4")
    assert code == 2 and "singular" in out


def test_sweep_output(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "--n", "2", "--k", "4")
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 1 + 6
    rows = [dict(zip(lines[0].split(","), l.split(","))) for l in lines[1:]]
    err = np.array([float(r["error_sq"]) for r in rows])
    np.testing.assert_allclose(err, 1 - np.arange(1, 7) / 6, atol=1e-12)
    dest = tmp_path / "sweep.csv"
    code, out, _ = run(capsys, "sweep", "--ensemble", "gaussian", "--samples", "2", "--widths", "1", "3",
                       "--out", str(dest))
    assert code == 0 and "wrote 2 rows" in out
    assert dest.read_text().count("\n") == 3
