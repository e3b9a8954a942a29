from __future__ import annotations

import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from rankedge.cli import main


def run(tmp_path, *argv, fmt="csv"):
    out = tmp_path / f"out.{fmt}"
    code = main([*argv, "--out", str(out)] + (["--format", "json"] if fmt == "json" else []))
    assert code == 0
    if fmt == "json":
        return json.loads(out.read_text())
    with open(out) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def two_by_two(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("0 1\n1 0\n")
    return str(p)


def test_dist_two_by_two(tmp_path, two_by_two):
    rows = run(tmp_path, "dist", "--matrix", two_by_two)
    assert [(float(r["value"]), float(r["prob"]), float(r["cdf"])) for r in rows] == [(0, 0.5, 0.5), (2, 0.5, 1)]
    std = run(tmp_path, "dist", "--matrix", two_by_two, "--standardized", fmt="json")
    assert std["atoms"] == [[-1.0, 0.5], [1.0, 0.5]]


def test_dist_mc_is_reproducible(tmp_path, two_by_two):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for path, workers in ((a, "1"), (b, "8")):
        args = ["dist", "--matrix", two_by_two, "--method", "mc", "--draws", "100000"]
        assert main(args + ["--seed", "42", "--workers", workers, "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(a.open()))
    p0 = float(rows[0]["prob"])
    assert abs(p0 - 0.5) <= 3 * math.sqrt(0.25 / 100000)


def test_floats_have_17_digits(tmp_path):
    rows = run(tmp_path, "scores", "--fn", "wilcoxon", "--n", "3")
    assert rows[0]["d"] == "%.17g" % 0.25
    vdw = run(tmp_path, "scores", "--fn", "vdw", "--n", "5", "--type", "exact")
    assert float(vdw[2]["d"]) == pytest.approx(0.0, abs=1e-12)
    med = run(tmp_path, "scores", "--fn", "median", "--n", "5")
    assert [float(r["d"]) for r in med] == [-1, -1, 1, 1, 1]


def test_regression_and_scores_input(tmp_path):
    e = tmp_path / "e.txt"
    d = tmp_path / "d.txt"
    e.write_text("1\n1\n0\n0\n")
    d.write_text("-1\n-1\n1\n1\n")
    rows = run(tmp_path, "dist", "--regression", str(e), "--scores", str(d))
    mass = {float(r["value"]): float(r["prob"]) for r in rows}
    assert mass[0.0] == pytest.approx(2 / 3, abs=1e-12)
    j = tmp_path / "in.json"
    j.write_text(json.dumps({"regression": [1, 1, 0, 0], "scores": [-1, -1, 1, 1]}))
    assert run(tmp_path, "dist", "--matrix", str(j)) == rows


def test_moments(tmp_path):
    rng = np.random.default_rng(3)
    p = tmp_path / "m.csv"
    np.savetxt(p, rng.normal(size=(5, 5)), delimiter=",")
    out = run(tmp_path, "moments", "--matrix", str(p), fmt="json")
    for key in ("beta", "delta", "lambda1", "lambda2", "third_exact", "fourth_exact", "fourth_remainder_bound"):
        assert key in out
    assert abs(out["fourth_exact"] - out["fourth_leading"]) <= out["fourth_remainder_bound"]


def test_edgeworth_table(tmp_path, two_by_two):
    rows = run(tmp_path, "edgeworth", "--matrix", two_by_two, "--grid=-1:1:0.5")
    assert list(rows[0]) == ["x", "F", "e1", "e2", "phi", "diff1", "diff2"]
    assert [float(r["x"]) for r in rows] == [-1, -0.5, 0, 0.5, 1]
    assert float(rows[2]["F"]) == 0.5
    blob = run(tmp_path, "edgeworth", "--matrix", two_by_two, "--order", "1", fmt="json")
    assert blob["order"] == 1 and blob["sup_distance"] > 0


def test_diagnose_median(tmp_path):
    rep = run(tmp_path, "diagnose", "--fn", "median", "--n", "4", fmt="json")
    assert rep["sup_f_e1"] >= 1 / 3 - 1e-12
    assert {"sup_f_phi", "sup_f_e2", "beta_over_n", "d_cap2", "e_cap3", "ratio_k1", "conditions"} <= set(rep)


def test_diagnose_wilcoxon(tmp_path):
    rep = run(tmp_path, "diagnose", "--fn", "wilcoxon", "--n", "8", fmt="json")
    assert rep["ratio_k1"] <= 90


def test_convergence(tmp_path):
    rows = run(tmp_path, "convergence", "--fn", "wilcoxon", "--n-list", "6,8,10")
    phi = [float(r["sup_f_phi"]) for r in rows]
    assert phi[0] > phi[1] > phi[2]
    med = run(tmp_path, "convergence", "--fn", "median", "--n-list", "4,8,12")
    for r, k in zip(med, (1, 2, 3)):
        half = 0.5 * math.comb(2 * k, k) ** 2 / math.comb(4 * k, 2 * k)
        assert float(r["sup_f_e1"]) >= half - 1e-12


def test_sample(tmp_path, two_by_two):
    one = run(tmp_path, "sample", "--matrix", two_by_two, "--seed", "7", fmt="json")
    assert set(one) == {"i", "j", "perm1", "perm2", "perm3", "perm4", "perm5", "t", "dt"}
    many = run(tmp_path, "sample", "--matrix", two_by_two, "--draws", "3", fmt="json")
    assert len(many) == 3


def test_hermite_and_kernel(tmp_path):
    table = run(tmp_path, "hermite")
    norms = {(int(r["k"]), int(r["power"])): float(r["sup_norm"]) for r in table}
    assert norms[(2, 0)] == pytest.approx(0.39894, abs=5e-5)
    assert norms[(8, 0)] == pytest.approx(41.88894, abs=5e-5)
    vals = run(tmp_path, "hermite", "--n", "2", "--grid", "0:0:1")
    assert float(vals[0]["value"]) == pytest.approx(-1 / math.sqrt(2 * math.pi))
    kern = run(tmp_path, "kernel", "--kind", "r", "--z", "0", "--lam", "1", "--grid", "0:3:0.5", "--deriv", "3")
    # derivative 3 is undefined at the knots 0, 1, 2, 3
    assert [float(r["x"]) for r in kern] == [0.5, 1.5, 2.5]


def test_config_file(tmp_path, two_by_two):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# defaults\nmatrix = {two_by_two}\nstandardized = true\nformat = json\n")
    out = tmp_path / "o.json"
    assert main(["dist", "--config", str(cfg), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["atoms"] == [[-1.0, 0.5], [1.0, 0.5]]
    # flags win over the file
    assert main(["dist", "--config", str(cfg), "--format", "csv", "--out", str(out)]) == 0
    assert out.read_text().startswith("value,prob,cdf")
    cfg.write_text("bogus = 1\n")
    assert main(["dist", "--config", str(cfg)]) == 2


def test_exit_codes(tmp_path, capsys):
    assert main(["dist", "--matrix", str(tmp_path / "missing.txt")]) == 3
    assert "error" in capsys.readouterr().err
    flat = tmp_path / "flat.txt"
    flat.write_text("1 1\n1 1\n")
    assert main(["diagnose", "--matrix", str(flat)]) == 4
    big = tmp_path / "big.txt"
    np.savetxt(big, np.random.default_rng(0).normal(size=(11, 11)))
    assert main(["dist", "--matrix", str(big)]) == 5
    assert main(["dist", "--matrix", str(big), "--cutoff", "12"]) == 5
    assert main(["convergence", "--fn", "wilcoxon", "--n-list", ""]) == 2
    assert main(["edgeworth", "--fn", "wilcoxon", "--n", "5", "--grid", "1:0:1"]) == 2
    assert main(["dist"]) == 2
    assert main(["nonsense"]) == 2
    assert main(["dist", "--matrix", str(flat), "--draws", "0", "--method", "mc"]) == 2
    ragged = tmp_path / "ragged.txt"
    ragged.write_text("1 2\n3\n")
    assert main(["dist", "--matrix", str(ragged)]) == 3


def test_module_entry_point(tmp_path, two_by_two):
    res = subprocess.run(
        [sys.executable, "-m", "rankedge", "dist", "--matrix", two_by_two],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0
    assert res.stdout.splitlines() == ["value,prob,cdf", "0,0.5,0.5", "2,0.5,1"]
