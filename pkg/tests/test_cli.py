from __future__ import annotations

import json
import shutil
import subprocess

import numpy as np
import pytest

from delaycrn.cli import main, parse_grid, read_csv
from delaycrn.equilibria import equilibrium_set_residual
from delaycrn.modelfile import parse_model

X_DELAYED = (-1 + 41**0.5) / 4
CARDANO = "1.2599210498948732,1.3247179572447458"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate(capsys):
    code, out, _ = run(capsys, "validate", "example1_massaction")
    assert code == 0
    summary = json.loads(out)
    assert (summary["N"], summary["L"], summary["M"], summary["dim_S"]) == (2, 2, 2, 1)
    np.testing.assert_allclose(summary["S_perp_basis"], [[1 / 5**0.5, 2 / 5**0.5]])


def test_balance_exit_codes(capsys):
    code, out, _ = run(capsys, "balance", "example2", "--at", CARDANO)
    assert code == 0
    assert json.loads(out)["passed"]
    code, out, _ = run(capsys, "balance", "example1_massaction", "--at", "1,1")
    assert code == 1
    report = json.loads(out)
    assert report["complexes"][1] == {"complex": "X2", "inflow": 1.0, "outflow": 2.0, "residual": -1.0}


def test_equilibrium(capsys):
    code, out, _ = run(capsys, "equilibrium", "example1_massaction", "--history", "1,1")
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["x"], [X_DELAYED, X_DELAYED**2 / 2], atol=1e-12)
    code, out, _ = run(capsys, "equilibrium", "example3", "--history", "near")
    assert code == 0


def test_simulate_then_lyapunov(capsys, tmp_path):
    traj_csv = tmp_path / "traj.csv"
    code, _, _ = run(capsys, "simulate", "example1_massaction", "--history", "1,1", "--t-end", "50", "--dt", "0.001",
                     "--out", str(traj_csv))
    assert code == 0
    header, data = read_csv(traj_csv)
    assert header == ["t", "X1", "X2"]
    assert data.shape == (50001, 3)
    assert np.abs(data[-1, 1:] - [X_DELAYED, X_DELAYED**2 / 2]).max() <= 1e-4

    v_csv = tmp_path / "v.csv"
    code, out, _ = run(capsys, "lyapunov", "example1_massaction", "--reference", "2,2", "--traj", str(traj_csv),
                       "--history", "1,1", "--out", str(v_csv))
    assert code == 0
    header, v = read_csv(v_csv)
    assert header == ["t", "V"]
    assert np.all(np.diff(v[:, 1]) <= 1e-8 * (1 + v[:-1, 1]))
    assert json.loads(out)["passed"]


def test_lyapunov_simulates_when_no_traj(capsys, tmp_path):
    code, out, _ = run(capsys, "lyapunov", "example3", "--history", "near", "--t-end", "10", "--dt", "0.01",
                       "--relative-to-class", "--out", str(tmp_path / "v.csv"))
    assert code == 0
    report = json.loads(out)
    assert report["final"] < report["initial"]


def test_lyapunov_unbalanced_reference_fails(capsys, tmp_path):
    code, out, _ = run(capsys, "lyapunov", "example1_massaction", "--reference", "1,1", "--history", "1,1",
                       "--t-end", "1", "--dt", "0.01")
    assert code == 1
    assert not json.loads(out)["valid"]


def test_csv_byte_stable(capsys, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        run(capsys, "simulate", "example2", "--history", "1,1", "--t-end", "5", "--dt", "0.01", "--out", str(p))
    raw = paths[0].read_bytes()
    assert raw == paths[1].read_bytes()
    assert b"\r" not in raw
    first = raw.split(b"\n")[1].split(b",")
    assert all(float(v) == float(v.decode()) for v in first)


def test_simulate_every(capsys, tmp_path):
    out = tmp_path / "t.csv"
    run(capsys, "simulate", "example1_massaction", "--history", "1,1", "--t-end", "1", "--dt", "0.01",
        "--every", "30", "--out", str(out))
    _, data = read_csv(out)
    np.testing.assert_allclose(data[:, 0], [0.0, 0.3, 0.6, 0.9, 1.0], atol=1e-12)


def test_phase(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("CRN_THREADS", "2")
    out = tmp_path / "phase"
    code, stdout, _ = run(capsys, "phase", "example1_massaction", "--grid", "0.5:2:2,0.5:2:2", "--t-end", "20",
                          "--dt", "0.01", "--every", "10", "--out", str(out))
    assert code == 0
    assert sorted(p.name for p in out.glob("traj_*.csv")) == [f"traj_{i:03d}.csv" for i in range(4)]
    model = parse_model("example1_massaction")
    net = model.network()
    _, eq = read_csv(out / "equilibria.csv")
    _, locus = read_csv(out / "locus.csv")
    for x in list(eq[:, 3:]) + list(locus[:, 2:]):
        assert equilibrium_set_residual(net, model.reference, x) <= 1e-8
    assert json.loads(stdout)["max_final_distance_to_class_equilibrium"] < 1e-3


def test_contour(capsys, tmp_path):
    out = tmp_path / "grid.csv"
    code, _, _ = run(capsys, "contour", "example3", "--plane", "total=3,n=12", "--out", str(out))
    assert code == 0
    header, grid = read_csv(out)
    assert header == ["x1", "x2", "V_point", "V_LK"]
    assert np.all(grid[:, 3] >= grid[:, 2]) and np.all(grid[:, 2] >= 0)
    _, eqs = read_csv(tmp_path / "grid_equilibria.csv")
    model = parse_model("example3")
    for x in eqs[:, 1:]:
        assert equilibrium_set_residual(model.network(), model.reference, x) <= 1e-8
    assert eqs[0, 1:].sum() == pytest.approx(3.0, abs=1e-10)


def test_contour_requires_three_species(capsys, tmp_path):
    code, _, err = run(capsys, "contour", "example2", "--out", str(tmp_path / "g.csv"))
    assert code == 2
    assert json.loads(err)["error"] == "UsageError"


@pytest.mark.parametrize("argv, code", [
    (["balance", "nope", "--at", "1"], 2),
    (["balance", "example2", "--at", "1,x"], 2),
    (["simulate", "example2", "--history", "1,1"], 2),
    (["simulate", "example1_massaction", "--history", "1,1", "--t-end", "1", "--dt", "0.9"], 2),
    (["simulate", "example1_massaction", "--history", "20,1", "--t-end", "2", "--dt", "0.5"], 3),
    (["frobnicate"], 2),
])
def test_error_exit_codes(capsys, argv, code):
    got, out, err = run(capsys, *argv)
    assert got == code
    payload = json.loads(err)
    assert payload["exit_code"] == code and payload["message"]


def test_bad_model_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"species": [{"name": "A"}], "reactions": []}')
    code, _, err = run(capsys, "validate", str(bad))
    assert code == 2
    assert "reactions" in json.loads(err)["message"]


def test_parse_grid():
    axes = parse_grid("1:2:3", 2)
    np.testing.assert_allclose(axes[1], [1.0, 1.5, 2.0])
    with pytest.raises(ValueError):
        parse_grid("1:2", 2)


@pytest.mark.skipif(shutil.which("delaycrn") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["delaycrn", "balance", "example2", "--at", CARDANO], capture_output=True, text=True)
    assert proc.returncode == 0
