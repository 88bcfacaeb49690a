import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from lagmce.cli import emit_plots, main
from lagmce.errors import FieldFormatError
from lagmce.fields import Grid, ScalarField, read_field, write_field


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({
        "domain": {"lo": [-1, -1], "hi": [1, 1]}, "resolution": 17,
        "phase": {"kind": "constant", "value": float(np.pi / 2)},
        "boundary": {"kind": "expr", "expr": "0.5*(x1**2 + x2**2)"},
    }))
    return p


def test_solve_writes_field_and_log(cfg, tmp_path):
    out, log = tmp_path / "u.csv", tmp_path / "log.json"
    assert main(["solve", "--config", str(cfg), "--out", str(out), "--log", str(log)]) == 0
    u = read_field(out)
    assert np.allclose(u.values, 0.5 * np.sum(u.grid.points**2, axis=-1), atol=1e-9)
    assert json.loads(log.read_text())["residual_sup"] <= 1e-9


def test_solve_with_csv_phase(tmp_path):
    g = Grid.cube(2, 17)
    write_field(tmp_path / "theta.csv", ScalarField(g, 1.2 + 0.1 * g.points[..., 0]))
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({
        "domain": {"lo": [-1, -1], "hi": [1, 1]}, "resolution": 17,
        "phase": {"kind": "csv", "path": "theta.csv"},
        "boundary": {"kind": "expr", "expr": "0.4*x1**2 + 0.6*x2**2"},
    }))
    assert main(["solve", "--config", str(p), "--out", str(tmp_path / "u.csv")]) == 0


def test_usage_errors_exit_2(cfg, tmp_path):
    assert main(["solve", "--config", str(tmp_path / "missing.json"), "--out", "x.csv"]) == 2
    assert main(["nonsense"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"domain": {}}')
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "u.csv")]) == 2


def test_domain_error_exit_1(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({
        "domain": {"lo": [-1, -1, -1], "hi": [1, 1, 1]}, "resolution": 9,
        "phase": {"kind": "constant", "value": 0.5},
        "boundary": {"kind": "expr", "expr": "x1**2"},
    }))
    assert main(["solve", "--config", str(p), "--out", str(tmp_path / "u.csv")]) == 1
    assert "SubcriticalPhase" in capsys.readouterr().err


def test_rotate_and_geometry(cfg, tmp_path):
    u = tmp_path / "u.csv"
    main(["solve", "--config", str(cfg), "--out", str(u)])
    assert main(["rotate", "--in", str(u), "--out", str(tmp_path / "ub.csv"), "--beta", "0.2,0.2"]) == 0
    ub = read_field(tmp_path / "ub.csv")
    assert np.allclose(ub.values, np.tan(np.pi / 4 - 0.2) * ub.grid.points, atol=1e-8)
    assert main(["rotate", "--in", str(u), "--out", str(tmp_path / "ub.csv"), "--beta", "0.2"]) == 2
    assert main(["geometry", "--in", str(u), "--out", str(tmp_path / "geo.csv")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "geo.csv")))
    assert rows and all(abs(float(r["v"]) - 2.0) < 1e-8 for r in rows)
    assert main(["geometry", "--expr", "x1**2", "--out", str(tmp_path / "g2.csv")]) == 2


def test_counterexample_and_plot(tmp_path):
    d = tmp_path / "ce"
    assert main(["counterexample", "--eps", "0.2,0.05", "--grid", "21", "--out-dir", str(d)]) == 0
    rows = list(csv.DictReader(open(d / "blowup.csv")))
    assert [float(r["eps"]) for r in rows] == [0.2, 0.05]
    script = emit_plots(d / "radial_eps0.05.csv")
    assert script.exists() and "matplotlib" in script.read_text()
    bad = tmp_path / "x.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(FieldFormatError):
        emit_plots(bad)
    assert main(["plot", "--csv", str(bad)]) == 2


def test_verify_exit_codes(tmp_path):
    rep = tmp_path / "r.json"
    assert main(["verify", "--suite", "lambda", "--n", "3", "--samples", "2000", "--report", str(rep)]) == 0
    assert json.loads(rep.read_text())["passed"] is True
    # the volume slope check fails by design on the quadratic family
    assert main(["verify", "--suite", "volume"]) == 1


def test_scan_csv(tmp_path):
    out = tmp_path / "scan.csv"
    assert main(["scan", "--lambdas", "0,1", "--resolutions", "9,17", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 4 and rows[1]["drift"]


def test_threads_env(monkeypatch, tmp_path):
    monkeypatch.setenv("LAGMCE_THREADS", "1")
    assert main(["verify", "--suite", "lambda", "--n", "3", "--samples", "500"]) == 0
    import os
    assert os.environ["OMP_NUM_THREADS"] == "1"


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "lagmce.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "counterexample" in r.stdout


def test_reruns_are_byte_identical(cfg, tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        d.mkdir()
        main(["--threads", "1", "solve", "--config", str(cfg), "--out", str(d / "u.csv"), "--log", str(d / "l.json")])
        main(["verify", "--suite", "lambda", "--n", "3", "--samples", "1000", "--seed", "7",
              "--report", str(d / "r.json")])
        main(["counterexample", "--eps", "0.1", "--grid", "11", "--out-dir", str(d)])
        outs.append([(d / f).read_bytes() for f in ("u.csv", "l.json", "blowup.csv", "radial_eps0.1.csv")])
    assert outs[0] == outs[1]
    # the lambda report carries a wall-clock field only in memory, not on disk
    assert b"seconds" not in (tmp_path / "run0" / "r.json").read_bytes()


def test_inputs_not_mutated(cfg, tmp_path):
    before = cfg.read_bytes()
    main(["solve", "--config", str(cfg), "--out", str(tmp_path / "u.csv")])
    assert cfg.read_bytes() == before
