import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from fman.cli import run

MODELS = Path(__file__).resolve().parents[1] / "models"
REPORT_KEYS = {"check", "items", "verdict", "point", "order", "tolerance", "convention_notes"}


def _json(capsys, argv, code=0):
    assert run(argv) == code
    return json.loads(capsys.readouterr().out)


def test_validate(capsys):
    out = _json(capsys, ["validate", "--example", "twocomponent", "--point", "0.3,0.7"])
    assert out["verdict"] and [r["check"] for r in out["reports"]] == ["algebra_axioms", "cyclicity"]
    for r in out["reports"]:
        assert REPORT_KEYS <= set(r) and set(r) <= REPORT_KEYS | {"info"}
        assert all(set(i) == {"name", "residual"} for i in r["items"])


def test_curvature_3rc(capsys):
    out = _json(capsys, ["curvature", "--example", "twocomponent", "--point", "0.3,0.7", "--check-3rc"])
    rep = out["reports"][0]
    assert rep["check"] == "three_rc" and rep["verdict"]
    assert max(i["residual"] for i in rep["items"]) <= 1e-10


def test_obstructions_and_failures(capsys):
    out = _json(capsys, ["curvature", "--example", "nonregular2d", "--obstructions", "--point", "0.1,0.2"])
    assert out["reports"][0]["verdict"]
    # dh-3 with its default flow is not integrable: the 3RC check fails, exit 2
    out = _json(capsys, ["curvature", "--example", "dh-3", "--check-3rc"], code=2)
    assert out["verdict"] is False


def test_hodograph_csv(tmp_path):
    path = tmp_path / "u.csv"
    code = run(["hodograph", "--example", "twocomponent", "--symmetry", "w", "--grid", "0.5:1.5:21,-0.2:0.2:21",
                "--guess", "1,0", "--format", "csv", "--out", str(path), "--halvings", "0"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    assert len(rows) == 441 and all(r["status"] == "converged" for r in rows)
    for r in rows[::37]:
        x, t = float(r["x"]), float(r["t"])
        assert abs(float(r["u1"]) - (math.exp(x + t - 1) - t)) <= 1e-10
        assert abs(float(r["u2"]) - (x + t - 1)) <= 1e-10
    # 17 significant digits round-trip the doubles
    assert all(len(r["x"].replace("-", "").replace(".", "").lstrip("0")) <= 17 for r in rows)


def test_hodograph_json_report(capsys):
    out = _json(capsys, ["hodograph", "--example", "twocomponent", "--symmetry", "w", "--grid", "0.5:1.5:11,-0.2:0.2:11",
                         "--guess", "1,0", "--halvings", "1"])
    checks = {r["check"]: r for r in out["reports"]}
    assert checks["hodograph_newton"]["verdict"] and checks["hodograph_pde"]["verdict"]
    assert len(out["data"]["nodes"]) == 121


def test_symmetry_and_tsarev(capsys):
    out = _json(capsys, ["symmetry", "--example", "twocomponent", "--data", "w_e", "--series-order", "6"])
    assert out["verdict"] and len(out["data"]["coefficients"]) == 2
    out = _json(capsys, ["symmetry", "--example", "twocomponent", "--symmetry", "w"])
    assert out["verdict"]
    out = _json(capsys, ["tsarev", "--example", "twocomponent", "--data", "w_tsarev"])
    assert out["verdict"] and np.allclose(out["data"]["a"], [[0, 1], [0, 0]])
    out = _json(capsys, ["tsarev", "--example", "twocomponent", "--axis-data", "0,1;1,1", "--series-order", "4"])
    assert np.allclose(np.array(out["data"]["cauchy_data"])[1], [1, 1, 0, 0, 0])


def test_metric_and_conserve(capsys):
    out = _json(capsys, ["metric", "--example", "twocomponent", "--point", "0.3,0.7"])
    assert out["verdict"]
    out = _json(capsys, ["metric", "--model", str(MODELS / "poincare.toml"), "--affinor", "I:-1"], code=2)
    checks = {r["check"]: r["verdict"] for r in out["reports"]}
    assert checks["nonlocal_conditions"] and checks["invariance"] and not checks["dubrovin_novikov"]
    out = _json(capsys, ["conserve", "--example", "twocomponent", "--point", "0.3,0.7"])
    assert out["verdict"]


def test_text_and_csv_formats(capsys):
    assert run(["connection", "--example", "twocomponent", "--format", "text"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("connection on twocomponent: PASS")
    assert run(["validate", "--model", str(MODELS / "nonregular2d.toml"), "--format", "csv"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["check", "item", "residual", "tolerance", "verdict"] and len(rows) == 6


def test_usage_errors(capsys):
    assert run([]) == 1
    assert run(["validate"]) == 1
    assert run(["validate", "--example", "twocomponent", "--model", "x.toml"]) == 1
    assert run(["validate", "--example", "nope"]) == 1
    assert run(["validate", "--example", "twocomponent", "--point", "1,2,3"]) == 1
    assert run(["validate", "--model", "/nonexistent/model.toml"]) == 1
    assert run(["hodograph", "--example", "twocomponent", "--grid", "0:1:0,0:1:3", "--symmetry", "w"]) == 1
    assert run(["conserve", "--example", "onedim"]) == 1
    err = capsys.readouterr().err
    assert "error" in err


def test_example_list_and_entry_point(capsys):
    assert run(["example-list"]) == 0
    assert "twocomponent" in capsys.readouterr().out
    proc = subprocess.run([sys.executable, "-m", "fman.cli", "validate", "--example", "onedim"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["verdict"]
