import csv
import json

import pytest

from hoferlab.cli import _cell, render_csv, run


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_energy_strip_row(tmp_path):
    assert run(["energy", "--out", str(tmp_path), "--no-figures"]) == 0
    (row,) = read_rows(tmp_path / "strip-0.1.csv")
    assert float(row["r"]) == 0.1
    assert 0.1 <= float(row["upper_bound"]) <= 0.125
    assert row["feasible"] == "true"


def test_length_rotation(tmp_path, capsys):
    assert run(["length", "--out", str(tmp_path), "--no-figures"]) == 0
    report = json.loads((tmp_path / "rotation-length.json").read_text())
    assert report["result"]["l_sym"] == pytest.approx(0.7, abs=1e-10)
    assert report["passed"] and report["format"] == "hoferlab-report/1"
    assert "length: " in capsys.readouterr().out


def test_flux_identity_is_zero(tmp_path):
    assert run(["flux", "--out", str(tmp_path), "--no-figures"]) == 0
    (row,) = read_rows(tmp_path / "identity-flux.csv")
    assert row["flux"] == "0 0" and row["flux_norm"] == "0"


def test_csv_is_byte_identical_and_timestamp_isolated(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["hodge", "--out", str(out), "--no-figures"]) == 0
    assert (a / "hodge-demo.csv").read_bytes() == (b / "hodge-demo.csv").read_bytes()
    ja, jb = (json.loads((d / "hodge-demo.json").read_text()) for d in (a, b))
    ja.pop("header"), jb.pop("header")
    assert ja == jb
    assert "timestamp" not in json.dumps(ja)


def test_figures_written(tmp_path):
    assert run(["displace", "--out", str(tmp_path)]) == 0
    pngs = list(tmp_path.glob("*.png"))
    assert pngs and all(p.read_bytes()[:4] == b"\x89PNG" for p in pngs)


def test_numerical_failure_exits_one(tmp_path, capsys):
    sc = tmp_path / "s.yaml"
    sc.write_text("name: slow\ncommand: displace\ngrid: {N: 32, T: 10}\nisotopy: {kind: rotation, v: [0.05, 0]}\n"
                  "region: {kind: strip, axis: 1, width: 0.1}\nmargin: 0.0625\nexpect: true\n")
    assert run(["displace", str(sc), "--out", str(tmp_path), "--no-figures"]) == 1
    assert "FAIL" in capsys.readouterr().err
    assert json.loads((tmp_path / "slow.json").read_text())["passed"] is False


def test_precondition_failure_is_recorded(tmp_path):
    sc = tmp_path / "c.yaml"
    sc.write_text("name: weak-h\ncommand: commutator-lab\ngrid: {N: 32, T: 20}\n"
                  "region: {kind: ball, center: [0.5, 0.5], radius: 0.2}\nh: {kind: rotation, v: [0.1, 0.0]}\n"
                  "a: [0.42, 0.5]\nb: [0.58, 0.5]\nc: [0.5, 0.58]\nmargin: 0.0625\n")
    assert run(["commutator-lab", str(sc), "--out", str(tmp_path), "--no-figures"]) == 1
    report = json.loads((tmp_path / "weak-h.json").read_text())
    assert "error" in report["result"]


@pytest.mark.parametrize("argv", [
    ["hodge", "--margin", "0.1"],
    ["displace", "--margin", "-1"],
    ["hodge", "--grid", "15"],
    ["hodge", "--workers", "0"],
    ["hodge", "/nonexistent/file.yaml"],
])
def test_usage_errors_exit_two(tmp_path, argv, capsys):
    assert run(argv + ["--out", str(tmp_path), "--no-figures"]) == 2
    assert "error" in capsys.readouterr().err


def test_schema_error_names_file_and_line(tmp_path, capsys):
    sc = tmp_path / "bad.yaml"
    sc.write_text("command: flux\nisotopy: {kind: identity}\ncolour: red\n")
    assert run(["flux", str(sc), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert f"{sc}:3" in err and "colour" in err


def test_scenario_command_mismatch(tmp_path):
    sc = tmp_path / "f.yaml"
    sc.write_text("command: flux\nisotopy: {kind: identity}\n")
    assert run(["length", str(sc), "--out", str(tmp_path)]) == 2


def test_csv_cells():
    assert _cell(-0.0) == "0"
    assert _cell(True) == "true"
    assert _cell([0.5, 1]) == "0.5 1"
    assert _cell(None) == ""
    assert render_csv(["a", "b"], [[1, "x,y"]]) == 'a,b\n1,"x,y"\n'
