import json
import os

import pytest

from submetrylab.cli import diff_documents, main


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def read(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def test_catalog(capsys):
    code, out, _ = run(["catalog"], capsys)
    assert code == 0
    assert "s3-hopf" in out and "euler-identity" in out and "s2-zonal: z" in out
    assert run(["catalog"], capsys)[1] == out


def test_euler_experiment(tmp_path, capsys):
    code, out, _ = run(["run", "euler-identity", "--phi", "pi/4", "--N", "2000", "--out", str(tmp_path)], capsys)
    assert code == 0 and "PASS euler-identity" in out
    doc = read(tmp_path / "euler-identity.json")
    (rep,) = doc["reports"]
    assert rep["phi"] == pytest.approx(0.7853981633974483)
    assert rep["raw_residual"] <= 1e-3 and rep["accelerated_residual"] <= 1e-8
    assert doc["seed"] == read(tmp_path / "summary.json")["experiments"][0]["seed"]


def test_avg_commute_exact_zero(tmp_path, capsys):
    code, _, _ = run(["run", "avg-commute", "--case", "s2-latitude", "--degree", "6", "--out", str(tmp_path)],
                     capsys)
    assert code == 0
    (rep,) = read(tmp_path / "avg-commute.json")["reports"]
    assert rep["exact_zero"] and rep["max_residual"] == 0.0 and rep["functions"] == 84


def test_closure_failure_names_residual(tmp_path, capsys):
    code, out, _ = run(["run", "closure", "--algebra", "z^3", "--out", str(tmp_path)], capsys)
    assert code == 1 and "FAIL closure" in out
    (rep,) = read(tmp_path / "closure.json")["reports"]
    assert not rep["pass"] and rep["residual"] == "-6 z"


def test_usage_errors(tmp_path, capsys):
    assert run(["run", "no-such-experiment", "--out", str(tmp_path)], capsys)[0] == 2
    assert run(["run", "latitude-trace", "--grid", "0", "--out", str(tmp_path)], capsys)[0] == 2
    assert run(["run", "euler-identity", "--bogus", "1", "--out", str(tmp_path)], capsys)[0] == 2
    assert run(["frobnicate"], capsys)[0] == 2


def test_baseline_cycle(tmp_path, capsys):
    out = tmp_path / "bundle"
    assert run(["run", "latitude-trace", "--grid", "3", "--out", str(out)], capsys)[0] == 0
    base = tmp_path / "base.json"
    assert run(["baseline", str(out), str(tmp_path / "missing.json")], capsys)[0] == 2
    assert run(["baseline", str(out), str(base), "--init"], capsys)[0] == 0
    code, text, _ = run(["baseline", str(out), str(base)], capsys)
    assert code == 0 and "0 drifted" in text

    path = out / "latitude-trace.json"
    doc = read(path)
    doc["reports"][1]["trace_series_accel"] += 1e-3
    path.write_text(json.dumps(doc))
    code, text, _ = run(["baseline", str(out), str(base)], capsys)
    assert code == 1
    assert "latitude-trace.json.reports[1].trace_series_accel" in text


def test_diff_documents_tolerances():
    assert diff_documents({"a": 1.0}, {"a": 1.0 + 1e-12}) == []
    assert diff_documents({"a": 1.0}, {"a": 1.1}) == ["a: 1.0 -> 1.1"]
    assert diff_documents({"a": 1.0}, {"a": 1.1}, field_tols={"a": 0.2}) == []
    assert diff_documents({"a": "x"}, {"a": "y"}) == ["a: 'x' -> 'y'"]
    assert diff_documents({"a": [1, 2]}, {"a": [1]}) == ["a: length 2 -> 1"]
    assert diff_documents({}, {"b": 1}) == ["b: added"]


def test_repeated_runs_are_byte_identical(tmp_path, capsys):
    for name in ("one", "two"):
        assert run(["run", "separation", "--out", str(tmp_path / name)], capsys)[0] == 0
    files = sorted(os.listdir(tmp_path / "one"))
    assert files == sorted(os.listdir(tmp_path / "two"))
    for f in files:
        assert (tmp_path / "one" / f).read_bytes() == (tmp_path / "two" / f).read_bytes()


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nseed = 7\n\n[euler-identity]\nphi = pi/3\nN = 100\nraw_tol = 1e-1\n")
    out = tmp_path / "out"
    code, _, _ = run(["run", "euler-identity", "--config", str(cfg), "--N", "500", "--out", str(out)], capsys)
    assert code == 0
    doc = read(out / "euler-identity.json")
    assert doc["seed"] == 7
    assert doc["params"]["N"] == 500
    assert doc["params"]["phi"] == [pytest.approx(1.0471975511965976)]

    bad = tmp_path / "bad.ini"
    bad.write_text("[nonsense]\nx = 1\n")
    assert run(["run", "euler-identity", "--config", str(bad), "--out", str(out)], capsys)[0] == 2
