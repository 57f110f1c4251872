import json
from importlib import resources

import jsonschema
import pytest
from conftest import DATA

import oracles
from fuzzydid.cli import run
from fuzzydid.simulate import DgpConfig, sample

SCHEMA = json.loads(resources.files("fuzzydid").joinpath("report_schema.json").read_text())
TOY = str(DATA / "toy16.csv")


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    if code == 0 and "--format" not in argv:
        jsonschema.validate(json.loads(out), SCHEMA)
    return code, out, err


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rows = oracles.unstable_toy()
    (root / "unstable.csv").write_text("y,d,g,t\n" + "".join(f"{y},{d},{g},{t}\n" for y, d, g, t in rows))
    cfg = DgpConfig(n=3000, periods=(0, 1, 2), thresholds=((0.6, 0.6, 0.6), (0.7, 0.7, 0.3)),
                    a=1.0, rho=0.5)
    sample(cfg, 0).to_frame().to_csv(root / "three.csv", index=False)
    cfg = DgpConfig(n=6000, groups=(0, 1, 2, 3),
                    thresholds=((0.6, 0.6), (0.7, 0.3), (0.6, 0.6), (0.3, 0.7)), a=1.0, rho=0.5)
    sample(cfg, 0).to_frame().to_csv(root / "multi.csv", index=False)
    (root / "dgp.cfg").write_text("n = 2000\nthresholds = 0.6, 0.6; 0.7, 0.3\na = 1.0\nrho = 0.5\n")
    return root


def test_estimate_toy(capsys):
    code, out, _ = _run(capsys, "estimate", "--input", TOY, "--estimator", "all", "--bootstrap", "0")
    assert code == 0
    rep = json.loads(out)
    points = {e["kind"]: e["point"] for e in rep["estimates"]}
    assert points == {"did": 28.0, "tc": 29.0, "cic": 30.0}
    assert rep["design"]["decomposition"]["alpha"] == 1.0
    assert rep["runspec"]["command"] == "estimate"


def test_estimate_unstable_tc_routes_to_bounds(capsys, files):
    code, _, err = _run(capsys, "estimate", "--input", str(files / "unstable.csv"), "--estimator", "tc",
                        "--bootstrap", "0")
    assert code == 2
    assert "use `bounds`" in err and "estimators" in err


def test_estimate_unstable_all_skips(capsys, files):
    code, out, _ = _run(capsys, "estimate", "--input", str(files / "unstable.csv"), "--bootstrap", "0")
    assert code == 0
    rep = json.loads(out)
    assert [e["kind"] for e in rep["estimates"]] == ["did"]
    assert any("tc skipped" in n for n in rep["notes"])


def test_bounds_command(capsys, files):
    code, out, _ = _run(capsys, "bounds", "--input", str(files / "unstable.csv"), "--support", "0,30")
    rep = json.loads(out)
    assert code == 0
    got = {b["method"]: (b["lower"], b["upper"]) for b in rep["bounds"]}
    assert got == {"tc": (15.75, 32.25), "cic": (19.5, 25.0)}
    code, _, err = _run(capsys, "bounds", "--input", str(files / "unstable.csv"), "--support", "5,30")
    assert code == 2 and "bounds" in err


def test_placebo_and_classify(capsys, files, tmp_path):
    code, out, _ = _run(capsys, "placebo", "--input", str(files / "three.csv"), "--bootstrap", "29")
    assert code == 0 and json.loads(out)["placebo"]["pair"] == [0, 1]
    mp = tmp_path / "map.csv"
    code, out, _ = _run(capsys, "classify", "--input", str(files / "multi.csv"), "--export-map", str(mp))
    assert code == 0
    labels = {r["group"]: r["label"] for r in json.loads(out)["supergroups"]["groups"]}
    assert labels[1] == 1 and labels[3] == -1
    code, out, _ = _run(capsys, "estimate", "--input", str(files / "multi.csv"), "--supergroups", str(mp),
                        "--bootstrap", "0")
    assert code == 0
    assert {e["kind"] for e in json.loads(out)["estimates"]} == {"did", "tc", "cic"}


def test_simulate(capsys, files):
    code, out, _ = _run(capsys, "simulate", "--config", str(files / "dgp.cfg"), "--reps", "3")
    assert code == 0
    rep = json.loads(out)
    assert rep["mc"]["reps"] == 3
    assert set(rep["mc"]["estimators"]) == {"did", "tc", "cic"}


def test_byte_identical(capsys, files):
    argv = ["estimate", "--input", str(files / "three.csv"), "--stable-tol", "0.05", "--bootstrap", "29",
            "--quantiles", "0.5", "--seed", "4"]
    _, a, _ = _run(capsys, *argv)
    _, b, _ = _run(capsys, *argv)
    assert a == b


def test_output_file_and_table(capsys, tmp_path):
    out = tmp_path / "r.json"
    assert run(["estimate", "--input", TOY, "--bootstrap", "0", "--output", str(out)]) == 0
    jsonschema.validate(json.loads(out.read_text()), SCHEMA)
    code, text, _ = _run(capsys, "estimate", "--input", TOY, "--bootstrap", "0", "--format", "table")
    assert code == 0 and "cic" in text and "30" in text


@pytest.mark.parametrize("argv", [
    ["estimate"],
    ["estimate", "--input", TOY, "--estimator", "xyz"],
    ["estimate", "--input", TOY, "--quantiles", "0.5,1.5"],
    ["estimate", "--input", TOY, "--bootstrap", "1"],
    ["bounds", "--input", TOY, "--support", "3"],
    ["nonsense"],
])
def test_usage_errors(capsys, argv):
    assert run(argv) == 1


def test_data_errors_exit_2(capsys, tmp_path):
    assert run(["estimate", "--input", str(tmp_path / "missing.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("y,d,g,t\n1,0,0,0\n2,-1,0,1\n")
    assert run(["estimate", "--input", str(bad)]) == 2
    assert "row 2" in capsys.readouterr().err
