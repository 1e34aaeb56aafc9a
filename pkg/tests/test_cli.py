import csv
import json
import os
from pathlib import Path

import jsonschema
import pytest

from fuplab import cli

SCHEMAS = Path(__file__).resolve().parents[1] / "docs" / "schemas"


def validate(path, schema):
    obj = json.loads(Path(path).read_text())
    jsonschema.validate(obj, json.loads((SCHEMAS / f"{schema}.schema.json").read_text()))
    return obj


JSON_CASES = [
    ("cantor", ["cantor", "--M", "3", "--alphabet", "0,2", "--k", "2", "--N", "12"]),
    ("regularity", ["regularity", "--M", "3", "--alphabet", "0,2", "--k", "4"]),
    ("tree", ["tree", "--M", "3", "--alphabet", "0,2", "--k", "5", "--L", "3"]),
    ("norm", ["norm", "--M", "3", "--alphabet", "0,2", "--k", "4"]),
    ("bounds", ["bounds", "--delta", "0.5", "--deltap", "0.5", "--CR", "1"]),
    ("localize", ["localize", "--M", "3", "--alphabet", "0,2", "--N", "27", "--nu", "2"]),
]


@pytest.mark.parametrize("schema,argv", JSON_CASES)
def test_json_outputs_validate_and_are_reproducible(tmp_path, schema, argv):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.run(argv + ["--out", str(a)]) == 0
    assert cli.run(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    validate(a, schema)


def test_cantor_example_members(tmp_path):
    out = tmp_path / "c.json"
    assert cli.run(["cantor", "--M", "3", "--alphabet", "2,0", "--k", "2", "--N", "12", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["members"] == [0, 3, 8, 11]


def test_bounds_values(tmp_path):
    out = tmp_path / "b.json"
    cli.run(["bounds", "--delta", "0.5", "--deltap", "0.5", "--CR", "1", "--out", str(out)])
    obj = json.loads(out.read_text())
    assert obj["log10_eps0"] == pytest.approx(-447.3408, abs=1e-4)


def test_default_output_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    assert cli.run(["norm", "--M", "3", "--alphabet", "0,2", "--k", "3"]) == 0
    assert (tmp_path / "norm_M3_k3_N27.json").exists()


def test_decay_csv_and_gnuplot(tmp_path):
    out = tmp_path / "d.csv"
    argv = ["decay", "--M", "3", "--alphabet", "0,2", "--k", "1..4", "--gnuplot", "--out", str(out)]
    assert cli.run(argv) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 5
    first = dict(zip(rows[0], rows[1]))
    assert float(first["norm"]) == pytest.approx(1.0, abs=1e-12)
    gp = (tmp_path / "d.gp").read_text()
    assert "d.csv" in gp and "plot" in gp
    before = out.read_bytes()
    assert cli.run(argv) == 0
    assert out.read_bytes() == before


def test_cascade_writes_csv_and_summary(tmp_path):
    out = tmp_path / "cas.csv"
    argv = ["cascade", "--M", "3", "--alphabet", "0,2", "--k", "6", "--L", "3", "--K", "3", "--out", str(out)]
    assert cli.run(argv) == 0
    summary = validate(tmp_path / "cas.json", "cascade_summary")
    assert summary["status"] in ("conditional", "unconditional")
    rows = list(csv.reader(out.open()))
    assert rows[0] == list(cli.cascade.CascadeRecord.CSV_HEADER)
    assert cli.run(argv[:-2] + ["--K", "9", "--out", str(out)]) == 1


def test_baker_csv(tmp_path):
    out = tmp_path / "bk.csv"
    assert cli.run(["baker", "--M", "3", "--alphabet", "0,2", "--N", "9,27", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert [r[0] for r in rows[1:]] == ["9", "27"]
    assert 0 < float(rows[1][2]) < 1


@pytest.mark.parametrize("argv", [
    ["nope"],
    ["norm", "--M", "3", "--alphabet", "0,3", "--k", "2"],
    ["norm", "--M", "3", "--alphabet", "0,2", "--k", "2", "--bogus"],
    ["cantor", "--M", "3", "--alphabet", "0,2"],
    ["cantor", "--M", "3", "--alphabet", "0,2", "--k", "2", "--N", "13"],
    ["bounds", "--delta", "0", "--deltap", "0.5", "--CR", "1"],
    ["bounds", "--delta", "0.5", "--deltap", "0.5", "--CR", "1", "--M", "3"],
    ["decay", "--M", "3", "--alphabet", "0,2", "--k", "3..1"],
    ["norm", "--M", "3", "--alphabet", "0,2", "--k", "2", "--threads", "0"],
])
def test_invalid_arguments_exit_1(tmp_path, argv, capsys):
    assert cli.run(argv + ["--out", str(tmp_path / "x")] if argv[0] != "nope" else argv) == 1
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_nonconvergence_exit_2(tmp_path):
    argv = ["baker", "--M", "3", "--alphabet", "0,2", "--N", "27", "--tol", "1e-30", "--out", str(tmp_path / "b.csv")]
    assert cli.run(argv) == 2
    assert not (tmp_path / "b.csv").exists()


def test_write_atomic_leaves_no_temporaries(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    cli.write_atomic(str(p), "one\n")
    cli.write_atomic(str(p), "two\n")
    assert p.read_text() == "two\n"
    assert os.listdir(p.parent) == ["f.txt"]


def test_write_atomic_keeps_old_file_on_failure(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("old\n")
    with pytest.raises(TypeError):
        cli.write_atomic(str(p), None)
    assert p.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_parse_helpers():
    assert cli.parse_int_range("1..4") == [1, 2, 3, 4]
    assert cli.parse_int_range("2,3") == [2, 3]
    assert cli.parse_alphabet("2,0,2") == (0, 2)


def test_help_exits_zero(capsys):
    assert cli.run(["--help"]) == 0
    assert "cascade" in capsys.readouterr().out
