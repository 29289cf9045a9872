import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from skipcor import cli


@pytest.fixture
def data(tmp_path):
    X = np.random.default_rng(12).normal(size=(30, 3))
    X[:, 1] += X[:, 0]
    path = tmp_path / "d.csv"
    path.write_text("y,b,c\n" + "".join(",".join(repr(float(v)) for v in row) + "\n" for row in X))
    return path


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestCommands:
    def test_detect(self, tmp_path, capsys):
        rows = "".join(f"{x},{y}\n" for x, y in np.random.default_rng(0).normal(size=(20, 2)))
        path = tmp_path / "o.csv"
        path.write_text("x,y\n" + rows + "100,100\n")
        code, out, _ = run(["detect", path, "--format", "json"], capsys)
        doc = json.loads(out)
        assert code == 0 and 21 in doc["flagged"]
        code, out, _ = run(["detect", path], capsys)
        assert out.splitlines()[-1] == "21,1"

    def test_corr(self, data, capsys):
        code, out, _ = run(["corr", data, "--estimator", "spearman"], capsys)
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[0] == ["", "y", "b", "c"] and float(rows[1][1]) == 1.0

    @pytest.mark.parametrize("method", ["ss", "sp", "h"])
    def test_test_deterministic(self, data, capsys, method):
        argv = ["test", data, "--method", method, "--seed", 3, "--B", 100]
        a = run(argv, capsys)[1]
        b = run(argv, capsys)[1]
        assert a == b
        head = json.loads(a.splitlines()[0])
        assert head["record"] == "header" and head["seed"] == 3 and head["columns"] == ["y", "b", "c"]

    def test_output_file(self, data, tmp_path, capsys):
        out_path = tmp_path / "r.jsonl"
        code, out, _ = run(["test", data, "--method", "h", "--B", 100, "-o", out_path], capsys)
        assert code == 0 and out.startswith("method H")
        assert json.loads(out_path.read_text().splitlines()[0])["method"] == "H"

    def test_ecp_needs_table(self, data, tmp_path, capsys):
        cache = tmp_path / "cache"
        code, _, err = run(["--cache-dir", cache, "test", data, "--method", "ecp"], capsys)
        assert code == 2 and "skipcor calibrate --mode pairwise" in err and len(err.splitlines()) == 1
        code, out, _ = run(["--cache-dir", cache, "calibrate", "--n", 30, "--p", 3, "--D", 20, "--B", 100,
                            "--quiet"], capsys)
        assert code == 0 and "ECP-pairwise-pearson-n30-p3-D20.tbl" in out
        code, out, _ = run(["--cache-dir", cache, "test", data, "--method", "ecp", "--B", 100], capsys)
        head = json.loads(out.splitlines()[0])
        assert code == 0 and head["D"] == 20 and len(head["table_checksums"]) == 1

    def test_calibrate_then_l3(self, data, tmp_path, capsys):
        cache = tmp_path / "cache"
        code, out, _ = run(["--cache-dir", cache, "calibrate", "--preset", "h1", "--D", 10, "--B", 50, "--quiet"],
                           capsys)
        assert code == 0 and len(out.splitlines()) == 4
        argv = ["--cache-dir", cache, "regtest", data, "--method", "l3", "--dependent", "y", "--B", 100]
        code, out, _ = run(argv, capsys)
        assert code == 0
        recs = [json.loads(ln) for ln in out.splitlines()]
        assert recs[0]["method"] == "L3" and [r["label"] for r in recs[1:]] == ["y ~ b", "y ~ c"]
        assert run(argv, capsys)[1] == out
        # cached tables are reused rather than rebuilt
        again = run(["--cache-dir", cache, "calibrate", "--preset", "h1", "--D", 10, "--B", 50, "--quiet"], capsys)[1]
        assert len(again.splitlines()) == 4 and len(list(cache.iterdir())) == 4

    def test_simulate(self, tmp_path, capsys):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"defaults": {"n": 20, "p": 2, "R": 100},
                                    "scenarios": [{"name": "a", "method": "NONE"}, {"name": "b", "method": "OUT"}]}))
        code, out, _ = run(["simulate", "--scenario", path, "--only", "a", "--quiet"], capsys)
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and [r["alpha"] for r in rows] == ["0.05", "0.025", "0.01"]
        assert {r["name"] for r in rows} == {"a"}


class TestErrors:
    @pytest.mark.parametrize("argv,match", [
        (["test", "missing.csv", "--method", "ss"], "missing.csv"),
        (["test", "x.csv", "--method", "zz"], "invalid choice"),
        (["frobnicate"], "invalid choice"),
        (["calibrate", "--n", "20"], "--n and --p"),
    ])
    def test_one_line(self, argv, match, capsys):
        code, _, err = run(argv, capsys)
        assert code == 2 and match in err and len(err.strip().splitlines()) == 1
        assert err.startswith("skipcor: error:")

    def test_bad_csv(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1,2\n3,oops\n4,5\n")
        code, _, err = run(["corr", path], capsys)
        assert code == 2 and "line 3, column 2" in err

    def test_no_partial_output(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1,2\n")
        out_path = tmp_path / "r.jsonl"
        code, _, _ = run(["test", path, "--method", "h", "-o", out_path], capsys)
        assert code == 2 and not any(p.name.startswith((".r.jsonl", "r.jsonl")) for p in tmp_path.iterdir())

    def test_dropped_rows_warning(self, tmp_path, capsys):
        path = tmp_path / "m.csv"
        rows = np.random.default_rng(4).normal(size=(12, 2))
        path.write_text("x,y\n" + "".join(f"{a},{b}\n" for a, b in rows) + "NA,1\n")
        code, out, err = run(["test", path, "--method", "h", "--B", 100], capsys)
        assert code == 0 and "1 row dropped" in err
        assert "1 row dropped" in json.loads(out.splitlines()[0])["warnings"]


def test_entry_point():
    res = subprocess.run([sys.executable, "-m", "skipcor.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("skipcor ")
