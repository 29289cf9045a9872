import json
import math

import numpy as np
import pytest

from skipcor.dataio import (
    IngestError,
    MissingPolicy,
    dumps_report,
    format_report,
    ingest_csv,
    load_scenarios,
    loads_report,
    scenario_csv,
    write_report,
)
from skipcor.inference import BootstrapConfig, test_h as run_h, test_ss_sp as run_ss_sp
from skipcor.errors import SkipcorError


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestIngest:
    def test_listwise(self, tmp_path):
        path = write(tmp_path, "x,y,z\n1,2,3\n4,NA,6\n7,8,9\n10,11,12\n13,14,15\n")
        ds = ingest_csv(path)
        assert ds.names == ["x", "y", "z"] and ds.data.shape == (4, 3)
        assert ds.dropped == 1 and ds.warnings == ["1 row dropped"]
        np.testing.assert_array_equal(ds.data[:, 0], [1, 7, 10, 13])

    @pytest.mark.parametrize("token", ["", "nan", "NULL", ".", "?", "None"])
    def test_missing_tokens(self, tmp_path, token):
        path = write(tmp_path, f"a,b\n1,2\n3,{token}\n5,6\n7,8\n")
        assert ingest_csv(path).n == 3

    def test_fail_policy(self, tmp_path):
        path = write(tmp_path, "x,y,z\n1,2,3\n4,NA,6\n7,8,9\n")
        with pytest.raises(IngestError, match="line 3, column 2 \\(y\\)"):
            ingest_csv(path, missing=MissingPolicy.FAIL)

    def test_empty(self, tmp_path):
        with pytest.raises(IngestError, match="empty"):
            ingest_csv(write(tmp_path, "\n\n"))

    def test_non_numeric(self, tmp_path):
        path = write(tmp_path, "x,y\n1,2\n3,abc\n5,6\n")
        with pytest.raises(IngestError, match="'abc' at line 3, column 2"):
            ingest_csv(path)

    def test_ragged(self, tmp_path):
        with pytest.raises(IngestError, match="line 2 has 3 fields"):
            ingest_csv(write(tmp_path, "x,y\n1,2,3\n"))

    def test_too_small(self, tmp_path):
        with pytest.raises(IngestError, match="2 columns"):
            ingest_csv(write(tmp_path, "x\n1\n2\n3\n"))
        with pytest.raises(IngestError, match="3 usable rows"):
            ingest_csv(write(tmp_path, "x,y\n1,2\n3,NA\n4,5\n"))

    def test_no_header_and_delimiter(self, tmp_path):
        ds = ingest_csv(write(tmp_path, "1;2\n3;4\n5;7\n"), delimiter=";", header=False)
        assert ds.names == ["V1", "V2"] and ds.n == 3

    def test_duplicate_names(self, tmp_path):
        with pytest.raises(IngestError, match="unique"):
            ingest_csv(write(tmp_path, "x,x\n1,2\n3,4\n5,6\n"))

    def test_split_dependent(self, tmp_path):
        ds = ingest_csv(write(tmp_path, "a,b,c\n1,2,3\n4,5,6\n7,8,10\n"))
        y, X, names = ds.split_dependent("b")
        np.testing.assert_array_equal(y, [2, 5, 8])
        assert names == ["a", "c"] and X.shape == (3, 2)
        with pytest.raises(IngestError, match="no column named 'q'"):
            ds.split_dependent("q")


class TestReports:
    def test_round_trip(self):
        X = np.random.default_rng(1).normal(size=(25, 3))
        rep = run_h(X, 0.05, BootstrapConfig(B=100, seed=2))
        text = dumps_report(rep, ["a", "b", "c"])
        back, cols = loads_report(text)
        assert back == rep and cols == ["a", "b", "c"]
        records = [json.loads(ln) for ln in text.splitlines()]
        assert records[0]["record"] == "header" and records[1]["label"] == "a ~ b"

    def test_infinite_statistic(self):
        X = np.random.default_rng(2).normal(size=(20, 2))
        X[:, 1] = X[:, 0]
        rep = run_ss_sp(X, "pearson", cfg=BootstrapConfig(B=100))
        back, _ = loads_report(dumps_report(rep))
        assert math.isinf(back.entries[0].statistic)

    def test_bad_report(self):
        with pytest.raises(SkipcorError):
            loads_report('{"record": "hypothesis"}\n')

    def test_write_and_format(self, tmp_path):
        rep = run_h(np.random.default_rng(3).normal(size=(20, 3)), 0.05, BootstrapConfig(B=100))
        path = tmp_path / "r.jsonl"
        write_report(path, rep)
        assert loads_report(path.read_text())[0] == rep
        assert [p.name for p in tmp_path.iterdir()] == ["r.jsonl"]
        text = format_report(rep, ["a", "b", "c"])
        assert text.startswith("method H") and "b ~ c" in text


class TestScenarios:
    def test_load(self, tmp_path):
        doc = {"defaults": {"n": 20, "p": 4, "R": 200, "g": 0.5},
               "scenarios": [{"name": "x", "method": "SS"}, {"name": "y", "method": "SP", "h": 0.2}]}
        path = write(tmp_path, json.dumps(doc), "s.json")
        a, b = load_scenarios(path)
        assert a.gh.g == 0.5 and a.method.value == "SS" and b.gh.h == 0.2

    @pytest.mark.parametrize("text,match", [("{", "invalid JSON"), ('{"scenarios": []}', "no scenarios"),
                                            ('{"scenarios": [{"n": 20}]}', "scenario 1")])
    def test_errors(self, tmp_path, text, match):
        with pytest.raises(SkipcorError, match=match):
            load_scenarios(write(tmp_path, text, "s.json"))

    def test_bundled_files_parse(self):
        from skipcor.cli import TABLE_FILES, bundled_scenario
        counts = {k: len(load_scenarios(bundled_scenario(v))) for k, v in TABLE_FILES.items()}
        assert counts == {"2": 16, "3": 24, "4": 8, "5": 14}

    def test_csv_columns(self):
        text = scenario_csv([{"name": "a", "estimate": 0.1, "extra": 1}])
        assert text.splitlines()[1].startswith("a,") and "extra" not in text
