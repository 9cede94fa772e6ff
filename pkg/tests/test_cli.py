import csv
import json

import numpy as np
import pytest

from betatest.cli import main
from betatest.csvio import read_matrix, write_matrix
from betatest.errors import InputError
from betatest.simulation import substream


def write_pair(tmp_path, n1, n2, p, seed=0, scale2=1.0):
    g = substream(seed, 0)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_matrix(a, g.standard_normal((n1, p)), header=[f"v{i}" for i in range(p)])
    write_matrix(b, scale2 * g.standard_normal((n2, p)))
    return a, b


def load(path):
    return json.loads(path.read_text())


def strip_times(payload):
    payload = json.loads(json.dumps(payload))
    for key in ("started", "finished"):
        payload["manifest"].pop(key)
    return payload


class TestCsvIngestion:
    def test_header_and_comma(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("a,b\n1,2\n3.5,-4e-1\n")
        np.testing.assert_array_equal(read_matrix(f), [[1, 2], [3.5, -0.4]])

    def test_tab_no_header(self, tmp_path):
        f = tmp_path / "x.tsv"
        f.write_text("1\t2\n3\t4\n\n")
        np.testing.assert_array_equal(read_matrix(f), [[1, 2], [3, 4]])

    def test_transpose(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("1,2,3\n4,5,6\n")
        assert read_matrix(f, transpose=True).shape == (3, 2)

    def test_ragged_row(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("a,b\n1,2\n3\n")
        with pytest.raises(InputError, match="row 3 has 1 fields, expected 2"):
            read_matrix(f)

    def test_non_numeric_cell(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("1,2\n3,abc\n")
        with pytest.raises(InputError, match="row 2, column 2"):
            read_matrix(f)

    def test_decimal_comma_rejected(self, tmp_path):
        f = tmp_path / "x.tsv"
        f.write_text("1\t2\n3,5\t4\n")
        with pytest.raises(InputError, match="row 2, column 1"):
            read_matrix(f)

    def test_empty(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("\n\n")
        with pytest.raises(InputError):
            read_matrix(f)


class TestTestCommand:
    def test_report_contract(self, tmp_path):
        a, b = write_pair(tmp_path, 40, 50, 10)
        out = tmp_path / "r.json"
        code = main(["test", "--sample1", str(a), "--sample2", str(b), "--stat", "both",
                     "--kurtosis", "normal", "--out", str(out)])
        report = load(out)
        assert code in (0, 2)
        assert report["schema_version"] == 1
        assert [r["statistic_name"] for r in report["reports"]] == ["T1", "T2"]
        m = report["manifest"]
        assert m["command"] == "test" and m["config"]["alpha"] == 0.05 and m["tool_version"]
        assert len(report["reports"][0]["eigenvalues"]) == 10

    def test_identical_files(self, tmp_path):
        a, _ = write_pair(tmp_path, 30, 30, 8)
        out = tmp_path / "r.json"
        assert main(["test", "--sample1", str(a), "--sample2", str(a), "--stat", "T1", "--out", str(out)]) == 0
        (t1,) = load(out)["reports"]
        assert abs(t1["standardized"]) < 1e-9 and t1["p_value"] == pytest.approx(1.0)

    def test_rejection_exit_code(self, tmp_path):
        a, b = write_pair(tmp_path, 60, 80, 20, scale2=2.0)
        assert main(["test", "--sample1", str(a), "--sample2", str(b), "--out", str(tmp_path / "r.json")]) == 2

    def test_malformed_csv(self, tmp_path, capsys):
        a, _ = write_pair(tmp_path, 10, 10, 3)
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2,3\n4,x,6\n7,8,9\n")
        assert main(["test", "--sample1", str(a), "--sample2", str(bad)]) == 1
        assert "row 2, column 2" in capsys.readouterr().err

    def test_dimension_bound(self, tmp_path, capsys):
        a, b = write_pair(tmp_path, 10, 12, 21)
        assert main(["test", "--sample1", str(a), "--sample2", str(b)]) == 1
        assert "p <= n1+n2-2" in capsys.readouterr().err

    def test_column_mismatch(self, tmp_path, capsys):
        a, _ = write_pair(tmp_path, 10, 10, 3)
        c = tmp_path / "c.csv"
        write_matrix(c, np.ones((10, 4)))
        assert main(["test", "--sample1", str(a), "--sample2", str(c)]) == 1
        assert "column counts differ" in capsys.readouterr().err

    def test_fixed_and_estimated_kurtosis(self, tmp_path):
        a, b = write_pair(tmp_path, 60, 80, 10)
        out = tmp_path / "r.json"
        main(["test", "--sample1", str(a), "--sample2", str(b), "--kurtosis", "fixed:0.5,-0.5", "--out", str(out)])
        assert load(out)["reports"][0]["kurtosis"] == {"delta1": 0.5, "delta2": -0.5, "source": "user-supplied", "warnings": []}
        main(["test", "--sample1", str(a), "--sample2", str(b), "--kurtosis", "estimate", "--out", str(out)])
        assert load(out)["reports"][0]["kurtosis"]["source"] == "estimated"
        assert main(["test", "--sample1", str(a), "--sample2", str(b), "--kurtosis", "fixed:1"]) == 1

    def test_round_trip(self, tmp_path):
        a, b = write_pair(tmp_path, 45, 55, 12)
        out = tmp_path / "r.json"
        main(["test", "--sample1", str(a), "--sample2", str(b), "--kurtosis", "fixed:0.1,0.2",
              "--known-mean", "--out", str(out)])
        first = load(out)
        assert main(first["manifest"]["argv"]) in (0, 2)
        assert strip_times(load(out)) == strip_times(first)
        assert out.read_text().count("\n") > 10

    def test_null_calibration_through_cli(self, tmp_path):
        rejections = 0
        for i in range(200):
            g = substream(404, i)
            a, b = tmp_path / "a.csv", tmp_path / "b.csv"
            write_matrix(a, g.standard_normal((100, 80)))
            write_matrix(b, g.standard_normal((140, 80)))
            rejections += main(["test", "--sample1", str(a), "--sample2", str(b), "--stat", "T1",
                                "--no-spectrum", "--out", str(tmp_path / "r.json")]) == 2
        assert 0.02 <= rejections / 200 <= 0.09


class TestSimulateCommand:
    def test_table_long_and_manifest(self, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["simulate", "--delta-list", "0,5", "--reps", "50", "--seed", "7", "--out", str(out)]) == 0
        rows = list(csv.DictReader(out.open()))
        assert list(rows[0]) == ["delta", "stat", "rejection_rate", "reps_used", "wall_time"]
        assert [(r["delta"], r["stat"]) for r in rows] == [("0.0", "T1"), ("0.0", "T2"), ("5.0", "T1"), ("5.0", "T2")]
        long_rows = list(csv.DictReader((tmp_path / "t.long.csv").open()))
        assert len(long_rows) == 4 and "std_error" in long_rows[0]
        manifest = load(tmp_path / "t.csv.manifest.json")["manifest"]
        assert manifest["config"]["seed"] == 7 and manifest["config"]["delta_list"] == [0.0, 5.0]

    def test_reproducible_from_manifest(self, tmp_path):
        out = tmp_path / "t.csv"
        main(["simulate", "--model", "3", "--delta-list", "0,10", "--reps", "40", "--seed", "5", "--out", str(out)])
        before = [(r["delta"], r["stat"], r["rejection_rate"]) for r in csv.DictReader(out.open())]
        argv = load(tmp_path / "t.csv.manifest.json")["manifest"]["argv"]
        assert main(argv) == 0
        assert [(r["delta"], r["stat"], r["rejection_rate"]) for r in csv.DictReader(out.open())] == before

    def test_null_row_in_band(self, tmp_path):
        out = tmp_path / "t.csv"
        main(["simulate", "--model", "1", "--dist", "normal", "--n1", "50", "--n2", "70", "--p", "40",
              "--delta-list", "0,5,10", "--reps", "1000", "--seed", "7", "--stat", "T1", "--out", str(out)])
        rows = {r["delta"]: float(r["rejection_rate"]) for r in csv.DictReader(out.open())}
        assert 0.029 <= rows["0.0"] <= 0.069

    def test_power_curve_monotone(self, tmp_path):
        out = tmp_path / "t.csv"
        deltas = ",".join(str(d) for d in range(0, 21, 2))
        main(["simulate", "--delta-list", deltas, "--reps", "300", "--stat", "T1", "--out", str(out)])
        rates = [float(r["rejection_rate"]) for r in csv.DictReader(out.open())]
        for lo, hi in zip(rates, rates[1:]):
            se = np.sqrt(max(lo * (1 - lo), hi * (1 - hi), 1e-4) / 300)
            assert hi >= lo - 2 * se

    def test_zero_reps_is_usage_error(self, capsys):
        assert main(["simulate", "--reps", "0"]) == 1
        assert "usage" in capsys.readouterr().err


class TestGofCommand:
    def test_small_run(self, tmp_path):
        out, sample = tmp_path / "g.json", tmp_path / "s.csv"
        assert main(["gof", "--reps", "10", "--out", str(out), "--sample-out", str(sample)]) == 0
        res = load(out)["results"]["T1"]
        assert res["n"] == 10 and len(res["sample"]) == 10
        assert 0 <= res["ks"]["p_value"] <= 1 and res["jb"]["p_value"] >= 0
        assert len(list(csv.DictReader(sample.open()))) == 10

    def test_jb_refused_below_eight(self, tmp_path):
        out = tmp_path / "g.json"
        assert main(["gof", "--reps", "5", "--out", str(out)]) == 0
        res = load(out)["results"]["T1"]
        assert res["jb"] is None and "at least 8" in res["jb_refused"]

    def test_small_design_normality(self, tmp_path):
        out = tmp_path / "g.json"
        main(["gof", "--n1", "20", "--n2", "28", "--p", "32", "--reps", "1000", "--out", str(out)])
        assert load(out)["results"]["T1"]["jb"]["p_value"] > 0.01


class TestEsdCommand:
    def test_symmetric_grid(self, tmp_path):
        out = tmp_path / "e.csv"
        assert main(["esd", "--y1", "0.5", "--y2", "0.5", "--grid", "51", "--out", str(out)]) == 0
        rows = [(float(r["x"]), float(r["density"])) for r in csv.DictReader(out.open())]
        x = np.array([r[0] for r in rows])
        d = np.array([r[1] for r in rows])
        np.testing.assert_allclose(x + x[::-1], 1.0, atol=1e-14)
        np.testing.assert_allclose(d, d[::-1], rtol=1e-10, atol=1e-12)

    def test_header_oracle_agreement(self, tmp_path):
        out = tmp_path / "e.csv"
        main(["esd", "--y1", "0.5", "--y2", "2", "--out", str(out)])
        head = load(tmp_path / "e.header.json")
        assert head["l_n"]["closed_form"] == pytest.approx(0.3, abs=1e-15)
        assert abs(head["l_n"]["closed_form"] - head["l_n"]["quadrature"]) < 1e-8
        assert head["support"]["mass1"] == 0.5 and head["support"]["mass0"] == 0.0

    def test_collapsed_support(self, capsys):
        assert main(["esd", "--y1", "2", "--y2", "2"]) == 1
        assert "support collapses" in capsys.readouterr().err

    def test_bad_grid(self):
        assert main(["esd", "--y1", "0.5", "--y2", "0.5", "--grid", "1"]) == 1
