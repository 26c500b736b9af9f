import json
import pathlib

import pytest

from endochart.cli import main

DOCS = pathlib.Path(__file__).resolve().parents[1] / "docs" / "examples"
GOLDEN = pathlib.Path(__file__).resolve().parent / "golden"


class TestCorpusCommand:
    def test_example37_fails_involutivity(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        code = main(["corpus", "example37", "--samples", "60",
                     "--out", str(out)])
        assert code == 2
        report = json.loads(out.read_text())
        cond = report["conditions"]
        assert cond["nijenhuis_zero"]["pass"]
        assert not cond["kernel_involutivity"]["pass"]
        witness = cond["kernel_involutivity"]["per_power"][0]
        assert witness["max_residual"] >= 0.05
        assert witness["witness_point"] is not None

    def test_constant_jordan_passes(self, tmp_path):
        out = tmp_path / "r.json"
        code = main(["corpus", "constant-jordan", "--grid", "3",
                     "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["overall"]["pass"]
        assert report["verification"]["max_deviation"] <= 1e-9

    def test_unknown_corpus_name(self, capsys):
        assert main(["corpus", "does-not-exist"]) == 1
        assert "unknown corpus field" in capsys.readouterr().err

    def test_forced_example38_reports_witness(self, tmp_path):
        out = tmp_path / "r.json"
        code = main(["corpus", "example38", "--samples", "40", "--force",
                     "--out", str(out)])
        assert code == 2
        report = json.loads(out.read_text())
        assert report["error"]
        clause = report["induction"][0]["clauses"]
        bad = [c for c in clause.values() if not c["pass"]]
        assert bad and bad[0]["witness"] is not None


class TestFileCommands:
    def test_check_diagonalizable(self, tmp_path):
        out = tmp_path / "r.json"
        code = main(["check", str(DOCS / "diagonalizable.json"),
                     "--samples", "40", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["kind"] == "corollary15"
        assert report["overall"]["pass"]

    def test_jordanize_triangular(self, tmp_path):
        out = tmp_path / "r.json"
        code = main(["jordanize", str(DOCS / "triangular-n3.json"),
                     "--samples", "50", "--grid", "3", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["verification"]["max_deviation"] <= 1e-5
        assert len(report["verification"]["chart_samples"]) == 20

    def test_missing_file(self, capsys):
        assert main(["check", "/nonexistent/file.json"]) == 1

    def test_box_override(self, tmp_path):
        out = tmp_path / "r.json"
        code = main(["check", str(DOCS / "triangular-n3.json"),
                     "--box=-0.2:0.2", "--samples", "40",
                     "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["field"]["box"][0] == [-0.2, 0.2]

    def test_bad_usage(self):
        assert main(["check"]) == 1


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert all(line.startswith("[PASS]") for line in lines if line.startswith("["))


class TestGoldenReport:
    def test_example37_report_stable(self, tmp_path):
        out = tmp_path / "r.json"
        code = main(["corpus", "example37", "--samples", "100",
                     "--seed", "2026", "--out", str(out)])
        assert code == 2
        expect = (GOLDEN / "example37_report.json").read_text()
        assert out.read_text() == expect
