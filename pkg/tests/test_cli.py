"""
Tests for the command-line interface and its exit codes
"""

import pytest

from app.cli import main
from app.core import database

from conftest import golden


class TestCommands:
    def test_mem_report(self, tmp_path, capsys):
        assert main(["mem-report", "--out", str(tmp_path)]) == 0
        assert "training total" in capsys.readouterr().out
        assert (tmp_path / "mem_report.csv").exists()

    def test_emit_sql(self, tmp_path):
        assert main(["emit-sql", "--out", str(tmp_path), "--iters", "10", "--lr", "0.01"]) == 0
        assert (tmp_path / "training.sql").read_text() == golden("sql92_training.sql")
        assert (tmp_path / "inference.sql").read_text() == golden("sql92_inference.sql")
        assert "copy iris from '" in (tmp_path / "transform.sql").read_text()

    def test_emit_sql_array(self, tmp_path):
        assert main(["emit-sql", "--out", str(tmp_path), "--dialect", "array", "--iters", "10", "--lr", "0.01"]) == 0
        assert (tmp_path / "array_transform.sql").read_text() == golden("array_transform.sql")

    def test_emit_sql_pixel_scale(self, tmp_path):
        args = ["emit-sql", "--dataset", "synthetic-pixels", "--rows", "5", "--iters", "1", "--hidden", "3",
                "--out", str(tmp_path)]
        assert main(args) == 0
        transform = (tmp_path / "transform.sql").read_text()
        assert "select id, 1, px0/255 from iris);" in transform

    def test_emit_sql_explicit_scale(self, tmp_path):
        assert main(["emit-sql", "--scale", "4", "--iters", "1", "--out", str(tmp_path)]) == 0
        assert "sepal_length/4 from iris" in (tmp_path / "transform.sql").read_text()

    def test_encode(self, tmp_path):
        assert main(["encode", "--out", str(tmp_path)]) == 0
        assert len((tmp_path / "one_hot.csv").read_text().splitlines()) == 451

    def test_train_then_infer(self, tmp_path, capsys):
        assert main(["train", "--out", str(tmp_path), "--iters", "2", "--hidden", "4"]) == 0
        assert (tmp_path / "checkpoint.json").exists()
        assert main(["infer", "--out", str(tmp_path)]) == 0
        assert "accuracy" in capsys.readouterr().out
        assert len((tmp_path / "predictions.csv").read_text().splitlines()) == 151

    def test_bench(self, tmp_path):
        args = ["bench", "--out", str(tmp_path), "--hidden", "2,3", "--batch", "full", "--engine", "dense", "--iters", "1"]
        assert main(args) == 0
        assert len((tmp_path / "bench.csv").read_text().splitlines()) == 3

    def test_conformance(self, tmp_path):
        assert main(["conformance", "--iters", "1", "--hidden", "3"]) == 0

    def test_conformance_reads_sql_files(self, tmp_path):
        assert main(["emit-sql", "--out", str(tmp_path), "--iters", "1", "--hidden", "3"]) == 0
        assert main(["conformance", "--sql-dir", str(tmp_path), "--iters", "1", "--hidden", "3"]) == 0


class TestExitCodes:
    def test_unknown_command(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["fly"])
        assert excinfo.value.code == 1

    def test_invalid_config(self, tmp_path):
        assert main(["train", "--out", str(tmp_path), "--batch", "0"]) == 1

    def test_invalid_list(self, tmp_path):
        assert main(["bench", "--out", str(tmp_path), "--hidden", "x"]) == 1

    def test_single_value_expected(self, tmp_path):
        assert main(["train", "--out", str(tmp_path), "--hidden", "2,3"]) == 1

    def test_data_error(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2

    @pytest.mark.parametrize("label", ["inf", "nan"])
    def test_non_finite_label(self, tmp_path, label):
        path = tmp_path / "bad.csv"
        path.write_text(f"a,b,species\n1,2,{label}\n")
        assert main(["train", "--data", str(path), "--out", str(tmp_path)]) == 2

    def test_missing_checkpoint(self, tmp_path):
        assert main(["infer", "--out", str(tmp_path)]) == 2

    def test_budget_exceeded(self, tmp_path):
        assert main(["train", "--out", str(tmp_path), "--entry-budget", "1"]) == 3

    def test_bench_all_skipped(self, tmp_path):
        assert main(["bench", "--out", str(tmp_path), "--entry-budget", "1"]) == 3

    def test_conformance_without_database(self, monkeypatch):
        monkeypatch.setattr(database, "DATABASE_URL", None)
        assert main(["conformance", "--adapter", "sqlalchemy", "--iters", "1"]) == 4

    def test_missing_sql_file(self, tmp_path):
        assert main(["conformance", "--sql-dir", str(tmp_path), "--iters", "1"]) == 4

    def test_corrupted_sql_file(self, tmp_path):
        assert main(["emit-sql", "--out", str(tmp_path), "--iters", "1", "--hidden", "3"]) == 0
        path = tmp_path / "training.sql"
        path.write_text(path.read_text().replace("SUM(m.v*n.v)", "SUM(m.v+n.v)", 1))
        assert main(["conformance", "--sql-dir", str(tmp_path), "--iters", "1", "--hidden", "3"]) == 4
