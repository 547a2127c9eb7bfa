"""
Tests for data loading, memory accounting, benchmarks and SQL conformance
"""

import numpy as np
import pytest
from sqlalchemy import func, select
from sqlalchemy.dialects import postgresql

from app.core import database
from app.core.errors import ConformanceError, DataError, ExecutionError
from app.core.init_db import init_db
from app.models.plan import SqlDialect
from app.models.tables import Img, insert_statements, schema_ddl
from app.services import relengine
from app.services.autodiff import mlp_program
from app.services.bench_service import (
    CSV_HEADER, STATUS_OK, STATUS_SKIPPED, BenchSweep, bench, write_bench_csv,
)
from app.services.conformance_service import ConformanceRun, ReferenceExecutor, SqlAlchemyExecutor, conformance
from app.services.dataset_service import (
    IRIS_ATTRIBUTES, Dataset, encode, load_csv, replicate, synthetic_pixels,
)
from app.services.memory_service import mem_report
from app.services.trainer import Engine, accuracy, infer_mlp


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_iris(self, iris):
        assert iris.rows == 150
        assert iris.num_attributes == 4
        assert iris.num_classes == 3
        assert iris.attributes == IRIS_ATTRIBUTES
        assert iris.label_name == "species"
        assert iris.scale == 10.0
        np.testing.assert_allclose(iris.features[0], [0.51, 0.35, 0.14, 0.02])
        assert [iris.labels.count(k) for k in range(3)] == [50, 50, 50]

    def test_generic_schema(self, tmp_path):
        path = _write(tmp_path, "label,a,b\n1,2,3\n0,4,5\n")
        ds = load_csv(path, "generic:0")
        np.testing.assert_array_equal(ds.features, [[2.0, 3.0], [4.0, 5.0]])
        assert ds.labels == (1, 0)
        assert ds.num_classes == 2
        assert ds.attributes == ("a", "b")

    def test_explicit_scale(self, tmp_path):
        path = _write(tmp_path, "a,label\n255,0\n")
        assert load_csv(path, "generic:1", scale=255.0).features[0, 0] == 1.0

    @pytest.mark.parametrize("text", [
        "",
        "a,b,species\n",
        "a,b,species\n1,x,0\n",
        "a,b,species\n1,2,0.5\n",
        "a,b,species\n1,2,3\n",
        "a,b,species\n1,2\n",
    ])
    def test_malformed(self, tmp_path, text):
        with pytest.raises(DataError):
            load_csv(_write(tmp_path, text))

    @pytest.mark.parametrize("cell", ["inf", "-inf", "nan"])
    def test_non_finite_label(self, tmp_path, cell):
        with pytest.raises(DataError, match="row 2, column 3"):
            load_csv(_write(tmp_path, f"a,b,species\n1,2,{cell}\n"))

    @pytest.mark.parametrize("cell", ["inf", "nan"])
    def test_non_finite_feature(self, tmp_path, cell):
        with pytest.raises(DataError, match="row 3, column 1"):
            load_csv(_write(tmp_path, f"a,b,species\n1,2,0\n{cell},2,0\n"))

    def test_error_omits_cell_text(self, tmp_path):
        with pytest.raises(DataError) as info:
            load_csv(_write(tmp_path, "a,b,species\nroot,SECRET,0\n"))
        assert "root" not in str(info.value)
        assert "row 2, column 1" in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv")

    def test_unknown_schema(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(_write(tmp_path, "a,b\n1,0\n"), "json")


class TestDatasetTools:
    def test_replicate(self, iris):
        doubled = replicate(iris, 2)
        assert doubled.rows == 300
        assert doubled.name == "irisx2"
        np.testing.assert_array_equal(doubled.features[150:], iris.features)
        assert replicate(iris, 1) is iris

    def test_replicate_factor_zero(self, iris):
        with pytest.raises(DataError):
            replicate(iris, 0)

    def test_encode_files(self, iris, tmp_path):
        img, one_hot = encode(iris, tmp_path)
        assert len(img) == 600 and len(one_hot) == 450
        lines = (tmp_path / "one_hot.csv").read_text().splitlines()
        assert lines[0] == "i,j,v"
        assert lines[1:4] == ["1,1,1", "1,2,0", "1,3,0"]
        assert len((tmp_path / "img.csv").read_text().splitlines()) == 601

    def test_synthetic_pixels(self):
        ds = synthetic_pixels(20, seed=3)
        assert ds.features.shape == (20, 784)
        assert ds.num_classes == 10
        assert ds.scale == 255.0
        assert np.all((ds.features >= 0) & (ds.features <= 1))
        np.testing.assert_array_equal(ds.features, synthetic_pixels(20, seed=3).features)

    @pytest.mark.parametrize("rows", [0, 6001])
    def test_synthetic_pixels_row_limits(self, rows):
        with pytest.raises(DataError):
            synthetic_pixels(rows)


class TestMemReport:
    def test_iris_totals(self):
        report = mem_report(150, 4, 20, 3)
        assert report.training_entries == 11540
        assert report.training_entries * 8 == 92320
        assert report.inference_entries == 4640
        assert report.inference_entries * 8 / 1024 == 36.25

    def test_unit_dimensions(self):
        report = mem_report(1, 1, 1, 1)
        assert report.training_entries == 10
        assert report.inference_entries == 6

    def test_relational_bytes_triple_dense(self):
        for row in mem_report(150, 4, 20, 3).rows:
            assert row.relational_bytes == 3 * row.dense_bytes

    def test_invalid_dimension(self):
        with pytest.raises(DataError):
            mem_report(150, 0, 20, 3)

    def test_outputs(self, tmp_path):
        report = mem_report(150, 4, 20, 3)
        assert "training total" in report.format_table()
        report.write_csv(tmp_path / "mem.csv")
        lines = (tmp_path / "mem.csv").read_text().splitlines()
        assert lines[0] == "variable,rows,cols,entries,dense_bytes,relational_bytes"
        assert lines[1] == "x,150,4,600,4800,14400"
        assert lines[-1].startswith("inference subtotal,,,4640,37120,")


class TestBench:
    def test_cells_in_sweep_order(self):
        sweep = BenchSweep(hidden_dims=[2, 4], batch_sizes=["full"], engines=[Engine.DENSE, Engine.RELATIONAL])
        assert sweep.cells() == [
            (1, 2, "full", Engine.DENSE), (1, 2, "full", Engine.RELATIONAL),
            (1, 4, "full", Engine.DENSE), (1, 4, "full", Engine.RELATIONAL),
        ]

    def test_records(self, iris, tmp_path):
        sweep = BenchSweep(hidden_dims=[2], batch_sizes=["full", 50],
                           engines=[Engine.DENSE, Engine.RELATIONAL], jobs=2)
        records = bench(iris, sweep)
        assert len(records) == 4
        assert all(r.status == STATUS_OK for r in records)
        for r in records:
            assert r.peak_entries > 0
            assert r.peak_bytes_relational >= 3 * r.peak_bytes_dense
        write_bench_csv(records, tmp_path / "bench.csv")
        lines = (tmp_path / "bench.csv").read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 5

    def test_budget_skips_cells(self, iris):
        records = bench(iris, BenchSweep(hidden_dims=[2], entry_budget=1))
        assert [r.status for r in records] == [STATUS_SKIPPED]
        assert records[0].peak_entries == 0

    def test_batch_larger_than_data(self, iris):
        with pytest.raises(DataError):
            bench(iris, BenchSweep(batch_sizes=[151]))

    def test_replication(self, iris):
        records = bench(iris, BenchSweep(hidden_dims=[2], replications=[2], engines=[Engine.DENSE]))
        assert records[0].dataset == "irisx2"


class _EmptyExecutor:
    def run(self, setup, query):
        return []


class TestConformance:
    def test_reference_executor_passes(self, iris_catalog):
        report = conformance(iris_catalog, 4, 20, 3, iterations=2, learning_rate=0.01)
        assert report.passed
        assert report.adapter == "ReferenceExecutor"
        assert "PASS training" in report.format()

    def test_window_dialect(self, iris_catalog):
        report = conformance(iris_catalog, 4, 20, 3, 1, 0.01, dialect=SqlDialect.WINDOW)
        assert report.passed

    def test_disagreeing_executor_fails(self, iris_catalog):
        report = conformance(iris_catalog, 4, 20, 3, 1, 0.01, executor=_EmptyExecutor())
        assert not report.passed
        assert report.results[0].detail == "no rows returned"

    def test_edited_sql_is_not_recognized(self, iris_catalog):
        report = conformance(iris_catalog, 4, 20, 3, 1, 0.01, sql={"training": "select * from w;"})
        assert [r.passed for r in report.results] == [False, True]
        assert "does not recognize" in report.results[0].detail

    def test_tied_predictions_rank_lowest_class(self, iris, iris_catalog):
        # zero output weights give 0.5 in every class
        catalog = {**iris_catalog, "w_ho": relengine.from_dense(np.zeros((20, 3)))}
        run = ConformanceRun(catalog, mlp_program(4, 20, 3, 150, 0.01), iterations=0)
        assert run.expected_accuracy == iris.labels.count(0) / 150
        weights = {"w_xh": relengine.to_dense(catalog["w_xh"]), "w_ho": np.zeros((20, 3))}
        assert run.expected_accuracy == accuracy(infer_mlp(iris.features, weights), iris.labels)
        assert conformance(catalog, 4, 20, 3, 0, 0.01).passed

    def test_array_dialect_rejected(self, iris_catalog):
        with pytest.raises(ConformanceError):
            conformance(iris_catalog, 4, 20, 3, 1, 0.01, dialect=SqlDialect.ARRAY)

    def test_reference_executor_unknown_query(self):
        with pytest.raises(ExecutionError):
            ReferenceExecutor().run([], "select 1")


class TestDatabase:
    def test_engine_needs_url(self, monkeypatch):
        monkeypatch.setattr(database, "DATABASE_URL", None)
        with pytest.raises(ConformanceError):
            database.get_engine()

    def test_postgres_ddl(self):
        ddl = schema_ddl(["img", "w"], postgresql.dialect())
        assert ddl[0].startswith("CREATE TABLE img")
        assert "iter INTEGER" in ddl[1]

    def test_insert_batches(self):
        rows = [(i, 1, 0.5) for i in range(1, 2502)]
        statements = insert_statements("img", rows, postgresql.dialect())
        assert len(statements) == 3

    def test_sqlalchemy_executor(self, tmp_path):
        executor = SqlAlchemyExecutor(f"sqlite:///{tmp_path / 'conf.db'}")
        setup = schema_ddl(["img"], executor.dialect)
        setup += insert_statements("img", [(1, 1, 0.5), (1, 2, 0.25)], executor.dialect)
        assert executor.run(setup, "select count(*) from img") == [(2,)]
        with pytest.raises(ExecutionError):
            executor.run([], "select * from missing_table")

    def test_init_db(self, tmp_path):
        url = f"sqlite:///{tmp_path / 'init.db'}"
        ds = Dataset(features=np.ones((5, 2)), labels=(0, 1, 0, 1, 1), num_classes=2, name="tiny")
        counts = init_db(ds, hidden_dim=3, seed=1, url=url)
        assert counts == {"img": 10, "one_hot": 10, "w_xh": 6, "w_ho": 6}
        with database.get_session(url) as db:
            assert db.scalar(select(func.count()).select_from(Img)) == 10


class TestBenchTrends:
    def test_zero_iterations_observes_inputs_only(self, iris):
        records = bench(iris, BenchSweep(hidden_dims=[20], iterations=0))
        assert records[0].wall_time_ms > 0
        assert records[0].peak_entries == 600 + 450 + 80 + 60

    @pytest.mark.parametrize("k", [1, 4, 16])
    def test_full_batch_beats_single_rows(self, iris, k):
        sweep = BenchSweep(hidden_dims=[20], batch_sizes=[1, "full"], replications=[k])
        single, full = bench(iris, sweep)
        assert full.tuples_per_second > single.tuples_per_second
        assert single.peak_bytes_relational >= 3 * single.peak_bytes_dense
        assert full.peak_bytes_relational >= 3 * full.peak_bytes_dense
