"""
Tests for plan lowering, interpretation and pipeline analysis
"""

import numpy as np
import pytest

from app.core.errors import PlanError, ShapeError
from app.models.exprgraph import ExprGraph, Shape
from app.models.plan import GroupAggregate, Project, RecursiveLoop, Union
from app.models.tuplestats import TupleStats
from app.services import planner, relengine
from app.services.autodiff import build_mlp_loss
from app.services.trainer import Engine, TrainConfig, accuracy, infer_mlp, train_mlp
from app.services.relengine import RelMatrix


class TestLower:
    def test_zero_iterations_is_the_base_case(self, iris_program, iris_catalog):
        plan = planner.lower(iris_program, 0)
        assert isinstance(plan, Union)
        result = planner.interpret(plan, iris_catalog)
        assert result.tables["w_xh"] == iris_catalog["w_xh"]
        assert result.tables["w_ho"] == iris_catalog["w_ho"]

    def test_incomplete_program_rejected(self):
        with pytest.raises(PlanError):
            planner.lower(build_mlp_loss(4, 20, 3, 150), 1)

    def test_negative_iterations_rejected(self, iris_program):
        with pytest.raises(PlanError):
            planner.lower(iris_program, -1)

    def test_step_names_and_node_kinds(self, iris_program):
        plan = planner.lower(iris_program, 2)
        assert isinstance(plan, RecursiveLoop)
        assert [cte.name for cte in plan.step] == ["a_xh", "a_ho", "l_ho", "d_ho", "l_xh", "d_xh", "d_w"]
        kinds = [type(cte) for cte in plan.step]
        assert kinds == [GroupAggregate, GroupAggregate, Project, Project, GroupAggregate, Project, Union]
        assert plan.params == ("w_xh", "w_ho")
        assert [part.tag for part in plan.step[-1].parts] == [0, 1]

    def test_array_expressions(self, iris_program):
        plan = planner.lower(iris_program, 1)
        assert dict(plan.array_vars) == {
            "a_xh": "sig(img**w_xh)",
            "a_ho": "sig(a_xh**w_ho)",
            "l_ho": "2*(a_ho-one_hot)",
            "d_ho": "l_ho*a_ho*(1-a_ho)",
            "l_xh": "d_ho**transpose(w_ho)",
            "d_xh": "l_xh*a_xh*(1-a_xh)",
        }
        assert dict(plan.array_grads) == {"w_xh": "transpose(img)**d_xh", "w_ho": "transpose(a_xh)**d_ho"}

    def test_inference_expression(self, iris_program):
        assert planner.lower_inference(iris_program).array_expr == "sig(sig(img**w_xh)**w_ho)"

    def test_array_operator_count(self, iris_program):
        assert planner.array_operator_count(iris_program) == 24

    def test_three_relation_expression_rejected(self):
        g = ExprGraph()
        a = g.input("a", Shape(2, 2))
        b = g.input("b", Shape(2, 2))
        c = g.input("c", Shape(2, 2))
        with pytest.raises(PlanError):
            planner.lower_expression(g, g.add(g.add(a, b), c))


class TestInterpret:
    def test_training_matches_dense_engine(self, iris, iris_program, iris_catalog):
        result = planner.interpret(planner.lower(iris_program, 3), iris_catalog, track_loss=True)
        cfg = TrainConfig(learning_rate=0.01, iterations=3, hidden_dim=20, seed=1, engine=Engine.DENSE)
        dense = train_mlp(iris.features, iris.labels, cfg, num_classes=3)
        np.testing.assert_allclose(relengine.to_dense(result.tables["w_xh"]), dense.w_xh, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(relengine.to_dense(result.tables["w_ho"]), dense.w_ho, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(result.losses, dense.losses, rtol=1e-12)

    def test_inference_accuracy_matches_dense(self, iris, iris_program, iris_catalog):
        result = planner.interpret(planner.lower_inference(iris_program), iris_catalog)
        weights = {k: relengine.to_dense(iris_catalog[k]) for k in ("w_xh", "w_ho")}
        assert result.accuracy == accuracy(infer_mlp(iris.features, weights), iris.labels)
        assert len(result.predictions) == 150

    def test_expression_plan(self):
        g = ExprGraph()
        a = g.input("a", Shape(2, 3))
        b = g.input("b", Shape(4, 3))
        root = g.sigmoid(g.matmul(a, g.transpose(b)))
        rng = np.random.default_rng(4)
        a_val, b_val = rng.normal(size=(2, 3)), rng.normal(size=(4, 3))
        catalog = {"a": relengine.from_dense(a_val), "b": relengine.from_dense(b_val)}
        out = planner.interpret(planner.lower_expression(g, root), catalog).tables["result"]
        np.testing.assert_allclose(relengine.to_dense(out), 1 / (1 + np.exp(-(a_val @ b_val.T))), rtol=1e-12)

    def test_single_relation_projection(self):
        g = ExprGraph()
        a = g.input("a", Shape(1, 2))
        plan = planner.lower_expression(g, g.scalar_mul(2.0, g.one_minus(a)))
        catalog = {"a": relengine.from_dense(np.array([[0.25, 3.0]]))}
        out = planner.interpret(plan, catalog).tables["result"]
        np.testing.assert_allclose(relengine.to_dense(out), [[1.5, -4.0]])

    def test_unbound_table(self, iris_program, iris_catalog):
        catalog = {k: v for k, v in iris_catalog.items() if k != "img"}
        with pytest.raises(PlanError):
            planner.interpret(planner.lower(iris_program, 1), catalog)

    def test_catalog_shape_mismatch(self, iris_program, iris_catalog):
        catalog = dict(iris_catalog, img=relengine.from_dense(np.ones((10, 4))))
        with pytest.raises(ShapeError):
            planner.interpret(planner.lower(iris_program, 1), catalog)

    def test_stats_are_collected(self, iris_program, iris_catalog):
        stats = TupleStats()
        planner.interpret(planner.lower(iris_program, 1), iris_catalog, stats)
        assert stats.joined_tuples >= 150 * 4 * 20
        assert stats.peak_bytes >= 3 * stats.peak_dense_bytes

    def test_rank_rows_ties_to_lowest_column(self):
        m = RelMatrix(2, 3, ((1, 1, 0.2), (1, 2, 0.7), (1, 3, 0.7), (2, 1, 0.9), (2, 2, 0.1), (2, 3, 0.3)))
        assert planner.rank_rows(m) == [2, 1]

    def test_mean_abs(self):
        assert planner.mean_abs(np.array([[1.0, -3.0]])) == 2.0


class TestPipelines:
    def test_model_plan_has_two_breakers(self, iris_program):
        report = planner.analyze_pipelines(planner.lower_model(iris_program))
        assert report.pipeline_count == 5
        assert report.breaker_count == 2
        assert [b.materialized_entries for b in report.breakers] == [150 * 4 * 20, 150 * 20 * 3]

    def test_every_pipeline_ends_at_one_sink(self, iris_program):
        report = planner.analyze_pipelines(planner.lower(iris_program, 1))
        assert report.pipeline_count == len(report.pipelines)
        assert report.pipelines[-1][-1] == "output"
        for pipeline in report.pipelines:
            assert pipeline[0].startswith(("scan", "aggregate", "rank"))

    def test_report_as_dict(self, iris_program):
        data = planner.analyze_pipelines(planner.lower_model(iris_program)).as_dict()
        assert data["breaker_count"] == 2
        assert all(" -> " in p for p in data["pipelines"])
