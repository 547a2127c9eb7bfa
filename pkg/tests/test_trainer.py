"""
Tests for gradient-descent training and inference
"""

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import DataError, ShapeError
from app.models.tuplestats import TupleStats
from app.services.denseengine import SplitMix64, init_uniform
from app.services.trainer import (
    Engine, TrainConfig, accuracy, gd_linreg, infer_mlp, init_weights, load_checkpoint,
    save_checkpoint, train_mlp,
)


def _config(**overrides):
    values = dict(learning_rate=0.01, iterations=3, hidden_dim=4, seed=1)
    values.update(overrides)
    return TrainConfig(**values)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.batch_size == "full"
        assert cfg.hidden_dim == 20
        assert cfg.engine is Engine.DENSE

    @pytest.mark.parametrize("field,value", [
        ("learning_rate", 0.0),
        ("iterations", -1),
        ("hidden_dim", 0),
        ("batch_size", 0),
        ("batch_size", "half"),
        ("engine", "gpu"),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(ValidationError):
            TrainConfig(**{field: value})


class TestLinearRegression:
    def test_single_step(self):
        trajectory = gd_linreg([(1.0, 3.0)], learning_rate=0.1, iterations=1)
        assert trajectory[0] == (1.0, 1.0)
        assert trajectory[1] == pytest.approx((1.2, 1.2))

    def test_converges_towards_the_line(self):
        data = [(x, 2.0 * x + 1.0) for x in np.linspace(-1, 1, 21)]
        trajectory = gd_linreg(data, learning_rate=0.1, iterations=500)
        assert len(trajectory) == 501
        assert trajectory[-1] == pytest.approx((2.0, 1.0), abs=1e-3)

    def test_least_squares_solution(self):
        data = [(float(x), 2.0 * x + 1.0) for x in range(10)]
        a, b = gd_linreg(data, learning_rate=0.01, iterations=5000)[-1]
        assert abs(a - 2.0) < 0.1
        assert abs(b - 1.0) < 0.1

    def test_stationary_point(self):
        data = [(float(x), 2.0 * x + 1.0) for x in range(10)]
        assert set(gd_linreg(data, learning_rate=0.01, iterations=3, start=(2.0, 1.0))) == {(2.0, 1.0)}

    def test_empty_data(self):
        with pytest.raises(DataError):
            gd_linreg([])


class TestInitWeights:
    def test_one_stream_for_both_matrices(self):
        weights = init_weights(4, 20, 3, 5)
        prng = SplitMix64(5)
        np.testing.assert_array_equal(weights["w_xh"], init_uniform(prng, 4, 20))
        np.testing.assert_array_equal(weights["w_ho"], init_uniform(prng, 20, 3))

    def test_seed_changes_weights(self):
        assert not np.array_equal(init_weights(2, 2, 2, 1)["w_xh"], init_weights(2, 2, 2, 2)["w_xh"])


class TestTrainMlp:
    @pytest.mark.parametrize("engine", [Engine.RELATIONAL, Engine.PLAN])
    def test_engines_agree_with_dense(self, small_problem, engine):
        features, labels = small_problem
        dense = train_mlp(features, labels, _config(engine=Engine.DENSE), num_classes=2)
        other = train_mlp(features, labels, _config(engine=engine), num_classes=2)
        np.testing.assert_allclose(other.w_xh, dense.w_xh, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(other.w_ho, dense.w_ho, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(other.losses, dense.losses, rtol=1e-12)

    @pytest.mark.parametrize("engine", [Engine.RELATIONAL, Engine.PLAN])
    def test_minibatch_engines_agree(self, small_problem, engine):
        features, labels = small_problem
        dense = train_mlp(features, labels, _config(batch_size=5), num_classes=2)
        other = train_mlp(features, labels, _config(batch_size=5, engine=engine), num_classes=2)
        np.testing.assert_allclose(other.w_ho, dense.w_ho, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(other.losses, dense.losses, rtol=1e-12)

    def test_batch_of_all_rows_is_full_batch(self, small_problem):
        features, labels = small_problem
        full = train_mlp(features, labels, _config(), num_classes=2)
        whole = train_mlp(features, labels, _config(batch_size=len(labels)), num_classes=2)
        np.testing.assert_allclose(whole.w_xh, full.w_xh, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(whole.w_ho, full.w_ho, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(whole.losses, full.losses, rtol=1e-12)

    def test_minibatch_differs_from_full_batch(self, small_problem):
        features, labels = small_problem
        full = train_mlp(features, labels, _config(), num_classes=2)
        mini = train_mlp(features, labels, _config(batch_size=5), num_classes=2)
        assert not np.array_equal(full.w_ho, mini.w_ho)

    def test_zero_iterations_keeps_initial_weights(self, small_problem):
        features, labels = small_problem
        result = train_mlp(features, labels, _config(iterations=0), num_classes=2)
        assert result.losses == []
        np.testing.assert_array_equal(result.w_xh, init_weights(3, 4, 2, 1)["w_xh"])

    def test_batch_larger_than_data(self, small_problem):
        features, labels = small_problem
        with pytest.raises(ShapeError):
            train_mlp(features, labels, _config(batch_size=13), num_classes=2)

    def test_empty_dataset(self):
        with pytest.raises(DataError):
            train_mlp(np.zeros((0, 3)), [], _config())

    def test_label_count_mismatch(self, small_problem):
        features, labels = small_problem
        with pytest.raises(DataError):
            train_mlp(features, labels[:-1], _config())

    def test_accuracy_tracking(self, small_problem):
        features, labels = small_problem
        result = train_mlp(features, labels, _config(track_accuracy=True), num_classes=2)
        assert len(result.accuracies) == 3
        assert all(0.0 <= a <= 1.0 for a in result.accuracies)

    def test_relational_stats(self, small_problem):
        features, labels = small_problem
        stats = TupleStats()
        train_mlp(features, labels, _config(engine=Engine.RELATIONAL), num_classes=2, stats=stats)
        assert stats.joined_tuples > 0
        assert stats.peak_bytes >= 3 * stats.peak_dense_bytes


class TestCrossBackend:
    def test_iris_ten_iterations(self, iris):
        results = {
            engine: train_mlp(iris.features, iris.labels,
                              TrainConfig(learning_rate=0.01, iterations=10, hidden_dim=20, seed=1, engine=engine),
                              num_classes=3)
            for engine in Engine
        }
        dense = results[Engine.DENSE]
        for engine in (Engine.RELATIONAL, Engine.PLAN):
            assert np.max(np.abs(results[engine].w_xh - dense.w_xh)) <= 1e-9
            assert np.max(np.abs(results[engine].w_ho - dense.w_ho)) <= 1e-9
            assert np.max(np.abs(np.array(results[engine].losses) - dense.losses)) <= 1e-12


@pytest.fixture(scope="module")
def iris_trained(iris):
    cfg = TrainConfig(learning_rate=0.01, iterations=1000, hidden_dim=20, seed=1)
    return train_mlp(iris.features, iris.labels, cfg, num_classes=3)


class TestIris:
    def test_loss_decreases(self, iris_trained):
        assert len(iris_trained.losses) == 1000
        assert iris_trained.losses[999] < iris_trained.losses[0]

    def test_accuracy_does_not_drop(self, iris, iris_trained):
        initial = accuracy(infer_mlp(iris.features, init_weights(4, 20, 3, 1)), iris.labels)
        final = accuracy(infer_mlp(iris.features, iris_trained.weights), iris.labels)
        assert final >= initial

    def test_accuracy_threshold(self, iris, iris_trained):
        assert accuracy(infer_mlp(iris.features, iris_trained.weights), iris.labels) >= 0.9


class TestInference:
    def test_probabilities_in_unit_interval(self, small_problem):
        features, _ = small_problem
        probabilities = infer_mlp(features, init_weights(3, 4, 2, 1))
        assert probabilities.shape == (12, 2)
        assert np.all((probabilities > 0) & (probabilities < 1))

    def test_weight_shape_mismatch(self, small_problem):
        features, _ = small_problem
        with pytest.raises(ShapeError):
            infer_mlp(features, init_weights(4, 4, 2, 1))

    def test_accuracy(self):
        probabilities = np.array([[0.9, 0.1], [0.4, 0.6], [0.5, 0.5]])
        assert accuracy(probabilities, [0, 0, 0]) == pytest.approx(2 / 3)

    def test_accuracy_of_nothing(self):
        assert accuracy(np.zeros((0, 2)), []) == 0.0


class TestCheckpoint:
    def test_round_trip(self, small_problem, tmp_path):
        features, labels = small_problem
        result = train_mlp(features, labels, _config(), num_classes=2)
        save_checkpoint(result, tmp_path)
        weights, meta = load_checkpoint(tmp_path)
        np.testing.assert_array_equal(weights["w_xh"], result.w_xh)
        np.testing.assert_array_equal(weights["w_ho"], result.w_ho)
        assert meta["hidden_dim"] == 4
        assert meta["seed"] == 1

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path)

    def test_missing_weight_file(self, small_problem, tmp_path):
        features, labels = small_problem
        save_checkpoint(train_mlp(features, labels, _config(), num_classes=2), tmp_path)
        (tmp_path / "w_ho.csv").unlink()
        with pytest.raises(DataError):
            load_checkpoint(tmp_path)
