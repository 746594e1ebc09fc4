"""Base learners: forests, pooled-leaf quantiles, knn difficulty."""

import json

import numpy as np
import pytest

from peloton.data import generate_synthetic
from peloton.errors import (
    ConfigurationError,
    DimensionalityError,
    InvalidArgumentError,
)
from peloton.regressors import (
    FittedRegressor,
    RegressorSpec,
    fit,
    make_constant_forest,
    make_pooled_quantile_stub,
)


class TestForestFit:
    def test_single_row_constant_predictor(self):
        spec = RegressorSpec(tree_count=3, min_leaf_size=1, seed=4)
        model = fit(spec, np.array([[1.0, 2.0]]), np.array([7.5]))
        probes = np.array([[0.0, 0.0], [100.0, -3.0]])
        assert np.all(model.predict(probes) == 7.5)

    def test_seed_determinism_bitwise(self):
        data = generate_synthetic(150, "speed", seed=2)
        X, y = data.matrix(), data.targets
        probe = generate_synthetic(40, "speed", seed=3).matrix()
        spec = RegressorSpec(tree_count=12, seed=9)
        a = fit(spec, X, y).predict(probe)
        b = fit(spec, X, y).predict(probe)
        assert np.array_equal(a, b)

    def test_different_seed_different_model(self):
        data = generate_synthetic(150, "speed", seed=2)
        X, y = data.matrix(), data.targets
        probe = generate_synthetic(40, "speed", seed=3).matrix()
        a = fit(RegressorSpec(tree_count=12, seed=1), X, y).predict(probe)
        b = fit(RegressorSpec(tree_count=12, seed=2), X, y).predict(probe)
        assert not np.array_equal(a, b)

    def test_in_sample_r2_on_synthetic_power(self):
        data = generate_synthetic(1446, "power", seed=7)
        X, y = data.matrix(), data.targets
        model = fit(RegressorSpec(tree_count=100, seed=1), X, y)
        pred = model.predict(X)
        r2 = 1.0 - ((pred - y) ** 2).sum() / ((y - y.mean()) ** 2).sum()
        assert r2 > 0.8

    def test_prediction_within_target_range(self):
        data = generate_synthetic(200, "power", seed=5)
        X, y = data.matrix(), data.targets
        model = fit(RegressorSpec(tree_count=20, seed=2), X, y)
        probe = generate_synthetic(100, "power", seed=6).matrix()
        pred = model.predict(probe)
        assert pred.min() >= y.min() and pred.max() <= y.max()

    def test_empty_dataset_rejected(self):
        from peloton.errors import EmptyDatasetError
        with pytest.raises(EmptyDatasetError):
            fit(RegressorSpec(), np.empty((0, 3)), np.empty(0))

    def test_fingerprint_tracks_data(self):
        X = np.arange(20, dtype=float).reshape(10, 2)
        y = np.arange(10, dtype=float)
        spec = RegressorSpec(tree_count=2, min_leaf_size=1, seed=0)
        a = fit(spec, X, y)
        b = fit(spec, X, y + 1.0)
        assert a.fingerprint != b.fingerprint


class TestForestPredict:
    def test_constant_model(self):
        model = make_constant_forest([42.0])
        assert model.predict(np.array([[1.0], [2.0]])).tolist() == [42.0, 42.0]

    def test_depth_zero_tree_root_leaf_mean(self):
        spec = RegressorSpec(tree_count=1, max_depth=0, min_leaf_size=1, bootstrap=False)
        model = fit(spec, np.array([[0.0], [1.0]]), np.array([10.0, 20.0]))
        assert model.predict_one([0.5]) == 15.0

    def test_two_tree_hand_forest_mean(self):
        # mean of per-tree leaf values 10 and 30 is 20 for any input
        model = make_constant_forest([10.0, 30.0])
        assert model.predict_one([3.3]) == 20.0

    def test_dimensionality_mismatch(self):
        data = generate_synthetic(50, "speed", seed=2)
        model = fit(RegressorSpec(tree_count=2, seed=1), data.matrix(), data.targets)
        with pytest.raises(DimensionalityError):
            model.predict(np.zeros((3, 4)))


class TestQuantileForest:
    def test_median_of_small_pool(self):
        model = make_pooled_quantile_stub([1.0, 2.0, 3.0])
        assert model.predict_quantile(np.array([[0.0]]), 0.5)[0] == 2.0

    def test_linear_interpolation_rule(self):
        model = make_pooled_quantile_stub([2.0, 4.0, 6.0, 8.0])
        assert model.predict_quantile(np.array([[0.0]]), 0.75)[0] == 6.5

    def test_monotone_in_q(self):
        data = generate_synthetic(300, "speed", seed=8)
        model = fit(
            RegressorSpec(kind="quantile_forest", tree_count=25, seed=3),
            data.matrix(), data.targets,
        )
        probe = generate_synthetic(20, "speed", seed=9).matrix()
        grid = np.arange(0.05, 0.96, 0.05)
        values = np.stack([model.predict_quantile(probe, q) for q in grid], axis=1)
        assert (np.diff(values, axis=1) >= -1e-12).all()

    def test_q_range_enforced(self):
        model = make_pooled_quantile_stub([1.0, 2.0])
        for q in (0.0, 1.0, -0.5):
            with pytest.raises(InvalidArgumentError):
                model.predict_quantile(np.array([[0.0]]), q)

    def test_plain_forest_refuses_quantiles(self):
        model = make_constant_forest([1.0])
        with pytest.raises(ConfigurationError):
            model.predict_quantile(np.array([[0.0]]), 0.5)


class TestKnnDifficulty:
    def _fit_line(self, residuals, k):
        X = np.arange(len(residuals), dtype=float).reshape(-1, 1)
        return fit(RegressorSpec(kind="knn", k=k), X, np.asarray(residuals, dtype=float))

    def test_constant_field(self):
        model = self._fit_line([2.0] * 6, k=3)
        out = model.predict_difficulty(np.array([[0.3], [4.9], [100.0]]))
        assert np.all(out == 2.0)

    def test_nearest_self_with_k1(self):
        model = self._fit_line([5.0, 1.0, 9.0], k=1)
        assert model.predict_difficulty(np.array([[1.0]]))[0] == 1.0

    def test_three_nearest_mean_with_tie_break(self):
        # query 1.0 against points 0..4: nearest three are {1, 0, 2}
        # (the 0-vs-2 tie resolves to the lower index first, same mean)
        model = self._fit_line([1.0, 3.0, 5.0, 9.0, 9.0], k=3)
        assert model.predict_difficulty(np.array([[1.0]]))[0] == 3.0

    def test_requires_at_least_k_points(self):
        with pytest.raises(ConfigurationError):
            self._fit_line([1.0, 2.0], k=3)

    def test_same_residuals_same_outputs(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 5))
        resid = np.abs(rng.normal(size=40))
        a = fit(RegressorSpec(kind="knn", k=7), X, resid)
        b = fit(RegressorSpec(kind="knn", k=7), X, resid)
        probe = rng.normal(size=(10, 5))
        assert np.array_equal(a.predict_difficulty(probe), b.predict_difficulty(probe))

    def test_forest_refuses_difficulty(self):
        model = make_constant_forest([1.0])
        with pytest.raises(ConfigurationError):
            model.predict_difficulty(np.array([[0.0]]))


class TestPersistence:
    @pytest.mark.parametrize(
        "spec",
        [
            RegressorSpec(kind="random_forest", tree_count=6, seed=3),
            RegressorSpec(kind="quantile_forest", tree_count=6, seed=3),
            RegressorSpec(kind="knn", k=5),
        ],
    )
    def test_json_round_trip_identical_predictions(self, spec):
        data = generate_synthetic(80, "speed", seed=12)
        X, y = data.matrix(), data.targets
        model = fit(spec, X, y)
        blob = json.dumps(model.to_state_dict())
        restored = FittedRegressor.from_state_dict(json.loads(blob))
        probe = generate_synthetic(30, "speed", seed=13).matrix()
        assert np.array_equal(model.predict(probe), restored.predict(probe))
        if spec.kind == "quantile_forest":
            for q in (0.05, 0.5, 0.95):
                assert np.array_equal(
                    model.predict_quantile(probe, q), restored.predict_quantile(probe, q)
                )
        if spec.kind == "knn":
            assert np.array_equal(
                model.predict_difficulty(probe), restored.predict_difficulty(probe)
            )
        assert restored.fingerprint == model.fingerprint


class TestSpecValidation:
    def test_bad_kind(self):
        with pytest.raises(InvalidArgumentError):
            RegressorSpec(kind="boosting")

    def test_bad_counts(self):
        with pytest.raises(InvalidArgumentError):
            RegressorSpec(tree_count=0)
        with pytest.raises(InvalidArgumentError):
            RegressorSpec(k=0)
        with pytest.raises(InvalidArgumentError):
            RegressorSpec(min_leaf_size=0)
