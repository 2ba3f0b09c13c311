import math

import numpy as np
import pytest

from odaframe.plugins.forest import ForestParams, NotTrainedError, RandomForest


class TestBasics:
    def test_untrained_refuses_predict(self):
        with pytest.raises(NotTrainedError):
            RandomForest().predict([1.0])

    def test_constant_target(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(100, 3))
        y = np.full(100, 42.0)
        model = RandomForest(seed=1).fit(X, y)
        for row in X[:10]:
            assert model.predict(row) == 42.0

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(200, 4))
        y = X @ [1.0, -2.0, 0.5, 0.0] + rng.normal(0, 0.1, 200)
        a = RandomForest(seed=7).fit(X, y)
        b = RandomForest(seed=7).fit(X, y)
        probe = rng.normal(size=(50, 4))
        assert [a.predict(r) for r in probe] == [b.predict(r) for r in probe]

    def test_linear_response_in_range(self):
        # y = 3x on 1-D features: in-range predictions within 10% relative error
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 10, size=(500, 1))
        y = 3.0 * X[:, 0]
        model = RandomForest(seed=4).fit(X, y)
        probes = rng.uniform(1, 9, size=50)
        for x in probes:
            pred = model.predict([x])
            assert abs(pred - 3 * x) <= 0.1 * abs(3 * x)

    def test_predictions_bounded_by_training_range(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(300, 5))
        y = rng.uniform(-7, 13, size=300)
        model = RandomForest(seed=6).fit(X, y)
        probes = rng.normal(scale=10, size=(200, 5))
        for row in probes:
            assert y.min() <= model.predict(row) <= y.max()

    def test_too_few_pairs_rejected(self):
        with pytest.raises(ValueError):
            RandomForest().fit([[1.0]], [1.0])

    def test_mean_of_trees(self):
        # Two stumps, forced by depth 0, each predicting the bootstrap mean;
        # the forest prediction is their arithmetic mean.
        X = np.array([[0.0], [1.0]])
        y = np.array([10.0, 20.0])
        model = RandomForest(ForestParams(n_trees=2, max_depth=0), seed=0).fit(X, y)
        leaf_means = [t.value for t in model.trees]
        assert model.predict([0.5]) == pytest.approx(sum(leaf_means) / 2)

    def test_respects_feature_subset_param(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(100, 9))
        y = X[:, 0]
        model = RandomForest(ForestParams(max_features=3), seed=1).fit(X, y)
        assert model.trained
