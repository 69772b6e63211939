import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bnnsv import BayesianNeuralNetwork, LinearHorseshoe
from bnnsv.exceptions import DimensionError


@pytest.fixture(scope="module")
def xy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 3))
    return X, np.tanh(X[:, 0]) + 0.5 * X[:, 1] + 0.2 * rng.normal(size=60)


class TestEstimator:
    def test_params_round_trip(self):
        est = BayesianNeuralNetwork(n_neurons=4, activation="common", random_state=3)
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert twin.set_params(n_draws=50).n_draws == 50

    def test_fit_predict(self, xy):
        X, y = xy
        est = BayesianNeuralNetwork(n_draws=60, n_burn=30, n_neurons=2, random_state=1).fit(X, y)
        assert est.n_features_in_ == 3
        assert est.chain_.n_draws == 30
        assert est.predict(X).shape == (60,)
        assert est.predict(X[0]).shape == (1,)

    def test_seeded_fits_agree(self, xy):
        X, y = xy
        a = BayesianNeuralNetwork(n_draws=30, n_burn=10, n_neurons=2, random_state=5).fit(X, y)
        b = BayesianNeuralNetwork(n_draws=30, n_burn=10, n_neurons=2, random_state=5).fit(X, y)
        np.testing.assert_array_equal(a.predict(X), b.predict(X))

    def test_linear_benchmark_scores_well(self, xy):
        X, y = xy
        est = LinearHorseshoe(n_draws=400, n_burn=100, random_state=2).fit(X, y)
        assert est.chain_.config.linear_only
        assert est.score(X, y) > 0.7

    def test_predict_draws(self, xy):
        X, y = xy
        est = LinearHorseshoe(n_draws=50, n_burn=10, random_state=2).fit(X, y)
        draws = est.predict_draws(X[:3], horizon=2, random_state=0)
        assert len(draws) == 3 and len(draws[0]) == 40

    def test_not_fitted(self, xy):
        with pytest.raises(NotFittedError):
            BayesianNeuralNetwork().predict(xy[0])

    def test_feature_mismatch(self, xy):
        X, y = xy
        est = LinearHorseshoe(n_draws=20, n_burn=10, random_state=2).fit(X, y)
        with pytest.raises(DimensionError):
            est.predict(X[:, :2])

    @pytest.mark.parametrize("kw", [dict(activation="softmax"), dict(n_draws=0),
                                    dict(n_neurons=1.5)])
    def test_invalid_params(self, xy, kw):
        with pytest.raises(ValueError):
            BayesianNeuralNetwork(**kw).fit(*xy)

    def test_non_finite_input(self, xy):
        X, y = xy
        y = y.copy()
        y[3] = np.nan
        with pytest.raises(ValueError):
            LinearHorseshoe(n_draws=20, n_burn=10).fit(X, y)
