import numpy as np
import pytest
from sklearn.base import clone

from asyncprox import AsyncProxRegressor
from asyncprox.cli import generate_lowrank


@pytest.fixture(scope="module")
def lowrank_data():
    problem, x_true = generate_lowrank(10, 4, 2, 200, seed=3)
    return problem.samples.a, problem.samples.b, x_true


def test_fit_predict_recovers_low_rank_map(lowrank_data):
    X, Y, x_true = lowrank_data
    est = AsyncProxRegressor(stages=8, workers=2, seed=0)
    est.fit(X, Y)
    pred = est.predict(X)
    assert pred.shape == Y.shape
    # planted targets are exactly linear in X, so the fit should be tight
    rel_err = np.linalg.norm(pred - Y) / np.linalg.norm(Y)
    assert rel_err < 1e-2
    assert est.score(X, Y) > 0.99


def test_coef_orientation_matches_sklearn_convention(lowrank_data):
    X, Y, _ = lowrank_data
    est = AsyncProxRegressor(stages=6).fit(X, Y)
    assert est.coef_.shape == (Y.shape[1], X.shape[1])
    assert np.allclose(est.predict(X), X @ est.coef_.T)


def test_single_target_vector_y(lowrank_data):
    X, Y, _ = lowrank_data
    y = Y[:, 0]
    est = AsyncProxRegressor(stages=6, penalty="l1", penalty_weight=1e-4).fit(X, y)
    assert est.coef_.shape == (X.shape[1],)
    assert est.predict(X).shape == y.shape


def test_deterministic_given_seed(lowrank_data):
    X, Y, _ = lowrank_data
    w1 = AsyncProxRegressor(stages=4, seed=5).fit(X, Y).coef_
    w2 = AsyncProxRegressor(stages=4, seed=5).fit(X, Y).coef_
    assert np.array_equal(w1, w2)


def test_get_params_set_params_clone():
    est = AsyncProxRegressor(algorithm="tap-svrg", workers=3, eta=1e-3)
    params = est.get_params()
    assert params["algorithm"] == "tap-svrg"
    assert params["workers"] == 3
    cloned = clone(est)
    assert cloned.get_params() == params
    est.set_params(workers=5)
    assert est.get_params()["workers"] == 5


def test_invalid_algorithm_rejected(lowrank_data):
    X, Y, _ = lowrank_data
    with pytest.raises(ValueError, match="algorithm"):
        AsyncProxRegressor(algorithm="sgd").fit(X, Y)


def test_predict_before_fit_raises(lowrank_data):
    X, _, _ = lowrank_data
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        AsyncProxRegressor().predict(X)


def test_predict_feature_mismatch(lowrank_data):
    X, Y, _ = lowrank_data
    est = AsyncProxRegressor(stages=2).fit(X, Y)
    with pytest.raises(ValueError, match="features"):
        est.predict(X[:, :3])


def test_input_validation(lowrank_data):
    X, Y, _ = lowrank_data
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        AsyncProxRegressor(stages=2).fit(bad, Y)


def test_record_exposed(lowrank_data):
    X, Y, _ = lowrank_data
    est = AsyncProxRegressor(stages=3, workers=2).fit(X, Y)
    assert est.record_.workers == 2
    assert len(est.record_.rows) == 4
    assert est.smoothness_ > 0
    assert est.strong_convexity_ > 0
