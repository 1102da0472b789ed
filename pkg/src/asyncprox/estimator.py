"""Scikit-learn estimator facade over the simulated asynchronous solvers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .engine import ALGORITHMS, AlgoConfig, run
from .problem import CompositeProblem, SampleSet, estimate_constants
from .regularizers import Regularizer


class AsyncProxRegressor(RegressorMixin, BaseEstimator):
    """Multi-output ridge regression with a nonsmooth penalty, trained by a
    simulated asynchronous parameter server.

    Minimizes (1/n) sum_i ||W^T x_i - y_i||^2 + (ridge/2) ||W||_F^2 + penalty(W)
    with one of the four simulated algorithms.  Because the simulation is
    deterministic given `seed`, `fit` is fully reproducible.

    Parameters
    ----------
    algorithm : one of "tap-svrg", "dap-svrg", "dap-sgd-const", "dap-sgd-decay"
    penalty : one of "none", "l1", "l2", "elastic", "nuclear"
    ridge : weight of the smooth Frobenius term
    penalty_weight : weight of the nonsmooth penalty
    eta : step size; None picks 1/(4 * estimated smoothness)
    beta : decay exponent (dap-sgd-decay only)
    stages : outer rounds
    inner_iters : updates per round; None picks 2n
    workers : simulated worker count
    seed : sampling seed
    """

    def __init__(
        self,
        algorithm: str = "dap-svrg",
        penalty: str = "nuclear",
        ridge: float = 1e-3,
        penalty_weight: float = 1e-3,
        eta: float | None = None,
        beta: float = 0.5,
        stages: int = 10,
        inner_iters: int | None = None,
        workers: int = 1,
        seed: int = 0,
    ):
        self.algorithm = algorithm
        self.penalty = penalty
        self.ridge = ridge
        self.penalty_weight = penalty_weight
        self.eta = eta
        self.beta = beta
        self.stages = stages
        self.inner_iters = inner_iters
        self.workers = workers
        self.seed = seed

    def fit(self, X, y):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        single_target = y.ndim == 1
        targets = y.reshape(-1, 1) if single_target else y
        problem = CompositeProblem(
            SampleSet(X, targets),
            ridge=self.ridge,
            reg=Regularizer.from_name(self.penalty, self.penalty_weight),
        )
        estimate_constants(problem)
        eta = self.eta if self.eta is not None else 0.25 / problem.sample_smoothness
        inner = self.inner_iters if self.inner_iters is not None else 2 * problem.n
        cfg = AlgoConfig(
            algorithm=self.algorithm,
            eta=eta,
            stages=self.stages,
            inner_iters=inner,
            workers=self.workers,
            seed=self.seed,
            beta=self.beta,
        )
        record = run(problem, cfg)
        weights = record.final_x
        self._weights = weights
        self._single_target = single_target
        self.coef_ = weights.ravel() if single_target else weights.T
        self.n_features_in_ = X.shape[1]
        self.smoothness_ = problem.smoothness
        self.strong_convexity_ = problem.strong_convexity
        self.record_ = record
        return self

    def predict(self, X):
        check_is_fitted(self, "_weights")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        pred = X @ self._weights
        return pred.ravel() if self._single_target else pred
