import numpy as np
import pytest

from asyncprox import Regularizer, SampleSet, CompositeProblem, estimate_constants, solve_reference
from asyncprox.cli import generate_lowrank


def make_problem(n, d1, d2, seed, ridge=0.0, reg=None, scale=1.0):
    """Random dense problem for unit tests (no planted structure)."""
    rng = np.random.default_rng(seed)
    a = scale * rng.standard_normal((n, d1))
    b = scale * rng.standard_normal((n, d2))
    return CompositeProblem(SampleSet(a, b), ridge=ridge, reg=reg or Regularizer.none())


@pytest.fixture(scope="session")
def desk_problem():
    problem, _ = generate_lowrank(30, 15, 5, 500, seed=0)
    estimate_constants(problem)
    return problem


@pytest.fixture(scope="session")
def desk_reference(desk_problem):
    return solve_reference(desk_problem)


@pytest.fixture(scope="session")
def elastic_problem():
    problem, _ = generate_lowrank(
        30, 15, 5, 500, seed=0, ridge=1e-3, reg=Regularizer.elastic_net(1e-3, 1e-3)
    )
    estimate_constants(problem)
    return problem


@pytest.fixture(scope="session")
def elastic_reference(elastic_problem):
    return solve_reference(elastic_problem)


@pytest.fixture(scope="session")
def lasso_1d_problem():
    # f(x) = (x - 1)^2, h(x) = |x|; minimizer at x = 1/2
    problem = CompositeProblem(
        SampleSet(np.array([[1.0]]), np.array([[1.0]])), reg=Regularizer.l1(1.0)
    )
    estimate_constants(problem)
    return problem


@pytest.fixture(scope="session")
def small_lasso_problem():
    # 30 scalar samples with an l1 penalty, used by the variance-bound checks
    rng = np.random.default_rng(42)
    a = rng.standard_normal((30, 1)) * 1.5
    b = rng.standard_normal((30, 1))
    problem = CompositeProblem(SampleSet(a, b), ridge=1e-2, reg=Regularizer.l1(0.05))
    estimate_constants(problem)
    return problem
