"""Snapshot bookkeeping and the stochastic gradient estimators used by workers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import CompositeProblem, grad_partial, grad_sample
from .validation import check_matrix


@dataclass(frozen=True)
class Snapshot:
    """Anchor iterate with its full gradient, refreshed once per stage."""

    x_tilde: np.ndarray
    full_grad: np.ndarray
    stage: int


def make_snapshot(problem: CompositeProblem, x, stage: int, workers: int = 1) -> Snapshot:
    """Full gradient at x assembled from per-worker partial sums in partition order."""
    x = check_matrix(x, problem.d1, problem.d2, name="x")
    total = np.zeros((problem.d1, problem.d2))
    for lo, hi in problem.partition(workers):
        total += grad_partial(problem, x, lo, hi)
    return Snapshot(x_tilde=x.copy(), full_grad=total / problem.n, stage=stage)


def reduced_gradient(
    problem: CompositeProblem, i: int, x_stale: np.ndarray, snap: Snapshot
) -> np.ndarray:
    """Variance-reduced estimator: sample gradient recentred at the snapshot."""
    return (
        grad_sample(problem, i, x_stale)
        - grad_sample(problem, i, snap.x_tilde)
        + snap.full_grad
    )


def sgd_gradient(problem: CompositeProblem, i: int, x_stale: np.ndarray) -> np.ndarray:
    """Plain stochastic gradient (no snapshot correction)."""
    return grad_sample(problem, i, x_stale)


def sample_index(seed: int, stage: int, draw: int, worker: int, lo: int, hi: int) -> int:
    """Deterministic uniform sample from [lo, hi) keyed by run coordinates.

    The key (seed, stage, draw, worker) makes each draw independent of event
    interleaving, so single-worker runs replay the same sample sequence as a
    plain serial loop.
    """
    if hi <= lo:
        raise ValueError(f"empty sample range [{lo}, {hi})")
    rng = np.random.default_rng(np.random.SeedSequence((seed, stage, draw, worker, 0)))
    return lo + int(rng.integers(hi - lo))


def task_cost_factor(seed: int, stage: int, draw: int, worker: int, jitter: float) -> float:
    """Deterministic multiplicative jitter on per-task compute costs."""
    if jitter == 0.0:
        return 1.0
    rng = np.random.default_rng(np.random.SeedSequence((seed, stage, draw, worker, 1)))
    return max(1.0 + jitter * (2.0 * float(rng.random()) - 1.0), 0.01)


def estimator_deviation_sq(
    problem: CompositeProblem, i: int, x_eval: np.ndarray, snap: Snapshot | None
) -> float:
    """Squared distance between a worker estimator at x_eval and the true gradient.

    Uses the cached Gram matrix, so it costs far less than forming the full
    gradient; ridge terms cancel identically in both branches.
    """
    a_i = problem.samples.a[i]
    if snap is None:
        r_i = x_eval.T @ a_i - problem.samples.b[i]
        diff = 2.0 * np.outer(a_i, r_i) - 2.0 * (problem.gram @ x_eval) + problem.mean_ab
    else:
        d = x_eval - snap.x_tilde
        diff = 2.0 * (np.outer(a_i, a_i @ d) - problem.gram @ d)
    return float(np.vdot(diff, diff))
