"""Composite least-squares problems over matrix parameters.

The smooth part is an averaged squared loss with a Frobenius ridge folded in,

    smooth(x) = (1/n) * sum_i ||x^T a_i - b_i||^2 + (ridge/2) * ||x||_F^2,

and the full objective adds a nonsmooth penalty handled through its proximal
map.  Vectors are treated as single-column matrices throughout.  Each per-
sample term carries the whole ridge, so sampled gradients stay unbiased for
the gradient of `smooth`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .regularizers import Regularizer, regularizer_value
from .validation import check_matrix, check_shape


class ConstantEstimationError(RuntimeError):
    """Power iteration failed to reach the requested relative tolerance."""


def partition_bounds(n: int, workers: int) -> list[tuple[int, int]]:
    """Split sample indices [0, n) into `workers` contiguous balanced blocks."""
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if workers > n:
        raise ValueError(f"cannot partition {n} samples across {workers} workers")
    base, rem = divmod(n, workers)
    bounds = []
    lo = 0
    for k in range(workers):
        hi = lo + base + (1 if k < rem else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


@dataclass(frozen=True)
class SampleSet:
    """Paired sample matrices: row i holds the features a_i and targets b_i."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.a, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        b = np.ascontiguousarray(b)
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError("samples must be 2-d arrays")
        if a.shape[0] != b.shape[0]:
            raise ValueError(
                f"feature rows ({a.shape[0]}) and target rows ({b.shape[0]}) must match"
            )
        if a.shape[0] < 1:
            raise ValueError("need at least one sample")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("samples contain non-finite entries")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def d1(self) -> int:
        return self.a.shape[1]

    @property
    def d2(self) -> int:
        return self.b.shape[1]


@dataclass
class CompositeProblem:
    """Sampled composite objective plus cached curvature information.

    `smoothness` and `strong_convexity` can be supplied as overrides;
    otherwise call :func:`estimate_constants` before anything that needs them.
    """

    samples: SampleSet
    ridge: float = 0.0
    reg: Regularizer = Regularizer()
    smoothness: float | None = None
    strong_convexity: float | None = None
    sample_smoothness: float = field(init=False, compare=False)
    _gram: np.ndarray = field(init=False, repr=False, compare=False)
    _mean_ab: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.ridge < 0:
            raise ValueError(f"ridge must be nonnegative, got {self.ridge}")
        if not isinstance(self.reg, Regularizer):
            raise TypeError("reg must be a Regularizer")
        if self.ridge == 0.0 and not self.samples.a.any():
            raise ValueError("all-zero features with zero ridge give a degenerate problem")
        if (
            self.smoothness is not None
            and self.strong_convexity is not None
            and self.strong_convexity > self.smoothness
        ):
            raise ValueError("strong_convexity must not exceed smoothness")
        a, b = self.samples.a, self.samples.b
        self._gram = (a.T @ a) / self.n
        self._mean_ab = (2.0 / self.n) * (a.T @ b)
        # Worst-case smoothness over per-sample gradient maps; this, not the
        # average-Hessian constant, governs stochastic step-size stability.
        self.sample_smoothness = 2.0 * float((a * a).sum(axis=1).max()) + self.ridge

    @property
    def n(self) -> int:
        return self.samples.n

    @property
    def d1(self) -> int:
        return self.samples.d1

    @property
    def d2(self) -> int:
        return self.samples.d2

    @property
    def gram(self) -> np.ndarray:
        """Normalized Gram matrix A^T A / n (cached at construction)."""
        return self._gram

    @property
    def mean_ab(self) -> np.ndarray:
        """Cached (2/n) A^T B, the constant part of the full gradient."""
        return self._mean_ab

    def partition(self, workers: int) -> list[tuple[int, int]]:
        return partition_bounds(self.n, workers)


def smooth_value(problem: CompositeProblem, x) -> float:
    """The averaged squared loss plus the ridge term at x."""
    x = check_matrix(x, problem.d1, problem.d2, name="x")
    r = problem.samples.a @ x - problem.samples.b
    val = float(np.vdot(r, r)) / problem.n
    return val + 0.5 * problem.ridge * float(np.vdot(x, x))


def objective_value(problem: CompositeProblem, x) -> float:
    """Full composite objective: smooth part plus regularizer."""
    return smooth_value(problem, x) + regularizer_value(problem.reg, x)


def grad_sample(problem: CompositeProblem, i: int, x: np.ndarray) -> np.ndarray:
    """Gradient of the i-th per-sample term (ridge included) at x."""
    if not 0 <= i < problem.n:
        raise IndexError(f"sample index {i} out of range [0, {problem.n})")
    check_shape(x, problem.d1, problem.d2, name="x")
    a_i = problem.samples.a[i]
    r_i = x.T @ a_i - problem.samples.b[i]
    g = 2.0 * np.outer(a_i, r_i)
    if problem.ridge != 0.0:
        g += problem.ridge * x
    return g


def grad_partial(problem: CompositeProblem, x: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Unnormalized sum of per-sample gradients over the index block [lo, hi)."""
    check_shape(x, problem.d1, problem.d2, name="x")
    a = problem.samples.a[lo:hi]
    r = a @ x - problem.samples.b[lo:hi]
    g = 2.0 * (a.T @ r)
    if problem.ridge != 0.0:
        g += (hi - lo) * problem.ridge * x
    return g


def grad_full(problem: CompositeProblem, x) -> np.ndarray:
    """Gradient of the smooth part at x (single-pass residual form)."""
    x = check_matrix(x, problem.d1, problem.d2, name="x")
    r = problem.samples.a @ x - problem.samples.b
    g = (2.0 / problem.n) * (problem.samples.a.T @ r)
    if problem.ridge != 0.0:
        g += problem.ridge * x
    return g


def estimate_constants(
    problem: CompositeProblem, tol: float = 1e-8, max_iters: int = 10_000
) -> tuple[float, float]:
    """Estimate and store the smoothness and strong-convexity constants.

    Smoothness is 2*lam_max(A^T A)/n + ridge and strong convexity is
    2*lam_min(A^T A)/n + ridge.  The extreme eigenvalues of the Gram matrix
    come from power iteration, with a shifted second pass for the smallest
    one.  Results are written back onto the problem and returned.
    """
    gram = problem.gram
    lam_max = _power_iteration(gram, tol, max_iters)
    shifted = lam_max * np.eye(gram.shape[0]) - gram
    lam_min = max(lam_max - _power_iteration(shifted, tol, max_iters), 0.0)
    smoothness = 2.0 * lam_max + problem.ridge
    strong_convexity = min(2.0 * lam_min + problem.ridge, smoothness)
    problem.smoothness = smoothness
    problem.strong_convexity = strong_convexity
    return smoothness, strong_convexity


def _power_iteration(mat: np.ndarray, tol: float, max_iters: int) -> float:
    d = mat.shape[0]
    v = 1.0 + 0.1 * np.arange(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    lam_prev = None
    change = np.inf
    for _ in range(max_iters):
        w = mat @ v
        norm_w = np.linalg.norm(w)
        if norm_w <= 1e-300:
            return 0.0
        v = w / norm_w
        lam = float(v @ (mat @ v))
        if lam_prev is not None:
            change = abs(lam - lam_prev)
            # drive to the machine-precision plateau; tol is the accuracy floor
            if change <= 1e-14 * max(abs(lam), 1e-30):
                return max(lam, 0.0)
        lam_prev = lam
    if change <= tol * max(abs(lam), 1e-30):
        return max(lam, 0.0)
    raise ConstantEstimationError(
        f"power iteration did not converge within {max_iters} iterations: "
        f"relative change {change / max(abs(lam), 1e-30):.3e} (target {tol:.1e})"
    )
