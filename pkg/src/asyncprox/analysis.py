"""Reference solutions, convergence-rate diagnostics, and variance-bound checks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .engine import AlgoConfig, EpochRow, RunRecord, TraceEvent, run
from .problem import CompositeProblem, estimate_constants, grad_full, objective_value
from .regularizers import prox


class ReferenceSolveError(RuntimeError):
    """Proximal gradient descent failed to reach the requested residual."""


@dataclass(frozen=True)
class ConvergenceParams:
    """Constants entering the stage-contraction factor and variance bound."""

    mu: float
    smoothness: float
    eta: float
    tau: float
    inner_iters: int
    epsilon: float = 0.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.smoothness < self.mu:
            raise ValueError("smoothness must be at least mu")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be at least 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    def variance_guard(self) -> float:
        """1 - 8 L^2 eta^2 tau^2; must stay positive for the bound to apply."""
        return 1.0 - 8.0 * self.smoothness**2 * self.eta**2 * self.tau**2


def contraction_factor(p: ConvergenceParams) -> float:
    """Per-stage contraction factor of expected suboptimality.

    Diagnostic only: evaluated exactly as stated, with no attempt to decide
    whether the parameters make it smaller than one.
    """
    guard = p.variance_guard()
    if guard <= 0:
        raise ValueError(
            f"variance guard 1 - 8 L^2 eta^2 tau^2 = {guard:g} must be positive"
        )
    L, eta, tau, m, eps = p.smoothness, p.eta, p.tau, p.inner_iters, p.epsilon
    mix = 6.0 * eta**2 + 4.0 * eta**2 * tau**2
    numerator = 2.0 / p.mu + 8.0 * L * mix * m / guard
    bracket = (
        2.0 * eta
        - 8.0 * L**2 * eta**2 * tau * eps * mix / guard
        - (6.0 * eta + 4.0 * eta * tau**2) * eps
        - 8.0 * L * mix / guard
    )
    denominator = bracket * m
    if denominator <= 0:
        raise ValueError("rate formula inapplicable at these parameters")
    return numerator / denominator


@dataclass(frozen=True)
class VarianceBoundReport:
    """Stage-level check that the estimator variance obeys its bound."""

    stage: int
    lhs: float
    rhs_term1: float
    rhs_term2: float
    holds: bool
    epsilon_observed: float


def variance_bound_report(
    trace: list[TraceEvent], p: ConvergenceParams, stage: int
) -> VarianceBoundReport:
    """Check sum ||v - grad||^2 against its bound over one stage of a trace.

    The bound compares the summed estimator deviation at the stale read points
    with a mix of prox-step objective gaps and deviations at the server
    iterates.  `epsilon_observed` is the largest ratio of the prox-step gap to
    the current suboptimality, reported rather than assumed.
    """
    guard = p.variance_guard()
    if guard <= 0:
        raise ValueError(
            f"variance guard 1 - 8 L^2 eta^2 tau^2 = {guard:g} must be positive"
        )
    m = p.inner_iters
    expected = set(range(stage * m, stage * m + m))
    events = [e for e in trace if e.stage == stage]
    seen = {e.t for e in events}
    if seen != expected:
        missing = sorted(expected - seen)
        raise ValueError(f"trace is missing iterations {missing} for stage {stage}")
    L, eta, tau = p.smoothness, p.eta, p.tau
    lhs = sum(e.v_dev_sq for e in events)
    rhs_term1 = (8.0 * L**2 * tau**2 * eta / guard) * sum(e.p_gap for e in events)
    rhs_term2 = (2.0 / guard) * sum(e.u_dev_sq for e in events)
    slack = 1e-12 + 1e-9 * abs(rhs_term1 + rhs_term2)
    ratios = [
        e.p_gap / e.subopt for e in events if e.subopt is not None and e.subopt > 0.0
    ]
    return VarianceBoundReport(
        stage=stage,
        lhs=lhs,
        rhs_term1=rhs_term1,
        rhs_term2=rhs_term2,
        holds=bool(lhs <= rhs_term1 + rhs_term2 + slack),
        epsilon_observed=max(ratios) if ratios else float("nan"),
    )


def average_variance_reports(reports: list[VarianceBoundReport]) -> VarianceBoundReport:
    """Seed-average of per-realization reports (expectation approximation)."""
    if not reports:
        raise ValueError("no reports to average")
    stages = {r.stage for r in reports}
    if len(stages) != 1:
        raise ValueError("reports span multiple stages")
    n = len(reports)
    lhs = sum(r.lhs for r in reports) / n
    rhs1 = sum(r.rhs_term1 for r in reports) / n
    rhs2 = sum(r.rhs_term2 for r in reports) / n
    slack = 1e-12 + 1e-9 * abs(rhs1 + rhs2)
    eps_values = [r.epsilon_observed for r in reports if not math.isnan(r.epsilon_observed)]
    return VarianceBoundReport(
        stage=stages.pop(),
        lhs=lhs,
        rhs_term1=rhs1,
        rhs_term2=rhs2,
        holds=bool(lhs <= rhs1 + rhs2 + slack),
        epsilon_observed=max(eps_values) if eps_values else float("nan"),
    )


def variance_bound_report_exact(
    problem: CompositeProblem,
    cfg: AlgoConfig,
    p: ConvergenceParams,
    reference: tuple[np.ndarray, float] | None = None,
    max_sequences: int = 200_000,
) -> VarianceBoundReport:
    """Exact expectation over all sample sequences of a single stage.

    Enumerates every globally-uniform sample assignment (n^m runs), so it is
    only usable for tiny problems; the delay sequence is fixed by the cost
    model as in the seed-averaged mode.
    """
    if cfg.stages != 1:
        raise ValueError("exact mode enumerates a single stage; use stages=1")
    n, m = problem.n, cfg.inner_iters
    total = n**m
    if total > max_sequences:
        raise ValueError(f"n^m = {total} sequences exceeds the budget {max_sequences}")
    reports = []
    for seq in itertools.product(range(n), repeat=m):
        rec = run(
            problem,
            cfg,
            instrument=True,
            reference=reference,
            sample_override=lambda stage, draw, wid, lo, hi, _s=seq: _s[draw],
        )
        reports.append(variance_bound_report(rec.trace, p, stage=0))
    return average_variance_reports(reports)


def solve_reference(
    problem: CompositeProblem, tol: float = 1e-10, max_iters: int = 200_000
) -> tuple[np.ndarray, float]:
    """High-accuracy minimizer via full-gradient proximal descent.

    Iterates x <- prox(x - grad(x)/L, 1/L) until the fixed-point residual
    ||x - prox(...)||_F * L drops below `tol`; returns the iterate and its
    objective value.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if problem.smoothness is None:
        estimate_constants(problem)
    eta = 1.0 / problem.smoothness
    x = np.zeros((problem.d1, problem.d2))
    residual = math.inf
    for _ in range(max_iters):
        x_next = prox(problem.reg, x - eta * grad_full(problem, x), eta)
        residual = float(np.linalg.norm(x - x_next)) / eta
        x = x_next
        if residual <= tol:
            return x, objective_value(problem, x)
    raise ReferenceSolveError(
        f"proximal descent did not reach tol={tol:g} in {max_iters} iterations "
        f"(final residual {residual:.3e})"
    )


def floored_subopt(value: float, floor: float = 1e-14) -> float:
    """Flush suboptimality within `floor` of zero to exactly zero."""
    return 0.0 if abs(value) < floor else value


def epoch_metrics(
    problem: CompositeProblem, record: RunRecord, p_star: float, x_star: np.ndarray
) -> list[EpochRow]:
    """Recompute per-stage suboptimality and squared distance against a reference.

    Suboptimality within 1e-14 of p_star is floored to exactly zero.
    """
    rows = []
    for row, x in zip(record.rows, record.stage_iterates):
        subopt = floored_subopt(objective_value(problem, x) - p_star)
        dist_sq = float(np.vdot(x - x_star, x - x_star))
        rows.append(
            EpochRow(
                epoch=row.epoch,
                grad_evals=row.grad_evals,
                sim_time=row.sim_time,
                subopt=subopt,
                dist_sq=dist_sq,
                mean_v_dev=row.mean_v_dev,
                max_staleness=row.max_staleness,
            )
        )
    return rows


def loglinear_fit(epochs, subopts, min_subopt: float = 1e-12) -> tuple[float, float]:
    """Least-squares line through log10(subopt) vs epoch on the pre-floor region.

    Returns (slope, r_squared).
    """
    pts = [
        (e, math.log10(s))
        for e, s in zip(epochs, subopts)
        if s is not None and s > min_subopt
    ]
    if len(pts) < 3:
        raise ValueError("need at least three points above the floor to fit")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r_sq = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), r_sq
