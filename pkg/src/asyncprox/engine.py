"""Deterministic discrete-event simulation of one parameter server and K workers.

Four algorithms run on the same event loop:

* ``tap-svrg``   — workers ship variance-reduced gradients, the server takes
  the proximal step (server-side prox, cost ``prox_cost`` per update).
* ``dap-svrg``   — workers take the proximal step themselves and ship only the
  iterate difference; the server adds it element-wise (cost ``add_cost``).
* ``dap-sgd-const`` / ``dap-sgd-decay`` — same decoupled protocol driven by a
  plain stochastic gradient, with a constant or stage-decaying step size.

Time is simulated through an abstract cost model instead of wall clock, which
makes runs bit-reproducible and staleness fully controllable.  Each worker
keeps exactly one task in flight: it reads the newest iterate right after its
previous update is applied.  With the default jitter-free costs that yields
round-robin service and a staleness bound of K - 1.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .problem import CompositeProblem, objective_value
from .regularizers import Regularizer, prox
from .svrg import (
    Snapshot,
    estimator_deviation_sq,
    make_snapshot,
    reduced_gradient,
    sample_index,
    sgd_gradient,
    task_cost_factor,
)
from .validation import check_matrix

ALGORITHMS = ("tap-svrg", "dap-svrg", "dap-sgd-const", "dap-sgd-decay")
SVRG_ALGORITHMS = frozenset({"tap-svrg", "dap-svrg"})

ITERATE_NORM_LIMIT = 1e12


class SimulationError(RuntimeError):
    """Base class for aborted simulation runs."""


class DivergenceError(SimulationError):
    """The iterate left the finite / bounded region."""


class StalenessViolationError(SimulationError):
    """Observed delay exceeded the configured cap."""


@dataclass(frozen=True)
class CostModel:
    """Simulated time units per operation kind."""

    grad_cost: float = 1.0
    prox_cost: float = 10.0
    add_cost: float = 0.01
    net_cost: float = 0.0

    def __post_init__(self):
        for name in ("grad_cost", "prox_cost", "add_cost", "net_cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.prox_cost < self.add_cost:
            raise ValueError("prox_cost must be at least add_cost")


@dataclass(frozen=True)
class AlgoConfig:
    """Everything needed to reproduce one simulated run."""

    algorithm: str
    eta: float
    stages: int
    inner_iters: int
    workers: int = 1
    seed: int = 0
    beta: float = 0.5
    max_delay_cap: int | None = None
    cost: CostModel = CostModel()
    global_sampling: bool = False
    jitter: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}, expected one of {ALGORITHMS}")
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.stages < 1 or self.inner_iters < 1:
            raise ValueError("stages and inner_iters must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.max_delay_cap is not None and self.max_delay_cap < 0:
            raise ValueError("max_delay_cap must be nonnegative")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must lie in [0, 1)")

    def stage_step(self, stage: int) -> float:
        if self.algorithm == "dap-sgd-decay":
            return self.eta / (stage + 1) ** self.beta
        return self.eta


@dataclass(frozen=True)
class UpdateMessage:
    """One worker contribution queued at the server."""

    kind: str  # "gradient" (tap) or "delta" (decoupled variants)
    payload: np.ndarray
    read_iter: int
    worker_id: int
    sample_id: int
    arrival_time: float
    x_read: np.ndarray
    grad_estimate: np.ndarray
    x_prime: np.ndarray | None


@dataclass(frozen=True)
class TraceEvent:
    """Per-update observation emitted under instrumentation."""

    t: int
    stage: int
    read_iter: int
    staleness: int
    v_dev_sq: float
    u_dev_sq: float
    p_gap: float
    subopt: float | None


@dataclass(frozen=True)
class EpochRow:
    """One progress row; `epoch` counts n gradient-equivalent evaluations."""

    epoch: float
    grad_evals: int
    sim_time: float
    subopt: float | None
    dist_sq: float | None
    mean_v_dev: float | None
    max_staleness: int | None


@dataclass
class RunRecord:
    """Full trace of one simulated run."""

    algorithm: str
    seed: int
    workers: int
    rows: list[EpochRow] = field(default_factory=list)
    stage_iterates: list[np.ndarray] = field(default_factory=list)
    final_x: np.ndarray | None = None
    trace: list[TraceEvent] | None = None
    iterates: list[np.ndarray] | None = None
    max_staleness: int = 0


def message_kind(algorithm: str) -> str:
    """The only message kind each algorithm is allowed to send."""
    return "gradient" if algorithm == "tap-svrg" else "delta"


def run(
    problem: CompositeProblem,
    cfg: AlgoConfig,
    instrument: bool = False,
    reference: tuple[np.ndarray, float] | None = None,
    x0=None,
    collect_iterates: bool = False,
    sample_override=None,
) -> RunRecord:
    """Simulate `cfg.stages` stages of the configured algorithm.

    `reference` is an optional (x_star, p_star) pair from the analysis layer;
    without it the suboptimality and distance columns stay blank.
    `sample_override(stage, draw, worker, lo, hi)` replaces the keyed sampler
    (used by the exhaustive-expectation checker).  Instrumentation is pure
    observation: it never touches the trajectory or the sample stream.
    """
    if problem.smoothness is None or problem.strong_convexity is None:
        raise ValueError("problem constants missing; call estimate_constants() first")
    svrg = cfg.algorithm in SVRG_ALGORITHMS
    if svrg:
        _warn_on_step_size(problem.sample_smoothness, cfg)

    n = problem.n
    cost = cfg.cost
    reg = problem.reg
    tap = cfg.algorithm == "tap-svrg"
    apply_cost = cost.prox_cost if tap else cost.add_cost
    kind = message_kind(cfg.algorithm)
    bounds = problem.partition(cfg.workers)
    if cfg.global_sampling:
        bounds = [(0, n)] * cfg.workers
    x_star, p_star = reference if reference is not None else (None, None)

    if x0 is None:
        x = np.zeros((problem.d1, problem.d2))
    else:
        x = check_matrix(x0, problem.d1, problem.d2, name="x0").copy()

    record = RunRecord(algorithm=cfg.algorithm, seed=cfg.seed, workers=cfg.workers)
    record.trace = [] if instrument else None
    record.iterates = [] if collect_iterates else None
    record.stage_iterates.append(x.copy())
    record.rows.append(_progress_row(problem, x, 0.0, 0, 0.0, None, None, x_star, p_star))

    time = 0.0
    grad_evals = 0
    epoch = 0.0
    global_iter = 0

    for s in range(cfg.stages):
        eta_s = cfg.stage_step(s)
        if svrg:
            snap = make_snapshot(problem, x, s, workers=cfg.workers)
            barrier = max(
                time + (hi - lo) * cost.grad_cost + cost.net_cost for lo, hi in bounds
            )
            time = barrier + cost.net_cost
            grad_evals += n
            epoch += 1.0
        else:
            snap = None

        heap: list[tuple[float, int]] = []
        in_flight: dict[int, UpdateMessage] = {}
        launched = 0
        applied = 0
        stage_v_sum = 0.0
        stage_stale_max = 0
        server_free = time

        def launch(wid: int, read_time: float):
            nonlocal launched
            lo, hi = bounds[wid]
            if sample_override is not None:
                i = int(sample_override(s, launched, wid, lo, hi))
            else:
                i = sample_index(cfg.seed, s, launched, wid, lo, hi)
            factor = task_cost_factor(cfg.seed, s, launched, wid, cfg.jitter)
            x_read = x.copy()
            if tap:
                estimate = reduced_gradient(problem, i, x_read, snap)
                payload, x_prime = estimate, None
                duration = cost.grad_cost * factor
            else:
                if svrg:
                    estimate = reduced_gradient(problem, i, x_read, snap)
                else:
                    estimate = sgd_gradient(problem, i, x_read)
                x_prime = prox(reg, x_read - eta_s * estimate, eta_s)
                payload = x_prime - x_read
                duration = (cost.grad_cost + cost.prox_cost) * factor
            arrival = read_time + duration + cost.net_cost
            msg = UpdateMessage(
                kind=kind,
                payload=payload,
                read_iter=global_iter,
                worker_id=wid,
                sample_id=i,
                arrival_time=arrival,
                x_read=x_read,
                grad_estimate=estimate,
                x_prime=x_prime,
            )
            heapq.heappush(heap, (arrival, wid))
            in_flight[wid] = msg
            launched += 1

        for wid in range(cfg.workers):
            if launched < cfg.inner_iters:
                launch(wid, time)

        while applied < cfg.inner_iters:
            arrival, wid = heapq.heappop(heap)
            msg = in_flight.pop(wid)
            start = arrival if arrival > server_free else server_free
            done = start + apply_cost
            staleness = global_iter - msg.read_iter
            if cfg.max_delay_cap is not None and staleness > cfg.max_delay_cap:
                raise StalenessViolationError(
                    f"staleness {staleness} exceeded cap {cfg.max_delay_cap} "
                    f"at stage {s}, iteration {global_iter}"
                )
            if tap:
                x_new = prox(reg, x - eta_s * msg.payload, eta_s)
            else:
                x_new = x + msg.payload
            if not np.isfinite(x_new).all() or np.linalg.norm(x_new) > ITERATE_NORM_LIMIT:
                raise DivergenceError(
                    f"iterate diverged at stage {s}, iteration {global_iter}"
                )
            v_dev = estimator_deviation_sq(problem, msg.sample_id, msg.x_read, snap)
            stage_v_sum += v_dev
            if staleness > stage_stale_max:
                stage_stale_max = staleness
            if instrument:
                record.trace.append(
                    _trace_event(
                        problem, reg, eta_s, snap, msg, x, p_star, global_iter, s,
                        staleness, v_dev,
                    )
                )
            x = x_new
            global_iter += 1
            applied += 1
            server_free = done
            if collect_iterates:
                record.iterates.append(x.copy())
            if launched < cfg.inner_iters:
                launch(wid, done)

        time = server_free
        grad_evals += cfg.inner_iters
        epoch += cfg.inner_iters / n
        if stage_stale_max > record.max_staleness:
            record.max_staleness = stage_stale_max
        record.stage_iterates.append(x.copy())
        record.rows.append(
            _progress_row(
                problem, x, epoch, grad_evals, time,
                stage_v_sum / cfg.inner_iters, stage_stale_max, x_star, p_star,
            )
        )

    record.final_x = x
    return record


def _warn_on_step_size(smoothness: float, cfg: AlgoConfig):
    tau = cfg.workers - 1
    if cfg.eta >= 1.0 / smoothness:
        warnings.warn(
            f"eta={cfg.eta:g} is not below 1/smoothness={1.0 / smoothness:g}; "
            "convergence guarantees do not apply",
            stacklevel=3,
        )
    guard = 8.0 * smoothness**2 * cfg.eta**2 * tau**2
    if guard >= 1.0:
        warnings.warn(
            f"8 L^2 eta^2 tau^2 = {guard:g} >= 1 with tau={tau}; "
            "the variance bound does not apply at this step size",
            stacklevel=3,
        )


def _progress_row(problem, x, epoch, grad_evals, sim_time, mean_v_dev, stale, x_star, p_star):
    subopt = None
    dist_sq = None
    if p_star is not None:
        subopt = objective_value(problem, x) - p_star
        dist_sq = float(np.vdot(x - x_star, x - x_star))
    return EpochRow(
        epoch=epoch,
        grad_evals=grad_evals,
        sim_time=sim_time,
        subopt=subopt,
        dist_sq=dist_sq,
        mean_v_dev=mean_v_dev,
        max_staleness=stale,
    )


def _trace_event(problem, reg, eta_s, snap, msg, x_server, p_star, t, stage, staleness, v_dev):
    try:
        u_dev = estimator_deviation_sq(problem, msg.sample_id, x_server, snap)
        x_prime = msg.x_prime
        if x_prime is None:
            x_prime = prox(reg, msg.x_read - eta_s * msg.grad_estimate, eta_s)
        p_gap = objective_value(problem, msg.x_read) - objective_value(problem, x_prime)
        subopt = None if p_star is None else objective_value(problem, x_server) - p_star
    except Exception as exc:  # downgrade to missing fields, never perturb the run
        warnings.warn(f"instrumentation failed at iteration {t}: {exc}", stacklevel=2)
        u_dev = float("nan")
        p_gap = float("nan")
        subopt = None
    return TraceEvent(
        t=t,
        stage=stage,
        read_iter=msg.read_iter,
        staleness=staleness,
        v_dev_sq=v_dev,
        u_dev_sq=u_dev,
        p_gap=p_gap,
        subopt=subopt,
    )


def serial_prox_svrg(
    problem: CompositeProblem,
    eta: float,
    stages: int,
    inner_iters: int,
    seed: int,
) -> list[np.ndarray]:
    """Reference serial proximal SVRG loop.

    Uses the same keyed sampler and the same update arithmetic (prox step
    applied as an additive difference) as the simulator, so a single-worker
    decoupled run reproduces it bit for bit.  Returns the per-stage iterates,
    starting from the zero initial point.
    """
    n = problem.n
    x = np.zeros((problem.d1, problem.d2))
    iterates = [x.copy()]
    for s in range(stages):
        snap = make_snapshot(problem, x, s, workers=1)
        for j in range(inner_iters):
            i = sample_index(seed, s, j, 0, 0, n)
            v = reduced_gradient(problem, i, x, snap)
            x_prime = prox(problem.reg, x - eta * v, eta)
            x = x + (x_prime - x)
        iterates.append(x.copy())
    return iterates


@dataclass(frozen=True)
class SpeedupRow:
    workers: int
    time_to_target: float | None
    speedup: float | None


def simulated_speedup(
    problem: CompositeProblem,
    cfg: AlgoConfig,
    worker_counts: list[int],
    target_subopt: float,
    reference: tuple[np.ndarray, float],
) -> list[SpeedupRow]:
    """Time-to-target study across worker counts, normalized to one worker.

    Progress is sampled at stage boundaries.  Targets never reached within the
    stage budget yield empty cells instead of an exception.
    """
    times: dict[int, float | None] = {}
    for k in sorted(set(worker_counts) | {1}):
        rec = run(problem, replace(cfg, workers=k), reference=reference)
        times[k] = _first_time_at_target(rec, target_subopt)
    base = times[1]
    rows = []
    for k in worker_counts:
        t = times[k]
        speedup = None
        if base is not None and t is not None and t > 0:
            speedup = base / t
        rows.append(SpeedupRow(workers=k, time_to_target=t, speedup=speedup))
    return rows


def _first_time_at_target(record: RunRecord, target: float) -> float | None:
    for row in record.rows:
        if row.subopt is not None and row.subopt <= target:
            return row.sim_time
    return None
