"""Command-line driver: synthetic data, benchmark runs, speedup sweeps, CSV output."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    ConvergenceParams,
    average_variance_reports,
    contraction_factor,
    solve_reference,
    variance_bound_report,
)
from .engine import (
    ALGORITHMS,
    SVRG_ALGORITHMS,
    AlgoConfig,
    CostModel,
    SimulationError,
    run,
    simulated_speedup,
)
from .problem import CompositeProblem, SampleSet, estimate_constants
from .regularizers import Regularizer

METRICS_HEADER = [
    "algorithm", "seed", "workers", "epoch", "grad_evals", "sim_time",
    "subopt", "dist_sq", "mean_v_dev", "max_staleness", "error",
]
SPEEDUP_HEADER = ["algorithm", "workers", "sim_time_to_target", "speedup"]
LEMMA_HEADER = ["stage", "lhs", "rhs_term1", "rhs_term2", "holds", "epsilon_observed"]

DESK_DIMS = dict(d1=30, d2=15, rank=5, n=500)
PAPER_DIMS = dict(d1=100, d2=50, rank=10, n=10_000)
GRID_ETAS = (1e-2, 1e-3, 1e-4)
GRID_BETAS = (0.1, 0.3, 0.5, 0.7, 0.9)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    algorithms: list[str] = field(default_factory=lambda: ["dap-svrg"])
    seeds: list[int] = field(default_factory=lambda: [0])
    workers: int = 4
    eta: float | None = None
    beta: float = 0.5
    stages: int = 10
    inner_iters: int | None = None
    d1: int = DESK_DIMS["d1"]
    d2: int = DESK_DIMS["d2"]
    rank: int = DESK_DIMS["rank"]
    n: int = DESK_DIMS["n"]
    data_seed: int = 0
    lambda1: float = 1e-3
    lambda2: float = 1e-3
    reg: str = "nuclear"
    grad_cost: float = 1.0
    prox_cost: float = 10.0
    add_cost: float = 0.01
    instrument: bool = False
    out: Path = Path("metrics.csv")
    speedup: list[int] | None = None
    target_subopt: float = 1e-6
    grid: bool = False


def generate_lowrank(
    d1: int,
    d2: int,
    rank: int,
    n: int,
    seed: int,
    ridge: float = 1e-3,
    reg: Regularizer | None = None,
) -> tuple[CompositeProblem, np.ndarray]:
    """Synthetic regression data whose target matrix has exact low rank.

    The planted matrix is a product of two standard-normal factors, the
    features are standard normal, and the targets are their exact product, so
    the unregularized residual at the planted matrix is identically zero.
    Returns the problem (ridge plus nuclear penalty by default) and the
    planted matrix.
    """
    if rank < 1 or rank > min(d1, d2):
        raise ValueError(f"rank must lie in [1, {min(d1, d2)}], got {rank}")
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((d1, rank))
    v = rng.standard_normal((d2, rank))
    x_true = u @ v.T
    a = rng.standard_normal((n, d1))
    b = a @ x_true
    if reg is None:
        reg = Regularizer.nuclear(1e-3)
    problem = CompositeProblem(SampleSet(a, b), ridge=ridge, reg=reg)
    return problem, x_true


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[dict]):
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise ConfigError(f"output directory {path.parent} does not exist")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in header])


def _build_problem(cfg: ExperimentConfig) -> tuple[CompositeProblem, np.ndarray]:
    reg = Regularizer.from_name(cfg.reg, cfg.lambda2)
    return generate_lowrank(
        cfg.d1, cfg.d2, cfg.rank, cfg.n, cfg.data_seed, ridge=cfg.lambda1, reg=reg
    )


def _algo_config(cfg: ExperimentConfig, problem: CompositeProblem, algorithm: str,
                 seed: int, eta: float | None = None, beta: float | None = None) -> AlgoConfig:
    if eta is None:
        eta = cfg.eta if cfg.eta is not None else 0.25 / problem.sample_smoothness
    inner = cfg.inner_iters if cfg.inner_iters is not None else 2 * problem.n
    return AlgoConfig(
        algorithm=algorithm,
        eta=eta,
        stages=cfg.stages,
        inner_iters=inner,
        workers=cfg.workers,
        seed=seed,
        beta=cfg.beta if beta is None else beta,
        cost=CostModel(grad_cost=cfg.grad_cost, prox_cost=cfg.prox_cost, add_cost=cfg.add_cost),
    )


def _grid_cells(cfg: ExperimentConfig, algorithm: str):
    """(label, eta, beta) cells for the learning-rate sweep."""
    if not cfg.grid:
        yield algorithm, None, None
        return
    for eta in GRID_ETAS:
        if algorithm == "dap-sgd-decay":
            for beta in GRID_BETAS:
                yield f"{algorithm}[eta={eta:g};beta={beta:g}]", eta, beta
        else:
            yield f"{algorithm}[eta={eta:g}]", eta, None


def run_benchmark(cfg: ExperimentConfig) -> int:
    """Run every (algorithm, seed) cell, write the metrics CSV, print a summary.

    Returns the process exit code: 0 on success, 3 if any run diverged or
    violated its staleness cap (those runs appear as `error` rows and the
    remaining cells still execute).
    """
    if not cfg.seeds:
        raise ConfigError("seed list is empty")
    problem, _ = _build_problem(cfg)
    estimate_constants(problem)
    reference = solve_reference(problem)
    x_star, p_star = reference

    rows: list[dict] = []
    failures = 0
    traces: dict[str, list] = {}
    max_staleness: dict[str, int] = {}
    summary: list[str] = []
    for algorithm in cfg.algorithms:
        for label, eta, beta in _grid_cells(cfg, algorithm):
            for seed in cfg.seeds:
                acfg = _algo_config(cfg, problem, algorithm, seed, eta=eta, beta=beta)
                try:
                    rec = run(problem, acfg, instrument=cfg.instrument, reference=reference)
                except SimulationError as exc:
                    failures += 1
                    rows.append(
                        dict(algorithm=label, seed=seed, workers=cfg.workers, error=str(exc))
                    )
                    summary.append(f"{label:28s} seed={seed:<4d} FAILED: {exc}")
                    continue
                for row in rec.rows:
                    subopt = row.subopt
                    if subopt is not None and abs(subopt) < 1e-14:
                        subopt = 0.0
                    rows.append(
                        dict(
                            algorithm=label,
                            seed=seed,
                            workers=cfg.workers,
                            epoch=row.epoch,
                            grad_evals=row.grad_evals,
                            sim_time=row.sim_time,
                            subopt=subopt,
                            dist_sq=row.dist_sq,
                            mean_v_dev=row.mean_v_dev,
                            max_staleness=row.max_staleness,
                            error=None,
                        )
                    )
                last = rec.rows[-1]
                summary.append(
                    f"{label:28s} seed={seed:<4d} final_subopt={last.subopt:.3e} "
                    f"sim_time={last.sim_time:.6g} max_staleness={rec.max_staleness}"
                )
                if cfg.instrument and algorithm in SVRG_ALGORITHMS:
                    traces.setdefault(label, []).append((acfg, rec.trace))
                    max_staleness[label] = max(max_staleness.get(label, 0), rec.max_staleness)

    _write_csv(cfg.out, METRICS_HEADER, rows)
    print(f"wrote {len(rows)} rows to {cfg.out}")
    for line in summary:
        print(line)
    _print_rate_diagnostic(cfg, problem)
    if cfg.instrument:
        _write_variance_reports(cfg, problem, traces, max_staleness)
    return 3 if failures else 0


def _print_rate_diagnostic(cfg: ExperimentConfig, problem: CompositeProblem):
    eta = cfg.eta if cfg.eta is not None else 0.25 / problem.sample_smoothness
    inner = cfg.inner_iters if cfg.inner_iters is not None else 2 * problem.n
    params = ConvergenceParams(
        mu=problem.strong_convexity,
        smoothness=problem.sample_smoothness,
        eta=eta,
        tau=cfg.workers - 1,
        inner_iters=inner,
    )
    try:
        rho = contraction_factor(params)
        print(f"stage contraction factor at these settings: {rho:.6g}")
    except ValueError as exc:
        print(f"stage contraction factor: not applicable ({exc})")


def _write_variance_reports(cfg, problem, traces, max_staleness):
    for label, runs_ in traces.items():
        tau = max(max_staleness.get(label, 0), 0)
        params = ConvergenceParams(
            mu=problem.strong_convexity,
            smoothness=problem.sample_smoothness,
            eta=runs_[0][0].eta,
            tau=tau,
            inner_iters=runs_[0][0].inner_iters,
        )
        if params.variance_guard() <= 0:
            print(f"variance report for {label}: skipped (guard not positive)")
            continue
        out_rows = []
        for stage in range(cfg.stages):
            reports = [
                variance_bound_report(trace, params, stage) for _, trace in runs_
            ]
            agg = average_variance_reports(reports)
            out_rows.append(
                dict(
                    stage=stage,
                    lhs=agg.lhs,
                    rhs_term1=agg.rhs_term1,
                    rhs_term2=agg.rhs_term2,
                    holds=agg.holds,
                    epsilon_observed=agg.epsilon_observed,
                )
            )
        safe = label.replace("[", "_").replace("]", "").replace(";", "_")
        path = Path(cfg.out).with_name(f"{Path(cfg.out).stem}_lemma_{safe}.csv")
        _write_csv(path, LEMMA_HEADER, out_rows)
        print(f"wrote variance report to {path}")


def run_speedup(cfg: ExperimentConfig) -> int:
    """Time-to-target sweep over worker counts; writes the speedup CSV."""
    if not cfg.seeds:
        raise ConfigError("seed list is empty")
    if not cfg.speedup:
        raise ConfigError("no worker counts given for the speedup sweep")
    problem, _ = _build_problem(cfg)
    estimate_constants(problem)
    reference = solve_reference(problem)
    rows = []
    for algorithm in cfg.algorithms:
        base = _algo_config(cfg, problem, algorithm, cfg.seeds[0])
        for srow in simulated_speedup(problem, base, cfg.speedup, cfg.target_subopt, reference):
            rows.append(
                dict(
                    algorithm=algorithm,
                    workers=srow.workers,
                    sim_time_to_target=srow.time_to_target,
                    speedup=srow.speedup,
                )
            )
            reached = "unreachable" if srow.time_to_target is None else f"{srow.time_to_target:.6g}"
            print(f"{algorithm:12s} workers={srow.workers:<3d} time_to_target={reached}")
    _write_csv(cfg.out, SPEEDUP_HEADER, rows)
    print(f"wrote {len(rows)} rows to {cfg.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncprox",
        description="Simulated asynchronous parameter-server benchmarks for "
        "composite objectives (CSV output).",
    )
    parser.add_argument("--algorithm", action="append", choices=ALGORITHMS,
                        help="algorithm to run; repeatable (default: dap-svrg)")
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--eta", type=float, default=None,
                        help="step size (default: 1/(4 * smoothness))")
    parser.add_argument("--beta", type=float, default=0.5,
                        help="decay exponent for dap-sgd-decay")
    parser.add_argument("--stages", type=int, default=10)
    parser.add_argument("--inner", type=int, default=None,
                        help="inner iterations per stage (default: 2n)")
    parser.add_argument("--d1", type=int, default=DESK_DIMS["d1"])
    parser.add_argument("--d2", type=int, default=DESK_DIMS["d2"])
    parser.add_argument("--rank", type=int, default=DESK_DIMS["rank"])
    parser.add_argument("--n", type=int, default=DESK_DIMS["n"])
    parser.add_argument("--data-seed", type=int, default=0)
    parser.add_argument("--lambda1", type=float, default=1e-3,
                        help="ridge weight on the smooth part")
    parser.add_argument("--lambda2", type=float, default=1e-3,
                        help="weight of the nonsmooth penalty")
    parser.add_argument("--reg", choices=("none", "l1", "l2", "elastic", "nuclear"),
                        default="nuclear")
    parser.add_argument("--cost-grad", type=float, default=1.0)
    parser.add_argument("--cost-prox", type=float, default=10.0)
    parser.add_argument("--cost-add", type=float, default=0.01)
    parser.add_argument("--seed", action="append", type=int,
                        help="run seed; repeatable (default: 0)")
    parser.add_argument("--instrument", action="store_true",
                        help="record per-update traces and write variance reports")
    parser.add_argument("--paper-scale", action="store_true",
                        help="use the large instance (d1=100, d2=50, rank=10, n=10000)")
    parser.add_argument("--out", type=Path, default=Path("metrics.csv"))
    parser.add_argument("--speedup", type=str, default=None,
                        help="comma-separated worker counts; switches to the speedup sweep")
    parser.add_argument("--target-subopt", type=float, default=1e-6)
    parser.add_argument("--grid", action="store_true",
                        help="sweep the built-in step-size (and decay) grids")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    dims = PAPER_DIMS if args.paper_scale else DESK_DIMS
    cfg = ExperimentConfig(
        algorithms=args.algorithm or ["dap-svrg"],
        seeds=args.seed if args.seed is not None else [0],
        workers=args.workers,
        eta=args.eta,
        beta=args.beta,
        stages=args.stages,
        inner_iters=args.inner,
        d1=dims["d1"] if args.paper_scale else args.d1,
        d2=dims["d2"] if args.paper_scale else args.d2,
        rank=dims["rank"] if args.paper_scale else args.rank,
        n=dims["n"] if args.paper_scale else args.n,
        data_seed=args.data_seed,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        reg=args.reg,
        grad_cost=args.cost_grad,
        prox_cost=args.cost_prox,
        add_cost=args.cost_add,
        instrument=args.instrument,
        out=args.out,
        speedup=_parse_counts(args.speedup),
        target_subopt=args.target_subopt,
        grid=args.grid,
    )
    return cfg


def _parse_counts(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        counts = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --speedup list {text!r}: {exc}") from None
    if not counts or any(k < 1 for k in counts):
        raise ConfigError(f"bad --speedup list {text!r}")
    return counts


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if cfg.speedup is not None:
            return run_speedup(cfg)
        return run_benchmark(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
