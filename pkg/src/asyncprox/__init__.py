"""Simulated asynchronous parameter-server solvers for composite objectives."""

from .analysis import (
    ConvergenceParams,
    ReferenceSolveError,
    VarianceBoundReport,
    average_variance_reports,
    contraction_factor,
    epoch_metrics,
    loglinear_fit,
    solve_reference,
    variance_bound_report,
    variance_bound_report_exact,
)
from .cli import ExperimentConfig, generate_lowrank, run_benchmark, run_speedup
from .engine import (
    ALGORITHMS,
    AlgoConfig,
    CostModel,
    DivergenceError,
    EpochRow,
    RunRecord,
    SimulationError,
    SpeedupRow,
    StalenessViolationError,
    TraceEvent,
    UpdateMessage,
    run,
    serial_prox_svrg,
    simulated_speedup,
)
from .estimator import AsyncProxRegressor
from .problem import (
    CompositeProblem,
    ConstantEstimationError,
    SampleSet,
    estimate_constants,
    grad_full,
    grad_partial,
    grad_sample,
    objective_value,
    partition_bounds,
    smooth_value,
)
from .regularizers import (
    ProxResult,
    Regularizer,
    prox,
    prox_gradient_step,
    prox_optimality_residual,
    regularizer_value,
    soft_threshold,
)
from .svrg import (
    Snapshot,
    estimator_deviation_sq,
    make_snapshot,
    reduced_gradient,
    sample_index,
    sgd_gradient,
)

__version__ = "0.1.0"
