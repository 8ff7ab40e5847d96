"""Stochastic subspace identification of autonomous linear systems from multiple trajectories."""

from .bench_harness import (
    ExperimentConfig,
    RateReport,
    coverage_experiment,
    fit_rate,
    nonzero_mean_experiment,
    run_sweep,
)
from .estimator import StochasticSubspaceID
from .exceptions import (
    AssumptionError,
    ConfigError,
    ConvergenceError,
    DimensionError,
    RankDeficiencyError,
    StochIdError,
    UnobservableEstimateError,
)
from .finite_sample_bounds import (
    BoundReport,
    RealizationBoundReport,
    concentration_diagnostics,
    realization_bound,
    sample_thresholds,
    sigma_nG_floor,
    estimation_error_bound,
    weighted_innovation_covariance,
)
from .linsys_core import (
    KalmanSequence,
    SteadyStateFilter,
    SystemModel,
    check_model,
    extended_observability,
    kalman_recursion,
    preset,
    reversed_controllability,
    steady_reversed_controllability,
    steady_state_filter,
    toeplitz_weight,
    transition_product,
    true_G,
    validate_model,
)
from .subspace_id import (
    AlignmentResult,
    IdentificationResult,
    align,
    balanced_realization,
    identify,
    realization_errors,
    regress_G,
)
from .trajectory_sim import (
    BatchMatrices,
    InnovationSet,
    TrajectorySet,
    build_batch,
    innovations,
    process_noise_toeplitz,
    read_dataset,
    simulate,
    write_dataset,
)

__version__ = "0.1.0"
