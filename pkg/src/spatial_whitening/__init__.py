"""Adjacency-constrained spatial whitening for quantized distributed estimation."""

__version__ = "0.1.0"

from .baselines import GlobalWhitening, cholesky_whitening, pca_whitening
from .errors import (
    DegenerateEigenvectorError,
    DegenerateRowError,
    InvalidArgumentError,
    MeanDegenerateError,
    NumericFailure,
    OptimizationError,
    SingularUpdateError,
    UndefinedEstimateError,
    WhiteningError,
)
from .estimation import (
    BitAllocation,
    allocate_bits,
    analytic_mse,
    crb,
    fuse,
    quantize,
    scheme_variances,
    solve_budget,
)
from .harness import ExperimentConfig, monte_carlo_mse, run_experiment
from .network import (
    CovarianceModel,
    SensorNetwork,
    SparsityPattern,
    adjacency_pattern,
    build_covariance,
    generate_rgg,
    sample_observations,
)
from .whitening import (
    WhiteningProblem,
    WhiteningSolution,
    cost,
    extract_wd,
    log_det_divergence,
    optimize,
)
