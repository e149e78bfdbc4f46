"""Batched entropy-regularised optimal-transport loss.

Log-domain Sinkhorn solver for discrete histograms with stable primal-cost
evaluation, analytic simplex-projected gradients, a data-parallel batch
engine, and oracles for verification.
"""

from .batch import (
    BatchLossResult,
    HistogramBatch,
    OnlineLseAccumulator,
    accumulator_merge,
    batch_backward,
    batch_forward,
    fused_log_reduction,
    validate_histogram_batch,
)
from .core import (
    CostMatrix,
    DualPotentials,
    GradientPair,
    Histogram,
    SinkhornConfig,
    SinkhornResult,
    TransportPlan,
    entropy,
    gradients,
    kernel_matrix,
    log_sinkhorn_step,
    logsumexp_online,
    marginal_residual,
    plain_sinkhorn_step,
    primal_cost,
    regularized_cost,
    run_sinkhorn,
    transport_plan,
    validate_histogram,
)
from .errors import (
    DimensionMismatch,
    DivisionUnderflow,
    MassTooSmall,
    NaNInput,
    NaNProduced,
    NegativeMass,
    NonFinite,
    NotConvergedWarning,
    NotNormalised,
    ShapeMismatch,
    SinklossError,
    ZeroMassGradient,
)
from .oracle import (
    Grid1D,
    finite_difference_gradient,
    index_grid_cost,
    random_histogram,
    reference_solve,
    separated_bumps,
    w1_1d_exact,
)

__version__ = "0.1.0"

__all__ = [
    "BatchLossResult",
    "CostMatrix",
    "DimensionMismatch",
    "DivisionUnderflow",
    "DualPotentials",
    "GradientPair",
    "Grid1D",
    "Histogram",
    "HistogramBatch",
    "MassTooSmall",
    "NaNInput",
    "NaNProduced",
    "NegativeMass",
    "NonFinite",
    "NotConvergedWarning",
    "NotNormalised",
    "OnlineLseAccumulator",
    "ShapeMismatch",
    "SinkhornConfig",
    "SinkhornResult",
    "SinklossError",
    "TransportPlan",
    "ZeroMassGradient",
    "accumulator_merge",
    "batch_backward",
    "batch_forward",
    "entropy",
    "finite_difference_gradient",
    "fused_log_reduction",
    "gradients",
    "index_grid_cost",
    "kernel_matrix",
    "log_sinkhorn_step",
    "logsumexp_online",
    "marginal_residual",
    "plain_sinkhorn_step",
    "primal_cost",
    "random_histogram",
    "reference_solve",
    "regularized_cost",
    "run_sinkhorn",
    "separated_bumps",
    "transport_plan",
    "validate_histogram",
    "validate_histogram_batch",
    "w1_1d_exact",
]
