"""Crowd density estimation by relaxed entropic transport.

The package fits a nonnegative density grid to point annotations by
descending a debiased transport loss whose source marginal is only softly
constrained, optionally tied to a coarser prediction of the same scene
through a cross-resolution agreement term. Reference solvers, file formats,
and a command line front end round out the toolkit.
"""

from .balanced import (
    DualPotentials,
    SolverConfig,
    TransportPlan,
    balanced_value,
    plan_from_potentials,
    self_value,
    sinkhorn_divergence,
    solve_balanced,
    symmetric_potential,
)
from .errors import (
    EmptyMeasureError,
    EvaluateBeforeConvergenceError,
    FitDivergedError,
    MassMismatchError,
    MeasureFormatError,
    NotConvergedError,
    OverflowInExponentError,
    S3Error,
)
from .fit import (
    GAUSSIAN_CLUSTERS,
    L2_PSEUDO,
    LOSS_KINDS,
    S3,
    SEMIBALANCED,
    SINGLE_LINE,
    UNIFORM,
    WASSERSTEIN,
    FitConfig,
    FitResult,
    FitTrace,
    LossConfig,
    count_from_grid,
    count_metrics,
    fit_density_grid,
    gaussian_target,
    generate_scene,
    matched_peaks,
    recovered_peaks,
)
from .generators import kl_penalty, phi, phi_star
from .measures import (
    COST_KINDS,
    EUCLIDEAN,
    SQUARED_EUCLIDEAN,
    CostMatrix,
    GridMeasure,
    PointMeasure,
    build_cost,
    grid_to_discrete,
    load_grid_measure,
    load_point_measure,
    mass,
    save_grid_measure,
    save_point_measure,
    write_pgm,
)
from .oracle import entropic_primal_bruteforce, exact_ot_lp
from .scale import (
    SUM_POOL,
    ScaleLossResult,
    ScaleTransform,
    downscale,
    pool_backward,
    scale_consistency_loss,
)
from .semibalanced import (
    GRAD_ENVELOPE,
    GRAD_NONE,
    GRAD_UNROLLED,
    CountingLossResult,
    counting_loss,
    grid_point_costs,
    semibalanced_dual_objective,
    semibalanced_grad_alpha,
    semibalanced_value,
    solve_semibalanced,
)

__version__ = "0.1.0"

__all__ = [
    "CostMatrix",
    "CountingLossResult",
    "DualPotentials",
    "EmptyMeasureError",
    "EvaluateBeforeConvergenceError",
    "FitConfig",
    "FitDivergedError",
    "FitResult",
    "FitTrace",
    "GridMeasure",
    "LossConfig",
    "MassMismatchError",
    "MeasureFormatError",
    "NotConvergedError",
    "OverflowInExponentError",
    "PointMeasure",
    "COST_KINDS",
    "EUCLIDEAN",
    "GAUSSIAN_CLUSTERS",
    "GRAD_ENVELOPE",
    "GRAD_NONE",
    "GRAD_UNROLLED",
    "L2_PSEUDO",
    "LOSS_KINDS",
    "S3",
    "SEMIBALANCED",
    "SINGLE_LINE",
    "SQUARED_EUCLIDEAN",
    "SUM_POOL",
    "UNIFORM",
    "WASSERSTEIN",
    "S3Error",
    "ScaleLossResult",
    "ScaleTransform",
    "SolverConfig",
    "TransportPlan",
    "balanced_value",
    "build_cost",
    "grid_point_costs",
    "count_from_grid",
    "count_metrics",
    "counting_loss",
    "downscale",
    "entropic_primal_bruteforce",
    "exact_ot_lp",
    "fit_density_grid",
    "gaussian_target",
    "generate_scene",
    "grid_to_discrete",
    "kl_penalty",
    "load_grid_measure",
    "load_point_measure",
    "mass",
    "matched_peaks",
    "phi",
    "phi_star",
    "plan_from_potentials",
    "pool_backward",
    "recovered_peaks",
    "save_grid_measure",
    "save_point_measure",
    "scale_consistency_loss",
    "self_value",
    "semibalanced_dual_objective",
    "semibalanced_grad_alpha",
    "semibalanced_value",
    "sinkhorn_divergence",
    "solve_balanced",
    "solve_semibalanced",
    "symmetric_potential",
    "write_pgm",
]
