"""Bayesian optimization on embedded manifolds.

Gaussian-process surrogates are built on Euclidean embeddings of the search
manifold (sphere, Grassmannian, SPD matrices), and a probability-of-
improvement acquisition is maximized by projected gradient ascent on the
embedded image.  Includes gradient-descent and Nelder-Mead baselines,
benchmark problems with closed-form oracles, and a CLI emitting
reproducible CSV traces.
"""

__version__ = "0.1.0"

from .acquisition import (
    AcquisitionState,
    AscentConfig,
    ascend,
    maximize,
    pi_gradient_ambient,
    pi_value,
)
from .baselines import GradObjective, nelder_mead, riemannian_gd
from .bo import BoConfig, Objective, RunTrace, TraceRecord, proposal_dedup, run
from .egp import (
    FittingFailedError,
    GpDataset,
    GpModel,
    IllConditionedModelError,
    KernelBounds,
    KernelParams,
    default_bounds,
    fit_hyperparams,
    gram_matrix,
    kernel_eval,
    log_marginal_likelihood,
    median_heuristic_params,
    posterior,
)
from .experiments import (
    EmptyNeighborhoodError,
    FrechetProblem,
    GrassmannApproxProblem,
    SpdRegressionProblem,
    extrinsic_mean_oracle,
    frechet_grad_objective,
    frechet_objective,
    generate_spd_regression_data,
    grassmann_objective,
    latitude_circle_problem,
    random_approx_problem,
    regression_weights,
    response_design,
    spd_regression_objective,
    svd_offset_design,
    svd_oracle,
    weighted_mean_oracle,
)
from .manifolds import (
    AmbiguousSubspaceError,
    DegenerateProjectionError,
    DomainError,
    Grassmann,
    InvalidInputError,
    ManifoldError,
    ManifoldKind,
    ManifoldPoint,
    Spd,
    Sphere,
    TangentVector,
    embed,
    exp_map,
    extrinsic_distance,
    flatten_ambient,
    project_to_image,
    project_to_tangent,
    random_point,
    spd_intrinsic_distance,
    unembed,
    unflatten_ambient,
)

__all__ = [
    "AcquisitionState",
    "AmbiguousSubspaceError",
    "AscentConfig",
    "BoConfig",
    "DegenerateProjectionError",
    "DomainError",
    "EmptyNeighborhoodError",
    "FittingFailedError",
    "FrechetProblem",
    "GpDataset",
    "GpModel",
    "GradObjective",
    "Grassmann",
    "GrassmannApproxProblem",
    "IllConditionedModelError",
    "InvalidInputError",
    "KernelBounds",
    "KernelParams",
    "ManifoldError",
    "ManifoldKind",
    "ManifoldPoint",
    "Objective",
    "RunTrace",
    "Spd",
    "SpdRegressionProblem",
    "Sphere",
    "TangentVector",
    "TraceRecord",
    "ascend",
    "default_bounds",
    "embed",
    "exp_map",
    "extrinsic_distance",
    "extrinsic_mean_oracle",
    "fit_hyperparams",
    "flatten_ambient",
    "frechet_grad_objective",
    "frechet_objective",
    "generate_spd_regression_data",
    "gram_matrix",
    "grassmann_objective",
    "kernel_eval",
    "latitude_circle_problem",
    "log_marginal_likelihood",
    "maximize",
    "median_heuristic_params",
    "nelder_mead",
    "pi_gradient_ambient",
    "pi_value",
    "posterior",
    "project_to_image",
    "project_to_tangent",
    "proposal_dedup",
    "random_approx_problem",
    "random_point",
    "regression_weights",
    "response_design",
    "riemannian_gd",
    "run",
    "spd_intrinsic_distance",
    "spd_regression_objective",
    "svd_offset_design",
    "svd_oracle",
    "unembed",
    "unflatten_ambient",
    "weighted_mean_oracle",
]
