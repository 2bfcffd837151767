"""conmet: meshfree construction of Riemannian contraction metrics.

Solves the matrix-valued PDE  Df^T M + M Df + M' = -C  for an autonomous
ODE x' = f(x) by optimal recovery in a matrix-valued reproducing kernel
space built from a compactly supported Wendland kernel, and provides the
diagnostics and error-study harness around it.
"""

from .kernels import RadialKernel, wendland_c8
from .systems import (
    DynamicalSystem,
    ExactMetric,
    EquilibriumCheck,
    SystemBundle,
    check_equilibrium_condition,
    jacobian_consistency,
    linear_example,
    register_system,
    get_system,
    registered_systems,
)
from .operator import (
    CollocationPointData,
    FunctionalIndex,
    triangle_indices,
    apply_operator,
    representer_column,
    riesz_representer,
    gram_entry,
)
from .collocation import (
    GridSpec,
    make_grid,
    separation_distance,
    fill_distance_estimate,
    CollocationSet,
    collocation_data,
    assemble,
    solve,
    RecoverySolution,
    SolveDiagnostics,
    FactorizationError,
)
from .evaluate import (
    eval_metric,
    eval_metric_batch,
    eval_operator,
    eval_operator_batch,
    Definiteness,
    definiteness,
    FieldSample,
    field_export,
    error_report,
    ConvergenceRow,
    ConvergenceReport,
    convergence_study,
    ellipse_points,
)

__version__ = "0.1.0"

__all__ = [
    "RadialKernel", "wendland_c8",
    "DynamicalSystem", "ExactMetric", "EquilibriumCheck", "SystemBundle",
    "check_equilibrium_condition", "jacobian_consistency", "linear_example",
    "register_system", "get_system", "registered_systems",
    "CollocationPointData", "FunctionalIndex", "triangle_indices",
    "apply_operator", "representer_column", "riesz_representer", "gram_entry",
    "GridSpec", "make_grid", "separation_distance", "fill_distance_estimate",
    "CollocationSet", "collocation_data", "assemble", "solve",
    "RecoverySolution", "SolveDiagnostics", "FactorizationError",
    "eval_metric", "eval_metric_batch", "eval_operator", "eval_operator_batch",
    "Definiteness", "definiteness", "FieldSample", "field_export",
    "error_report", "ConvergenceRow", "ConvergenceReport", "convergence_study",
    "ellipse_points",
]
