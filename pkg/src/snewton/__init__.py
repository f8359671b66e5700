"""Damped Newton solver with singularity-detecting stepsize controls.

The package bundles a dense linear-algebra kernel, a smooth (signed)
singular-value tracker, a small corpus of nonlinear test problems, a
singularity indicator field, exact/approximate stepsize controls, the
damped Newton driver built on top of them, and a CLI that writes
delimited reports and optional figures.
"""

from .linalg import (
    DEFAULT_RANK_TOL,
    DegenerateSum,
    NoConvergence,
    NonConvergence,
    NotApplicable,
    PerturbationDecomposition,
    SharedNullspace,
    SingularMatrix,
    SvdFactorization,
    approximate_perturbed_inverse_apply,
    inverse_perturbation_bounds,
    perturbation_decompose,
    pseudoinverse_apply,
    range_restricted_inverse_apply,
    solve,
    svd,
)
from .smooth_svd import (
    ClusteredSingularValues,
    SmoothSvdState,
    StepTooLarge,
    init_smallest_triple,
    propagate,
    sigma_directional_derivative,
)
from .problems import (
    NonFiniteError,
    ProblemDefinition,
    builtin_registry,
    evaluate,
    get_problem,
    jacobian,
    linear_compose,
    scalar_quadratic,
    second_derivative_action,
    singular_line_distance,
)
from .polynomials import DimensionMismatch, ParseError, load_polynomial_system
from .indicator import (
    BorderedIndicator,
    BorderedSingular,
    CaseTag,
    FieldCell,
    FieldScanResult,
    IndicatorEval,
    LimitUnstable,
    RootEncountered,
    compute_g,
    directional_derivative_g,
    field_scan,
    griewank_reddien_g,
)
from .stepsize import (
    AsErrorDiagnostics,
    RuleTag,
    StepsizeDecision,
    approximate_control,
    as_error_diagnostics,
    core_quantities,
    exact_control,
    hybrid_control,
)
from .solver import (
    GridCellResult,
    IterationRecord,
    Rule,
    SolverConfig,
    Status,
    TerminationReport,
    grid_run,
    quadratic_tail_check,
)
from .solver import solve as newton_solve

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_RANK_TOL",
    "SingularMatrix",
    "NonConvergence",
    "NotApplicable",
    "SharedNullspace",
    "DegenerateSum",
    "NoConvergence",
    "SvdFactorization",
    "PerturbationDecomposition",
    "svd",
    "solve",
    "pseudoinverse_apply",
    "inverse_perturbation_bounds",
    "perturbation_decompose",
    "approximate_perturbed_inverse_apply",
    "range_restricted_inverse_apply",
    "ClusteredSingularValues",
    "StepTooLarge",
    "SmoothSvdState",
    "init_smallest_triple",
    "propagate",
    "sigma_directional_derivative",
    "NonFiniteError",
    "ProblemDefinition",
    "builtin_registry",
    "get_problem",
    "evaluate",
    "jacobian",
    "second_derivative_action",
    "scalar_quadratic",
    "linear_compose",
    "singular_line_distance",
    "ParseError",
    "DimensionMismatch",
    "load_polynomial_system",
    "CaseTag",
    "IndicatorEval",
    "BorderedIndicator",
    "BorderedSingular",
    "LimitUnstable",
    "RootEncountered",
    "FieldCell",
    "FieldScanResult",
    "compute_g",
    "directional_derivative_g",
    "griewank_reddien_g",
    "field_scan",
    "RuleTag",
    "StepsizeDecision",
    "AsErrorDiagnostics",
    "core_quantities",
    "exact_control",
    "approximate_control",
    "hybrid_control",
    "as_error_diagnostics",
    "Rule",
    "Status",
    "SolverConfig",
    "IterationRecord",
    "TerminationReport",
    "GridCellResult",
    "newton_solve",
    "grid_run",
    "quadratic_tail_check",
    "__version__",
]
