"""Path-integral laboratory for ultraviolet renormalization of a pair-interaction model."""

from .params import (BoundaryProfile, BudgetExceeded, InvalidGrid, KernelValue,
                     ModelParams, NonFiniteWeight, NonPositiveEstimate,
                     PathEnsemble, PathrenError, PreflightFailed,
                     ProfileNotAdmissible, ProposalMismatch, QuadratureFailure,
                     QuadratureSpec, RngSpec, RouteForbidden, SingularPoint,
                     TimeGrid, scaled_params)

__version__ = "0.1.0"

__all__ = [
    "BoundaryProfile", "BudgetExceeded", "InvalidGrid", "KernelValue",
    "ModelParams", "NonFiniteWeight", "NonPositiveEstimate", "PathEnsemble",
    "PathrenError", "PreflightFailed", "ProfileNotAdmissible",
    "ProposalMismatch", "QuadratureFailure", "QuadratureSpec", "RngSpec",
    "RouteForbidden", "SingularPoint", "TimeGrid", "scaled_params",
    "__version__",
]
