"""Linearisation schemes for Richards' equation and tools to measure their convergence order."""

from ._kernels import BACKEND
from .accel import AndersonState, aa_step, wrap
from .constitutive import ManufacturedModel, SoilModel, l_theta_bound
from .exceptions import (
    ConfigError,
    DegenerateLog,
    DomainViolation,
    LinearSolveFailure,
    MismatchedProblem,
    NoConvergence,
    NotHalving,
    RichardsLabError,
    SingularJacobian,
    StabilityViolated,
    TooShort,
)
from .iteration import SchemeConfig
from .orders import CorrectionSequence, OrderReport, Verdict, classify, eoc

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AndersonState",
    "aa_step",
    "wrap",
    "ManufacturedModel",
    "SoilModel",
    "l_theta_bound",
    "ConfigError",
    "DegenerateLog",
    "DomainViolation",
    "LinearSolveFailure",
    "MismatchedProblem",
    "NoConvergence",
    "NotHalving",
    "RichardsLabError",
    "SingularJacobian",
    "StabilityViolated",
    "TooShort",
    "SchemeConfig",
    "CorrectionSequence",
    "OrderReport",
    "Verdict",
    "classify",
    "eoc",
    "__version__",
]
