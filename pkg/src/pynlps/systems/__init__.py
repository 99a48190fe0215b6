from .checks import AssumptionReport, EllipticityReport, SamplePlan, check_assumption, check_ellipticity
from .common import (
    CallableEvaluator,
    ConstantEvaluator,
    Evaluator,
    ExpressionEvaluator,
    ExpressionFunction,
    InitialData,
    zero_matrix,
    zero_vector,
)
from .fully_nonlinear import FullyNonlinearSpec
from .linear import LinearSystemSpec
from .quasilinear import QuasilinearSystemSpec

__all__ = [
    "AssumptionReport",
    "CallableEvaluator",
    "ConstantEvaluator",
    "EllipticityReport",
    "Evaluator",
    "ExpressionEvaluator",
    "ExpressionFunction",
    "FullyNonlinearSpec",
    "InitialData",
    "LinearSystemSpec",
    "QuasilinearSystemSpec",
    "SamplePlan",
    "check_assumption",
    "check_ellipticity",
    "zero_matrix",
    "zero_vector",
]
