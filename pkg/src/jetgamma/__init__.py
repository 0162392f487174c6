"""Exact symbolic calculus of total differential operators on jet spaces."""

from .expr import DiffExpr, Fibre, JetContext, eval_at, substitute, total_derivative
from .gamma import (
    AnsatzSpec,
    BiDiffOperator,
    GammaFamily,
    GaugeReport,
    check_linear_compatibility,
    check_proposition,
    check_strong_compatibility,
    extract_gamma,
    structural_constants,
    symmetry_classify,
    transform_gamma,
)
from .jetcalc import Equation, Functional, Section, Space, euler_operator, evolutionary, reduce_on_shell
from .magri import build_hierarchy, verify_hierarchy
from .operators import OperatorTuple, TotalOperator, apply, compose

__version__ = "0.1.0"

__all__ = [
    "AnsatzSpec", "BiDiffOperator", "DiffExpr", "Equation", "Fibre", "Functional", "GammaFamily",
    "GaugeReport", "JetContext", "OperatorTuple", "Section", "Space", "TotalOperator", "apply",
    "build_hierarchy", "check_linear_compatibility", "check_proposition", "check_strong_compatibility",
    "compose", "euler_operator", "eval_at", "evolutionary", "extract_gamma", "reduce_on_shell",
    "structural_constants", "substitute", "symmetry_classify", "total_derivative", "transform_gamma",
    "verify_hierarchy",
]
