from .engine import Candidate, SrConfig, SymbolicRegressor, sr_fit
from .expressions import (SymbolicExpr, Template, canonical_template, expr_eval,
                          parse_expression)
from .selection import SymbolicModel, select_best, template_table

__all__ = [
    "Candidate", "SrConfig", "SymbolicRegressor", "sr_fit",
    "SymbolicExpr", "Template", "canonical_template", "expr_eval", "parse_expression",
    "SymbolicModel", "select_best", "template_table",
]
