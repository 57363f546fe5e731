"""Prediction rule ensembles: sparse models over tree-derived rules and linear terms."""

__version__ = "0.1.0"

from .dataset import ColumnSpec, DataSet, WinsorCutpoints, load_csv, write_csv
from .ensemble import (
    FitConfig,
    FittedEnsemble,
    Term,
    build_design_matrix,
    deserialize,
    explain,
    fit_pre,
    load_model,
    predict,
    save_model,
    serialize,
)
from .errors import (
    ConvergenceError,
    DataError,
    FoldError,
    ModelFormatError,
    PreError,
    RuleSyntaxError,
    UnseenLevelError,
)
from .evaluate import auc, brier, mse, r_squared, repeated_cv
from .glm import PenaltySpec, cv_select, fit_path, soft_threshold
from .interpret import partial_dependence, term_importance, variable_importance
from .rulegen import BoostConfig, Rule, generate_rules, parse_rule
from .tree import Condition, TreeConfig, grow_tree

__all__ = [
    "BoostConfig", "ColumnSpec", "Condition", "ConvergenceError", "DataError", "DataSet", "FitConfig",
    "FittedEnsemble", "FoldError", "ModelFormatError", "PenaltySpec", "PreError", "Rule", "RuleSyntaxError",
    "Term", "TreeConfig", "UnseenLevelError", "WinsorCutpoints", "auc", "brier", "build_design_matrix",
    "cv_select", "deserialize", "explain", "fit_path", "fit_pre", "generate_rules", "grow_tree", "load_csv",
    "load_model", "mse", "parse_rule", "partial_dependence", "predict", "r_squared", "repeated_cv",
    "save_model", "serialize", "soft_threshold", "term_importance", "variable_importance", "write_csv",
]
