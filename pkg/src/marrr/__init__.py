"""Multiple augmented reduced rank regression (maRRR).

Joint low-rank modeling of feature-by-sample data collected across several
cohorts: covariate-driven coefficient modules B_k Y^(k) plus auxiliary
factorization modules S^(l), each active on a configurable subset of
cohorts, estimated under structured nuclear-norm penalties with
random-matrix-theory defaults. Includes EM-style imputation of missing
entries and the simulation studies used to validate penalty choice and
solver equivalence.
"""

from .dataset import (CohortBlock, MissingMask, MultiCohortDataset,
                      classify_mask, load_dataset, load_mask, save_dataset,
                      save_mask)
from .errors import (ConfigError, DegenerateCovariateError,
                     DegenerateInputError, DegenerateMetricError,
                     DegeneracyError, DimensionError, InsufficientDataError,
                     MarrrError, ParseError, PreconditionError,
                     RankDeficiencyError, SchemaError)
from .impute import ImputationResult, impute, rse
from .linalg import (balanced_factorization, kron_ridge_solve, nuclear_norm,
                     product_singular_values, ridge_solve_gram, signed_svd,
                     soft_threshold_svd)
from .modules_config import (IndicatorConfig, PenaltySet, Violation,
                             check_prop1, enumerate_modules, forward_select,
                             load_indicator_matrix, rmt_penalties,
                             save_indicator_matrix)
from .preprocess import (OrthogonalizeTransform, PreparedProblem,
                         PreprocessInfo, StandardizeTransform, backmap_b,
                         backmap_x, center_and_scale_x,
                         load_preprocess_info, marchenko_pastur_median,
                         module_columns, orthogonalize_y, prepare_problem,
                         save_preprocess_info, standardize_y)
from .simulate import (SCENARIOS, SimulatedTruth, SimulationSpec,
                       expected_inflated_singular_value, generate,
                       make_missing, rank_sum_ratio, relative_mse,
                       run_orthogonality, run_table1a, run_table1b,
                       run_table2, two_stage_ls, two_stage_nn)
from .solver import (FitResult, ModuleFactors, SolverOptions, estimated_ranks,
                     eval_objective, eval_objective_factored, fit, load_fit,
                     options_for_imputation, save_fit, svt,
                     variance_explained)

__version__ = "0.1.0"

__all__ = [
    "CohortBlock", "MissingMask", "MultiCohortDataset", "classify_mask",
    "load_dataset", "load_mask", "save_dataset", "save_mask",
    "MarrrError", "ConfigError", "SchemaError", "ParseError",
    "DimensionError", "PreconditionError", "DegeneracyError",
    "RankDeficiencyError", "DegenerateInputError", "DegenerateCovariateError",
    "DegenerateMetricError", "InsufficientDataError",
    "ImputationResult", "impute", "rse",
    "balanced_factorization", "kron_ridge_solve", "nuclear_norm",
    "product_singular_values", "ridge_solve_gram", "signed_svd",
    "soft_threshold_svd",
    "IndicatorConfig", "PenaltySet", "Violation", "check_prop1",
    "enumerate_modules", "forward_select", "load_indicator_matrix",
    "rmt_penalties", "save_indicator_matrix",
    "OrthogonalizeTransform", "PreparedProblem", "PreprocessInfo",
    "StandardizeTransform", "backmap_b", "backmap_x", "center_and_scale_x",
    "load_preprocess_info", "marchenko_pastur_median", "module_columns",
    "orthogonalize_y", "prepare_problem", "save_preprocess_info",
    "standardize_y",
    "SCENARIOS", "SimulatedTruth", "SimulationSpec",
    "expected_inflated_singular_value", "generate", "make_missing",
    "rank_sum_ratio", "relative_mse", "run_orthogonality", "run_table1a",
    "run_table1b", "run_table2", "two_stage_ls", "two_stage_nn",
    "FitResult", "ModuleFactors", "SolverOptions", "estimated_ranks",
    "eval_objective", "eval_objective_factored", "fit", "load_fit",
    "options_for_imputation", "save_fit", "svt", "variance_explained",
]
