"""Iterative imputation of missing X entries using the full model fit.

Missing entries start at the row mean (zero on the centered scale), the
model is fitted, missing entries are replaced by the fitted signal, and the
fit/replace loop repeats until the imputed values stabilize. Observed
entries are never touched.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, InsufficientDataError, SchemaError
from .preprocess import PreparedProblem, backmap_x, prepare_problem
from .solver import FitResult, SolverOptions, fit as solve, \
    options_for_imputation


@dataclass
class ImputationResult:
    x_completed: np.ndarray           # preprocessed scale
    x_completed_original: np.ndarray  # original scale
    outer_iterations: int
    fit: FitResult
    rse: float = None


def impute(ds, mask, cfg, pen, opts=None, outer_max=20,
           y_treatment="orthogonalize", noise_sd=None):
    """Fill the masked entries of ds.x by iterating model fits.

    Preprocessing (row means, noise scale, covariate transforms) is computed
    once from the row-mean-filled matrix and held fixed; the loop runs on the
    preprocessed scale with each pass warm-started from the previous fit.
    Stops when the imputed values move less than 1e-4 times the Frobenius
    norm of the observed entries, or after outer_max passes. `noise_sd`
    forwards to the preprocessing when the noise scale is known a priori.
    """
    opts = opts or SolverOptions()
    x = np.asarray(ds.x, dtype=float)
    p, n = x.shape
    miss = mask.bool_matrix(p, n)
    nan_outside = np.isnan(x) & ~miss
    if nan_outside.any():
        raise SchemaError("X has NaN entries not covered by the mask")
    for j, (a, b) in enumerate(ds.boundaries):
        if miss[:, a:b].all():
            raise InsufficientDataError(
                f"cohort {ds.cohort_ids[j]} has no observed entries")

    if not miss.any():
        prob, info = prepare_problem(ds, cfg, y_treatment=y_treatment,
                                     noise_sd=noise_sd)
        return ImputationResult(np.array(prob.x), np.array(x), 0, None)

    xm = np.where(miss, np.nan, x)
    row_means = np.nan_to_num(np.nanmean(xm, axis=1))
    x_filled = np.where(miss, row_means[:, None], x)
    ds_filled = type(ds)(x_filled, ds.y, ds.n_per_cohort,
                         cohort_ids=ds.cohort_ids, sample_ids=ds.sample_ids,
                         feature_ids=ds.feature_ids,
                         covariate_ids=ds.covariate_ids)
    prob0, info = prepare_problem(ds_filled, cfg, y_treatment=y_treatment,
                                  noise_sd=noise_sd)

    x_work = np.array(prob0.x)
    eps_impute = 1e-4 * float(np.sqrt(np.sum(x_work[~miss] ** 2)))
    pass_opts = options_for_imputation(opts)
    warm = None
    iterations = 0
    for _ in range(int(outer_max)):
        iterations += 1
        prob = PreparedProblem(x_work, prob0.y_mods, prob0.boundaries)
        warm = solve(prob, cfg, pen, pass_opts, warm=warm)
        new_vals = warm.signal()[miss]
        change = float(np.sqrt(np.sum((new_vals - x_work[miss]) ** 2)))
        x_work = np.array(x_work)
        x_work[miss] = new_vals
        if change < eps_impute:
            break

    x_original = backmap_x(x_work, info)
    x_original[~miss] = x[~miss]  # observed entries bit-exact
    return ImputationResult(x_work, x_original, iterations, warm)


def rse(truth, completed, mask):
    """Relative squared error over the masked entries:
    sum_M (truth - completed)^2 / sum_M truth^2."""
    truth = np.asarray(truth, dtype=float)
    completed = np.asarray(completed, dtype=float)
    miss = mask.bool_matrix(*truth.shape)
    denom = float(np.sum(truth[miss] ** 2))
    if denom == 0.0:
        raise DegenerateMetricError(
            "masked ground-truth entries are all zero (or the mask is empty)")
    num = float(np.sum((truth[miss] - completed[miss]) ** 2))
    return num / denom
