"""Missing-entry imputation loop and the relative-squared-error metric."""

import numpy as np
import pytest

from marrr import (
    DegenerateMetricError,
    IndicatorConfig,
    InsufficientDataError,
    MissingMask,
    MultiCohortDataset,
    PenaltySet,
    SchemaError,
    SolverOptions,
    impute,
    make_missing,
    rmt_penalties,
    rse,
)


def rank_one_dataset(seed=0, p=50, n=50, noise=0.05, shift=3.0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(p)
    v = rng.standard_normal(n)
    signal = 4.0 * np.outer(u, v) / np.sqrt(p)
    x = shift + signal + noise * rng.standard_normal((p, n))
    ds = MultiCohortDataset(x, np.zeros((0, n)), (n,))
    cfg = IndicatorConfig(c_y=np.zeros((1, 0)), c_s=np.ones((1, 1)))
    return ds, cfg, signal


def test_empty_mask_returns_input_unchanged():
    ds, cfg, _ = rank_one_dataset()
    pen = rmt_penalties(ds, cfg)
    out = impute(ds, MissingMask(()), cfg, pen)
    assert out.outer_iterations == 0
    assert out.fit is None
    assert np.array_equal(out.x_completed_original, ds.x)


def test_observed_entries_come_back_bit_exact():
    ds, cfg, _ = rank_one_dataset(seed=1)
    pen = rmt_penalties(ds, cfg)
    mask = make_missing(ds, 0.05, "entry", seed=2)
    out = impute(ds, mask, cfg, pen)
    miss = mask.bool_matrix(*ds.x.shape)
    assert np.array_equal(out.x_completed_original[~miss], ds.x[~miss])
    assert not np.isnan(out.x_completed_original).any()


def test_low_noise_rank_one_entries_are_recovered_well():
    ds, cfg, _ = rank_one_dataset(seed=3)
    pen = rmt_penalties(ds, cfg)
    mask = make_missing(ds, 0.05, "entry", seed=4)
    out = impute(ds, mask, cfg, pen)
    err = rse(ds.x, out.x_completed_original, mask)
    assert err < 0.15
    assert 1 <= out.outer_iterations <= 20
    assert out.fit is not None


def test_no_covariate_fit_leaves_missing_columns_at_row_means():
    # a fully missing column carries no information of its own; with no
    # covariates and a whole-matrix module the fitted signal for it stays at
    # the row-mean fill, so the error against held-out truth is about 1
    rng = np.random.default_rng(5)
    p, n = 30, 40
    x = 2.0 + rng.standard_normal((p, n))
    ds = MultiCohortDataset(x, np.zeros((0, n)), (n,))
    cfg = IndicatorConfig(c_y=np.zeros((1, 0)), c_s=np.ones((1, 1)))
    pen = rmt_penalties(ds, cfg)
    cols = (3, 17)
    mask = MissingMask(tuple((i, j) for j in cols for i in range(p)))
    out = impute(ds, mask, cfg, pen, noise_sd=1.0)
    observed = np.ones(n, dtype=bool)
    observed[list(cols)] = False
    row_means = ds.x[:, observed].mean(axis=1)
    for j in cols:
        assert np.allclose(out.x_completed_original[:, j], row_means,
                           atol=1e-6)


def test_fully_missing_cohort_is_rejected():
    ds, cfg, _ = rank_one_dataset(seed=6, p=10, n=12)
    two = MultiCohortDataset(ds.x, ds.y, (6, 6))
    cfg2 = IndicatorConfig(c_y=np.zeros((2, 0)), c_s=np.ones((2, 1)))
    pen = rmt_penalties(two, cfg2)
    mask = MissingMask(tuple((i, j) for i in range(10) for j in range(6, 12)))
    with pytest.raises(InsufficientDataError):
        impute(two, mask, cfg2, pen)


def test_nan_outside_mask_is_rejected():
    ds, cfg, _ = rank_one_dataset(seed=7, p=10, n=12)
    x = np.array(ds.x)
    x[2, 3] = np.nan
    bad = MultiCohortDataset(x, ds.y, (12,))
    pen = rmt_penalties(bad, cfg)
    with pytest.raises(SchemaError):
        impute(bad, MissingMask(((0, 0),)), cfg, pen)


def test_nan_under_mask_is_accepted():
    ds, cfg, _ = rank_one_dataset(seed=8, p=10, n=12)
    x = np.array(ds.x)
    x[2, 3] = np.nan
    masked = MultiCohortDataset(x, ds.y, (12,))
    pen = rmt_penalties(masked, cfg)
    out = impute(masked, MissingMask(((2, 3),)), cfg, pen)
    assert np.isfinite(out.x_completed_original[2, 3])


def test_outer_max_caps_the_number_of_passes():
    ds, cfg, _ = rank_one_dataset(seed=9)
    pen = rmt_penalties(ds, cfg)
    mask = make_missing(ds, 0.05, "entry", seed=10)
    out = impute(ds, mask, cfg, pen, outer_max=2)
    assert out.outer_iterations <= 2


def test_rse_examples():
    truth = np.arange(12, dtype=float).reshape(3, 4) + 1.0
    mask = MissingMask(((0, 0), (2, 3)))
    assert rse(truth, truth, mask) == 0.0
    assert rse(truth, np.zeros_like(truth), mask) == 1.0
    # moving every masked entry by 10% of itself gives exactly 0.01
    off = np.array(truth)
    miss = mask.bool_matrix(3, 4)
    off[miss] *= 1.1
    assert rse(truth, off, mask) == pytest.approx(0.01)


def test_rse_rejects_zero_truth_and_empty_mask():
    truth = np.zeros((3, 4))
    with pytest.raises(DegenerateMetricError):
        rse(truth, truth, MissingMask(((0, 0),)))
    with pytest.raises(DegenerateMetricError):
        rse(np.ones((3, 4)), np.ones((3, 4)), MissingMask(()))
