"""Shared instance builders for the test suite."""

import numpy as np

from marrr import IndicatorConfig, MultiCohortDataset, PenaltySet
from marrr.preprocess import PreparedProblem


def orthonormal_rows(q, n, seed=0):
    """A q x n matrix with orthonormal rows (q <= n)."""
    rng = np.random.default_rng(seed)
    qmat, _ = np.linalg.qr(rng.standard_normal((n, q)))
    return qmat[:, :q].T


def planted_two_cohort(seed=0, p=40, q=5, n1=30, n2=30):
    """Two cohorts with shared + individual modules for both terms (K=L=3).

    Signal scales are kept moderate so both solvers keep every module
    active; noise has unit sd.
    """
    rng = np.random.default_rng(seed)
    n = n1 + n2
    y = rng.standard_normal((q, n))
    c = np.array([[1, 1, 0], [1, 0, 1]])
    cfg = IndicatorConfig(c_y=c, c_s=c)
    x = rng.standard_normal((p, n))
    for col in c.T:
        sel = np.zeros(n, dtype=bool)
        for j, (a, b) in enumerate([(0, n1), (n1, n)]):
            if col[j]:
                sel[a:b] = True
        bk = rng.standard_normal((p, 2)) @ rng.standard_normal((q, 2)).T
        x[:, sel] += (bk @ y[:, sel]) / np.sqrt(q)
        sl = rng.standard_normal((p, 2)) @ \
            rng.standard_normal((int(sel.sum()), 2)).T
        x[:, sel] += sl / 2.0
    ds = MultiCohortDataset(x, y, (n1, n2))
    return ds, cfg


def global_s_problem(x):
    """PreparedProblem + config + unit-free pieces for a single global
    auxiliary module over one cohort (K=0, L=1)."""
    p, n = x.shape
    prob = PreparedProblem(x=np.asarray(x, dtype=float), y_mods=[],
                           boundaries=[(0, n)])
    cfg = IndicatorConfig(c_y=np.zeros((1, 0), dtype=int),
                          c_s=np.ones((1, 1), dtype=int))
    return prob, cfg


def single_b_problem(x, y_orth):
    """PreparedProblem + config for one covariate module over one cohort
    (K=1, L=0); y_orth must already have orthonormal rows."""
    n = x.shape[1]
    prob = PreparedProblem(x=np.asarray(x, dtype=float),
                           y_mods=[np.asarray(y_orth, dtype=float)],
                           boundaries=[(0, n)])
    cfg = IndicatorConfig(c_y=np.ones((1, 1), dtype=int),
                          c_s=np.zeros((1, 0), dtype=int))
    return prob, cfg


def pen_for(cfg, lambda_b=None, lambda_s=None):
    """PenaltySet with explicit values, padded to the config's counts."""
    lb = np.asarray(lambda_b if lambda_b is not None else [], dtype=float)
    ls = np.asarray(lambda_s if lambda_s is not None else [], dtype=float)
    if lb.size != cfg.k_count or ls.size != cfg.l_count:
        raise ValueError("penalty lengths must match the config")
    return PenaltySet(lambda_b=lb, lambda_s=ls)
