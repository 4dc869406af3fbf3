"""Dense linear algebra helpers against closed forms and dense oracles."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from marrr.linalg import (
    balanced_factorization,
    kron_ridge_solve,
    nuclear_norm,
    product_singular_values,
    ridge_solve_gram,
    signed_svd,
    soft_threshold_svd,
)
from oracles import (
    dense_kron_ridge,
    nuclear_norm_ref,
    prox_objective,
    prox_optimality_gaps,
)

SHAPES = st.tuples(st.integers(1, 8), st.integers(1, 8))


@given(seed=st.integers(0, 10**6), shape=SHAPES)
def test_signed_svd_reconstructs_and_fixes_signs(seed, shape):
    m = np.random.default_rng(seed).standard_normal(shape)
    u, s, vt = signed_svd(m)
    assert np.allclose(u @ np.diag(s) @ vt, m, atol=1e-10)
    for col in range(u.shape[1]):
        peak = np.argmax(np.abs(u[:, col]))
        assert u[peak, col] >= 0


def test_signed_svd_is_deterministic():
    m = np.random.default_rng(3).standard_normal((6, 4))
    first = signed_svd(m)
    second = signed_svd(m)
    for a, b in zip(first, second):
        assert np.array_equal(a, b)


def test_soft_threshold_on_diagonal_matrix():
    m = np.diag([5.0, 2.0, 0.5])
    u, s, vt = soft_threshold_svd(m, 1.0)
    assert np.allclose(u @ np.diag(s) @ vt, np.diag([4.0, 1.0, 0.0]),
                       atol=1e-12)


def test_soft_threshold_zero_level_is_identity():
    m = np.random.default_rng(0).standard_normal((5, 7))
    u, s, vt = soft_threshold_svd(m, 0.0)
    assert np.max(np.abs(u @ np.diag(s) @ vt - m)) < 1e-10


def test_soft_threshold_above_top_singular_value_zeroes_everything():
    m = np.random.default_rng(1).standard_normal((4, 4))
    top = np.linalg.svd(m, compute_uv=False)[0]
    u, s, vt = soft_threshold_svd(m, top + 0.1)
    assert np.all(s == 0.0)


@given(seed=st.integers(0, 10**6), shape=SHAPES,
       lam=st.floats(0.05, 3.0))
def test_soft_threshold_satisfies_prox_optimality(seed, shape, lam):
    m = np.random.default_rng(seed).standard_normal(shape)
    u, s, vt = soft_threshold_svd(m, lam)
    s_hat = u @ np.diag(s) @ vt
    spectral_excess, alignment_gap = prox_optimality_gaps(m, s_hat, lam)
    assert spectral_excess < 1e-9
    assert alignment_gap < 1e-8


@given(seed=st.integers(0, 10**6))
def test_soft_threshold_objective_beats_perturbations(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((5, 5))
    lam = 1.0
    u, s, vt = soft_threshold_svd(m, lam)
    s_hat = u @ np.diag(s) @ vt
    f_hat = prox_objective(m, s_hat, lam)
    for _ in range(5):
        alt = s_hat + 0.1 * rng.standard_normal((5, 5))
        assert f_hat <= prox_objective(m, alt, lam) + 1e-12


@given(seed=st.integers(0, 10**6), q=st.integers(1, 6), rows=st.integers(1, 5),
       lam=st.floats(0.01, 10.0))
def test_ridge_solve_gram_satisfies_normal_equations(seed, q, rows, lam):
    rng = np.random.default_rng(seed)
    half = rng.standard_normal((q, q))
    g = half @ half.T
    a = rng.standard_normal((rows, q))
    x = ridge_solve_gram(a, g, lam)
    assert np.allclose(x @ (g + lam * np.eye(q)), a, atol=1e-8)


@given(seed=st.integers(0, 10**6), q=st.integers(1, 5), r=st.integers(1, 5),
       lam=st.floats(0.01, 10.0))
def test_kron_ridge_solve_matches_dense_kronecker_system(seed, q, r, lam):
    rng = np.random.default_rng(seed)
    hy = rng.standard_normal((q, q))
    hu = rng.standard_normal((r, r))
    gy, gu = hy @ hy.T, hu @ hu.T
    rhs = rng.standard_normal((q, r))
    v = kron_ridge_solve(gy, gu, rhs, lam)
    v_ref = dense_kron_ridge(gy, gu, rhs, lam)
    assert np.allclose(v, v_ref, atol=1e-8)
    assert np.allclose(gy @ v @ gu + lam * v, rhs, atol=1e-8)


@given(seed=st.integers(0, 10**6), p=st.integers(1, 8), n=st.integers(1, 8),
       r=st.integers(0, 4))
def test_product_singular_values_match_explicit_product(seed, p, n, r):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((p, r))
    v = rng.standard_normal((n, r))
    got = product_singular_values(u, v)
    ref = np.linalg.svd(u @ v.T, compute_uv=False) if r else np.zeros(0)
    k = min(len(got), len(ref))
    assert np.allclose(np.sort(got)[::-1][:k], ref[:k], atol=1e-10)
    assert np.all(np.abs(ref[k:]) < 1e-10)


@given(seed=st.integers(0, 10**6), shape=SHAPES)
def test_balanced_factorization_splits_nuclear_norm_evenly(seed, shape):
    m = np.random.default_rng(seed).standard_normal(shape)
    a, b = balanced_factorization(m)
    assert np.allclose(a @ b.T, m, atol=1e-10)
    nn = nuclear_norm_ref(m)
    assert np.isclose(np.sum(a ** 2), nn, rtol=1e-8)
    assert np.isclose(np.sum(b ** 2), nn, rtol=1e-8)


def test_balanced_factorization_of_zero_matrix_has_width_zero():
    a, b = balanced_factorization(np.zeros((4, 6)))
    assert a.shape == (4, 0)
    assert b.shape == (6, 0)


def test_balanced_factorization_keeps_exact_rank():
    rng = np.random.default_rng(5)
    m = rng.standard_normal((6, 2)) @ rng.standard_normal((5, 2)).T
    a, b = balanced_factorization(m)
    assert a.shape[1] == 2


@given(seed=st.integers(0, 10**6), shape=SHAPES)
def test_nuclear_norm_matches_reference_and_dominates_frobenius(seed, shape):
    m = np.random.default_rng(seed).standard_normal(shape)
    assert np.isclose(nuclear_norm(m), nuclear_norm_ref(m), rtol=1e-12)
    assert nuclear_norm(m) >= np.linalg.norm(m) - 1e-12


def test_nuclear_norm_of_diagonal():
    assert nuclear_norm(np.diag([3.0, 4.0])) == pytest.approx(7.0)
