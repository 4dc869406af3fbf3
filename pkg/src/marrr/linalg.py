"""Shared dense linear algebra helpers."""

import numpy as np


def signed_svd(m):
    """Economy SVD with a deterministic sign convention.

    Within each left singular vector the entry of largest absolute value is
    made positive (ties broken by lowest row index); the matching right
    singular vector is flipped with it, so u @ diag(s) @ vt is unchanged.
    """
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    # argmax returns the lowest index among ties on |entry|
    idx = np.argmax(np.abs(u), axis=0)
    flip = np.sign(u[idx, np.arange(u.shape[1])])
    flip[flip == 0] = 1.0
    u = u * flip
    vt = vt * flip[:, None]
    return u, s, vt


def soft_threshold_svd(m, lam):
    """SVD of m with singular values shrunk by lam (floored at zero).

    Returns (u, s_shrunk, vt); the reconstruction u @ diag(s_shrunk) @ vt is
    the nuclear-norm prox of m at level lam.
    """
    u, s, vt = signed_svd(m)
    return u, np.maximum(s - lam, 0.0), vt


def ridge_solve_gram(a, g, lam):
    """Solve x (g + lam I) = a for x, with g symmetric PSD and lam > 0."""
    k = g.shape[0]
    return np.linalg.solve(g + lam * np.eye(k), a.T).T


def kron_ridge_solve(gy, gu, rhs, lam):
    """Solve gy @ v @ gu + lam * v = rhs for v.

    gy (q x q) and gu (r x r) are symmetric PSD Gram matrices, so this is the
    positive definite Kronecker system (gu x gy + lam I) vec(v) = vec(rhs)
    solved in O(q^3 + r^3) via eigendecompositions instead of O((qr)^3).
    """
    wy, qy = np.linalg.eigh(gy)
    wu, qu = np.linalg.eigh(gu)
    rhs_rot = qy.T @ rhs @ qu
    denom = wy[:, None] * wu[None, :] + lam
    return qy @ (rhs_rot / denom) @ qu.T


def product_singular_values(u, v):
    """Singular values of u @ v.T without forming the product."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[1] == 0:
        return np.zeros(0)
    _, ru = np.linalg.qr(u)
    _, rv = np.linalg.qr(v)
    return np.linalg.svd(ru @ rv.T, compute_uv=False)


def balanced_factorization(m, rel_tol=1e-12):
    """Split m into (a, b) with m = a @ b.T and ||a||_F^2 = ||b||_F^2 equal
    to the nuclear norm of m. Singular values below rel_tol times the largest
    are dropped, so the zero matrix yields width-0 factors."""
    u, s, vt = signed_svd(m)
    keep = s > (s[0] * rel_tol if s.size else 0.0)
    root = np.sqrt(s[keep])
    return u[:, keep] * root, vt[keep].T * root


def nuclear_norm(m):
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))
