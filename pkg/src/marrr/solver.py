"""Fitting routines for the multi-cohort low-rank model

    X = sum_k B_k Y^(k) + sum_l S^(l) + E

with nuclear-norm penalties on each B_k and each S^(l). Two algorithms:

- fit_factored_als: alternating ridge updates of explicit factor pairs
  (U_B V_B^T and U_S V_S^T), minimizing the factored objective.
- fit_svt_als: block-coordinate soft-threshold SVD of each module against
  its residual; requires every covariate matrix to have orthonormal rows.

At matching penalties the two objectives have coinciding minimizers, so the
algorithms can be cross-checked against each other.
"""

import csv
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionError, PreconditionError
from .linalg import (balanced_factorization, nuclear_norm,
                     product_singular_values, ridge_solve_gram,
                     kron_ridge_solve, soft_threshold_svd)
from .preprocess import module_columns

_ORTHO_TOL = 1e-6


@dataclass
class SolverOptions:
    algorithm: str = "svt_als"
    epsilon: float = None  # None -> 1e-6 * p * n at fit time
    max_epochs: int = 200
    r_b_upper: int = 20
    r_s_upper: int = 20
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if self.algorithm not in ("svt_als", "factored_als"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be at least 1")
        if self.r_b_upper < 1 or self.r_s_upper < 1:
            raise ConfigError("rank upper bounds must be at least 1")
        if not self.init_scale > 0:
            raise ConfigError("init_scale must be positive")

    def resolve_epsilon(self, p, n):
        return self.epsilon if self.epsilon is not None else 1e-6 * p * n


@dataclass
class ModuleFactors:
    """Explicit factors: B_k = u_b[k] @ v_b[k].T (p x r, q x r) and
    S^(l) = u_s[l] @ v_s[l].T (p x r, n x r). Rows of v_s[l] outside
    module-l cohorts are identically zero."""
    u_b: list
    v_b: list
    u_s: list
    v_s: list


class FitResult:
    """Fitted modules. B holds dense p x q coefficient matrices; S is built
    on demand from the stored factors (columns outside each module's cohorts
    are exactly zero by construction)."""

    def __init__(self, b, s_factors, objective_trace, epochs, converged,
                 residual, algorithm, factors=None, problem=None):
        self.b = b
        self.s_factors = s_factors  # list of (u: p x r, v: n x r)
        self.objective_trace = np.asarray(objective_trace, dtype=float)
        self.epochs = epochs
        self.converged = converged
        self.residual = residual
        self.algorithm = algorithm
        self.factors = factors
        self.problem = problem
        self._s_cache = None

    @property
    def B(self):
        return self.b

    @property
    def S(self):
        if self._s_cache is None:
            self._s_cache = [u @ v.T for u, v in self.s_factors]
        return self._s_cache

    def signal(self):
        """Fitted sum over all modules, p x n."""
        prob = self.problem
        out = np.zeros((prob.p, prob.n))
        for k, bk in enumerate(self.b):
            out += bk @ prob.y_mods[k]
        for u, v in self.s_factors:
            out += u @ v.T
        return out


def _member_masks(c, boundaries, n):
    return [module_columns(c[:, i], boundaries, n) for i in range(c.shape[1])]


def _check_prepared(prob, cfg):
    if len(prob.y_mods) != cfg.k_count:
        raise DimensionError(
            f"{len(prob.y_mods)} covariate matrices for {cfg.k_count} modules")
    if cfg.n_cohorts != len(prob.boundaries):
        raise DimensionError("indicator rows do not match cohort count")


def fit(prob, cfg, pen, opts=None, warm=None):
    """Dispatch on opts.algorithm."""
    opts = opts or SolverOptions()
    if opts.algorithm == "svt_als":
        return fit_svt_als(prob, cfg, pen, opts, warm=warm)
    return fit_factored_als(prob, cfg, pen, opts, warm=warm)


def fit_svt_als(prob, cfg, pen, opts=None, warm=None):
    """Block-coordinate descent with soft-threshold SVD updates.

    Each B_k update is svt(residual @ Y^(k).T, lambda_B); each S^(l) update
    is svt of the residual restricted to the module's columns. Every
    covariate matrix must have orthonormal rows (each update is then an
    exact block minimization, so the objective trace is non-increasing).
    Starts from zero unless warm (a previous FitResult) is given.
    """
    opts = opts or SolverOptions(algorithm="svt_als")
    _check_prepared(prob, cfg)
    x = prob.x
    p, n = x.shape
    masks_b = _member_masks(cfg.c_y, prob.boundaries, n)
    masks_s = _member_masks(cfg.c_s, prob.boundaries, n)
    y_sub = []
    for k, mk in enumerate(masks_b):
        yk = prob.y_mods[k][:, mk]
        gram = yk @ yk.T
        if np.abs(gram - np.eye(yk.shape[0])).max() > _ORTHO_TOL:
            raise PreconditionError(
                f"covariate matrix for module {k} does not have orthonormal "
                "rows; orthogonalize it first or use factored_als")
        y_sub.append(yk)

    q = prob.y_mods[0].shape[0] if cfg.k_count else 0
    if warm is not None:
        b = [np.array(bk) for bk in warm.b]
        s_sub = [warm.s_factors[l][0] @ warm.s_factors[l][1][ml].T
                 for l, ml in enumerate(masks_s)]
    else:
        b = [np.zeros((p, q)) for _ in range(cfg.k_count)]
        s_sub = [np.zeros((p, int(ml.sum()))) for ml in masks_s]
    nn_b = [nuclear_norm(bk) for bk in b]
    nn_s = [nuclear_norm(sl) for sl in s_sub]

    fitted = np.zeros((p, n))
    for k, mk in enumerate(masks_b):
        fitted[:, mk] += b[k] @ y_sub[k]
    for l, ml in enumerate(masks_s):
        fitted[:, ml] += s_sub[l]

    eps = opts.resolve_epsilon(p, n)
    trace = []
    converged = False
    epochs = 0
    for _ in range(opts.max_epochs):
        epochs += 1
        delta = 0.0
        for k, mk in enumerate(masks_b):
            yk = y_sub[k]
            m = (x[:, mk] - fitted[:, mk] + b[k] @ yk) @ yk.T
            u, s_shr, vt = soft_threshold_svd(m, pen.lambda_b[k])
            keep = s_shr > 0
            b_new = (u[:, keep] * s_shr[keep]) @ vt[keep]
            fitted[:, mk] += (b_new - b[k]) @ yk
            delta += float(np.sum((b_new - b[k]) ** 2))
            b[k] = b_new
            nn_b[k] = float(s_shr.sum())
        for l, ml in enumerate(masks_s):
            sub = x[:, ml] - fitted[:, ml] + s_sub[l]
            u, s_shr, vt = soft_threshold_svd(sub, pen.lambda_s[l])
            keep = s_shr > 0
            s_new = (u[:, keep] * s_shr[keep]) @ vt[keep]
            fitted[:, ml] += s_new - s_sub[l]
            delta += float(np.sum((s_new - s_sub[l]) ** 2))
            s_sub[l] = s_new
            nn_s[l] = float(s_shr.sum())
        obj = 0.5 * float(np.sum((x - fitted) ** 2))
        obj += float(np.dot(pen.lambda_b, nn_b)) if cfg.k_count else 0.0
        obj += float(np.dot(pen.lambda_s, nn_s)) if cfg.l_count else 0.0
        trace.append(obj)
        if delta < eps:
            converged = True
            break

    s_factors = []
    for l, ml in enumerate(masks_s):
        u, v = balanced_factorization(s_sub[l])
        v_full = np.zeros((n, v.shape[1]))
        v_full[ml] = v
        s_factors.append((u, v_full))
    factors = ModuleFactors(
        u_b=[balanced_factorization(bk)[0] for bk in b],
        v_b=[balanced_factorization(bk)[1] for bk in b],
        u_s=[u for u, _ in s_factors],
        v_s=[v for _, v in s_factors])
    return FitResult(b, s_factors, trace, epochs, converged,
                     x - fitted, "svt_als", factors=factors, problem=prob)


def _init_factored(prob, cfg, opts, masks_s, warm):
    p, n = prob.x.shape
    q = prob.y_mods[0].shape[0] if cfg.k_count else 0
    rng = np.random.default_rng(opts.seed)

    def fresh(rows, width):
        return rng.normal(0.0, opts.init_scale, (rows, width))

    if warm is not None and warm.factors is not None:
        wf = warm.factors
        u_b = [np.array(m) for m in wf.u_b]
        v_b = [np.array(m) for m in wf.v_b]
        u_s = [np.array(m) for m in wf.u_s]
        v_s = [np.array(wf.v_s[l][ml]) for l, ml in enumerate(masks_s)]
        # a module that collapsed to rank zero cannot re-enter under ALS
        # updates; give it a tiny random column so it can
        for k in range(cfg.k_count):
            if u_b[k].shape[1] == 0:
                u_b[k], v_b[k] = fresh(p, 1), fresh(q, 1)
        for l, ml in enumerate(masks_s):
            if u_s[l].shape[1] == 0:
                u_s[l], v_s[l] = fresh(p, 1), fresh(int(ml.sum()), 1)
        return u_b, v_b, u_s, v_s

    u_b = [fresh(p, opts.r_b_upper) for _ in range(cfg.k_count)]
    v_b = [fresh(q, opts.r_b_upper) for _ in range(cfg.k_count)]
    u_s = [fresh(p, opts.r_s_upper) for _ in masks_s]
    v_s = [fresh(int(ml.sum()), opts.r_s_upper) for ml in masks_s]
    return u_b, v_b, u_s, v_s


def fit_factored_als(prob, cfg, pen, opts=None, warm=None):
    """Alternating ridge updates of the factor pairs.

    Per covariate module: U_B <- X^(k) Y^T V_B (V_B^T Y Y^T V_B + lam I)^-1
    and V_B from the system (Y Y^T) V (U^T U) + lam V = Y X^(k)T U, which
    decouples into a plain ridge solve when Y has orthonormal rows. Per
    auxiliary module the same ridge pair on the masked residual. Factors are
    initialized i.i.d. normal (sd opts.init_scale) from opts.seed, or taken
    from warm.
    """
    opts = opts or SolverOptions(algorithm="factored_als")
    _check_prepared(prob, cfg)
    if (np.asarray(pen.lambda_b) <= 0).any() or \
            (np.asarray(pen.lambda_s) <= 0).any():
        raise ConfigError("factored updates need strictly positive penalties")
    x = prob.x
    p, n = x.shape
    masks_b = _member_masks(cfg.c_y, prob.boundaries, n)
    masks_s = _member_masks(cfg.c_s, prob.boundaries, n)
    y_sub = [prob.y_mods[k][:, mk] for k, mk in enumerate(masks_b)]
    grams = [yk @ yk.T for yk in y_sub]
    ortho = [np.abs(g - np.eye(g.shape[0])).max() < 1e-10 for g in grams]

    u_b, v_b, u_s, v_s = _init_factored(prob, cfg, opts, masks_s, warm)

    fitted = np.zeros((p, n))
    for k, mk in enumerate(masks_b):
        fitted[:, mk] += (u_b[k] @ v_b[k].T) @ y_sub[k]
    for l, ml in enumerate(masks_s):
        fitted[:, ml] += u_s[l] @ v_s[l].T

    eps = opts.resolve_epsilon(p, n)
    trace = []
    converged = False
    epochs = 0
    for _ in range(opts.max_epochs):
        epochs += 1
        delta = 0.0
        for k, mk in enumerate(masks_b):
            yk, g, lam = y_sub[k], grams[k], pen.lambda_b[k]
            b_old = u_b[k] @ v_b[k].T
            xk = x[:, mk] - fitted[:, mk] + b_old @ yk
            xky = xk @ yk.T
            u_b[k] = ridge_solve_gram(xky @ v_b[k],
                                      v_b[k].T @ g @ v_b[k], lam)
            rhs = yk @ (xk.T @ u_b[k])
            gu = u_b[k].T @ u_b[k]
            if ortho[k]:
                v_b[k] = ridge_solve_gram(rhs, gu, lam)
            else:
                v_b[k] = kron_ridge_solve(g, gu, rhs, lam)
            b_new = u_b[k] @ v_b[k].T
            fitted[:, mk] += (b_new - b_old) @ yk
            delta += float(np.sum((b_new - b_old) ** 2))
        for l, ml in enumerate(masks_s):
            lam = pen.lambda_s[l]
            s_old = u_s[l] @ v_s[l].T
            xl = x[:, ml] - fitted[:, ml] + s_old
            u_s[l] = ridge_solve_gram(xl @ v_s[l], v_s[l].T @ v_s[l], lam)
            v_s[l] = ridge_solve_gram(xl.T @ u_s[l], u_s[l].T @ u_s[l], lam)
            s_new = u_s[l] @ v_s[l].T
            fitted[:, ml] += s_new - s_old
            delta += float(np.sum((s_new - s_old) ** 2))
        obj = float(np.sum((x - fitted) ** 2))
        for k in range(cfg.k_count):
            obj += pen.lambda_b[k] * (np.sum(u_b[k] ** 2) +
                                      np.sum(v_b[k] ** 2))
        for l in range(cfg.l_count):
            obj += pen.lambda_s[l] * (np.sum(u_s[l] ** 2) +
                                      np.sum(v_s[l] ** 2))
        trace.append(0.5 * obj)
        if delta < eps:
            converged = True
            break

    b = [u_b[k] @ v_b[k].T for k in range(cfg.k_count)]
    v_full = []
    for l, ml in enumerate(masks_s):
        vf = np.zeros((n, v_s[l].shape[1]))
        vf[ml] = v_s[l]
        v_full.append(vf)
    s_factors = [(u_s[l], v_full[l]) for l in range(cfg.l_count)]
    factors = ModuleFactors(u_b=u_b, v_b=v_b, u_s=list(u_s), v_s=v_full)
    return FitResult(b, s_factors, trace, epochs, converged,
                     x - fitted, "factored_als", factors=factors,
                     problem=prob)


def svt(m, lam):
    """Proximal operator of the nuclear norm: soft-threshold the singular
    values of m by lam and reconstruct."""
    u, s_shr, vt = soft_threshold_svd(m, lam)
    return (u * s_shr) @ vt


def eval_objective(prob, cfg, pen, b_list, s_list):
    """Penalized least squares with nuclear-norm penalties:
    0.5 ||X - sum B_k Y^(k) - sum S^(l)||_F^2 + sum lambda_B ||B_k||_* +
    sum lambda_S ||S^(l)||_*."""
    x = prob.x
    p, n = x.shape
    q = prob.y_mods[0].shape[0] if cfg.k_count else 0
    if len(b_list) != cfg.k_count or len(s_list) != cfg.l_count:
        raise DimensionError("module count mismatch")
    resid = np.array(x)
    obj = 0.0
    for k, bk in enumerate(b_list):
        if bk.shape != (p, q):
            raise DimensionError(f"B[{k}] has shape {bk.shape}, "
                                 f"expected {(p, q)}")
        resid -= bk @ prob.y_mods[k]
        obj += pen.lambda_b[k] * nuclear_norm(bk)
    for l, sl in enumerate(s_list):
        if sl.shape != (p, n):
            raise DimensionError(f"S[{l}] has shape {sl.shape}, "
                                 f"expected {(p, n)}")
        resid -= sl
        obj += pen.lambda_s[l] * nuclear_norm(sl)
    return 0.5 * float(np.sum(resid ** 2)) + obj


def eval_objective_factored(prob, cfg, pen, factors):
    """Factored surrogate: 0.5 {||residual||_F^2 +
    sum lambda_B (||U_B||_F^2 + ||V_B||_F^2) + sum lambda_S (...)}. At the
    minimum over factorizations of fixed B, S this equals eval_objective."""
    x = prob.x
    if len(factors.u_b) != cfg.k_count or len(factors.u_s) != cfg.l_count:
        raise DimensionError("module count mismatch")
    resid = np.array(x)
    obj = 0.0
    for k in range(cfg.k_count):
        ub, vb = factors.u_b[k], factors.v_b[k]
        if ub.shape[1] != vb.shape[1]:
            raise DimensionError(f"factor widths differ for B[{k}]")
        resid -= (ub @ vb.T) @ prob.y_mods[k]
        obj += pen.lambda_b[k] * (np.sum(ub ** 2) + np.sum(vb ** 2))
    for l in range(cfg.l_count):
        us, vs = factors.u_s[l], factors.v_s[l]
        if us.shape[1] != vs.shape[1]:
            raise DimensionError(f"factor widths differ for S[{l}]")
        resid -= us @ vs.T
        obj += pen.lambda_s[l] * (np.sum(us ** 2) + np.sum(vs ** 2))
    return 0.5 * (float(np.sum(resid ** 2)) + obj)


def variance_explained(fit, cfg):
    """Per-module signal variance table, one row per distinct cohort set.

    A covariate module and an auxiliary module over the same cohorts share a
    row; total is the squared Frobenius norm of their combined signal. Rows
    are sorted by total, descending.
    """
    prob = fit.problem
    groups = {}

    def group_for(col):
        key = tuple(int(v) for v in col)
        if key not in groups:
            sel = module_columns(np.asarray(col), prob.boundaries, prob.n)
            groups[key] = {
                "cohorts": tuple(np.flatnonzero(col)),
                "n_samples": int(sel.sum()),
                "var_b": 0.0, "var_s": 0.0,
                "b_modules": [], "s_modules": [],
                "_signal": np.zeros((prob.p, int(sel.sum()))),
                "_sel": sel,
            }
        return groups[key]

    for k, bk in enumerate(fit.b):
        g = group_for(cfg.c_y[:, k])
        sig = bk @ prob.y_mods[k][:, g["_sel"]]
        g["var_b"] += float(np.sum(sig ** 2))
        g["b_modules"].append(k)
        g["_signal"] += sig
    for l, (u, v) in enumerate(fit.s_factors):
        g = group_for(cfg.c_s[:, l])
        sig = u @ v[g["_sel"]].T
        g["var_s"] += float(np.sum(sig ** 2))
        g["s_modules"].append(l)
        g["_signal"] += sig

    rows = []
    for g in groups.values():
        g["total"] = float(np.sum(g.pop("_signal") ** 2))
        g.pop("_sel")
        rows.append(g)
    rows.sort(key=lambda r: r["total"], reverse=True)
    return rows


def estimated_ranks(fit, threshold=0.1):
    """Number of singular values above threshold, per module."""
    ranks_b = [int(np.sum(np.linalg.svd(bk, compute_uv=False) > threshold))
               for bk in fit.b]
    ranks_s = [int(np.sum(product_singular_values(u, v) > threshold))
               for u, v in fit.s_factors]
    return {"B": ranks_b, "S": ranks_s}


# ===== serialization =====

def _write_matrix(path, m):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(m):
            w.writerow([repr(float(v)) for v in row])


def _read_matrix(path, shape):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            rows.append([float(v) for v in row])
    m = np.array(rows, dtype=float) if rows else np.zeros((0, 0))
    return m.reshape(shape)


def save_fit(fit, dirpath, opts=None, pen=None):
    """Write a FitResult as a directory: per-module matrix CSVs, the
    objective trace, and a JSON metadata file."""
    os.makedirs(dirpath, exist_ok=True)
    meta = {
        "format": "marrr-fit-v1",
        "algorithm": fit.algorithm,
        "epochs": fit.epochs,
        "converged": bool(fit.converged),
        "b_shapes": [list(bk.shape) for bk in fit.b],
        "s_u_shapes": [list(u.shape) for u, _ in fit.s_factors],
        "s_v_shapes": [list(v.shape) for _, v in fit.s_factors],
    }
    if opts is not None:
        meta["options"] = {
            "algorithm": opts.algorithm, "epsilon": opts.epsilon,
            "max_epochs": opts.max_epochs, "r_b_upper": opts.r_b_upper,
            "r_s_upper": opts.r_s_upper, "seed": opts.seed,
            "init_scale": opts.init_scale,
        }
    if pen is not None:
        meta["lambda_b"] = [float(v) for v in pen.lambda_b]
        meta["lambda_s"] = [float(v) for v in pen.lambda_s]
    for k, bk in enumerate(fit.b):
        _write_matrix(os.path.join(dirpath, f"b_{k}.csv"), bk)
    for l, (u, v) in enumerate(fit.s_factors):
        _write_matrix(os.path.join(dirpath, f"s_{l}_u.csv"), u)
        _write_matrix(os.path.join(dirpath, f"s_{l}_v.csv"), v)
    with open(os.path.join(dirpath, "objective_trace.csv"), "w",
              newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "objective"])
        for i, val in enumerate(fit.objective_trace):
            w.writerow([i, repr(float(val))])
    with open(os.path.join(dirpath, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_fit(dirpath, prob=None):
    """Rebuild a FitResult from save_fit output. The residual is only
    available when the prepared problem is passed back in."""
    with open(os.path.join(dirpath, "metadata.json")) as fh:
        meta = json.load(fh)
    b = [_read_matrix(os.path.join(dirpath, f"b_{k}.csv"), tuple(shape))
         for k, shape in enumerate(meta["b_shapes"])]
    s_factors = []
    for l, (su, sv) in enumerate(zip(meta["s_u_shapes"], meta["s_v_shapes"])):
        u = _read_matrix(os.path.join(dirpath, f"s_{l}_u.csv"), tuple(su))
        v = _read_matrix(os.path.join(dirpath, f"s_{l}_v.csv"), tuple(sv))
        s_factors.append((u, v))
    trace = []
    with open(os.path.join(dirpath, "objective_trace.csv"), newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            trace.append(float(row[1]))
    fit_ = FitResult(b, s_factors, trace, meta["epochs"], meta["converged"],
                     None, meta["algorithm"], problem=prob)
    if prob is not None:
        fit_.residual = prob.x - fit_.signal()
    return fit_


def options_for_imputation(opts):
    """Per-pass options for the missing-data loop (fewer epochs per pass)."""
    return replace(opts, max_epochs=min(opts.max_epochs, 30))
