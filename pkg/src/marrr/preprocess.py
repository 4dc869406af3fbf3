"""Preprocessing: center/scale X to unit residual variance, transform each
covariate block, and record everything needed for exact back-mapping.

The noise sd of X is estimated from the singular-value spectrum: the median
singular value of the centered matrix divided by sqrt(max(p, n)) times the
square root of the Marcenko-Pastur median for the matrix aspect ratio. This
is robust to low-rank signal, which only perturbs the top of the spectrum.

Covariate blocks are transformed per module. "standardize" centers each
covariate row and scales it to unit sum of squares. "orthogonalize" (the
default) centers rows and replaces the block with the right singular vectors
of its SVD, giving orthonormal rows; this is required by the soft-threshold
solver and tends to sharpen rank recovery.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import csv

import numpy as np
from scipy import integrate, optimize

from .errors import (DegenerateCovariateError, DegenerateInputError,
                     DegeneracyError, PreconditionError, RankDeficiencyError,
                     SchemaError)
from .linalg import signed_svd


# ===== noise scale =====

@lru_cache(maxsize=None)
def marchenko_pastur_median(beta):
    """Median of the Marcenko-Pastur law with aspect ratio beta in (0, 1]."""
    beta = float(beta)
    if not 0 < beta <= 1:
        raise PreconditionError(f"aspect ratio must be in (0, 1], got {beta}")
    lo = (1 - np.sqrt(beta)) ** 2
    hi = (1 + np.sqrt(beta)) ** 2

    def density(t):
        return np.sqrt((hi - t) * (t - lo)) / (2 * np.pi * beta * t)

    def cdf_minus_half(m):
        val, _ = integrate.quad(density, lo, m, limit=200)
        return val - 0.5

    return float(optimize.brentq(cdf_minus_half, lo + 1e-12, hi - 1e-12,
                                 xtol=1e-6))


def center_and_scale_x(x, noise_sd=None):
    """Center rows of X and scale by the noise sd.

    The sd is estimated from the spectrum unless `noise_sd` supplies a known
    value (e.g. 1.0 for simulated data with unit noise, where the median-
    singular-value estimate picks up a few percent of bias from the signal
    spikes). Returns (x_scaled, row_means, sigma_hat) with
    x_scaled = (x - row_means) / sigma_hat.
    """
    x = np.asarray(x, dtype=float)
    p, n = x.shape
    if p < 2 or n < 2:
        raise PreconditionError("need at least a 2 x 2 matrix to estimate noise")
    row_means = x.mean(axis=1)
    xc = x - row_means[:, None]
    if noise_sd is not None:
        sigma_hat = float(noise_sd)
        if not sigma_hat > 0:
            raise PreconditionError(f"noise_sd must be positive, got {noise_sd}")
        return xc / sigma_hat, row_means, sigma_hat
    s = np.linalg.svd(xc, compute_uv=False)
    if s[0] <= 0:
        raise DegenerateInputError("matrix is constant within rows")
    beta = min(p, n) / max(p, n)
    sigma_hat = float(np.median(s)) / (
        np.sqrt(max(p, n)) * np.sqrt(marchenko_pastur_median(beta)))
    if sigma_hat <= 0:
        raise DegenerateInputError("estimated noise sd is zero")
    return xc / sigma_hat, row_means, sigma_hat


# ===== covariate transforms =====

@dataclass
class StandardizeTransform:
    scale: np.ndarray  # per-covariate root sum of squares after centering

    kind = "standardize"


@dataclass
class OrthogonalizeTransform:
    u: np.ndarray  # q x q left singular vectors
    d: np.ndarray  # q singular values, all positive

    kind = "orthogonalize"


def standardize_y(y):
    """Center covariate rows and scale each to unit sum of squares.

    Returns (y_scaled, scale) where scale holds the per-row root sums of
    squares of the centered matrix (the diagonal of the recorded transform).
    """
    y = np.asarray(y, dtype=float)
    yc = y - y.mean(axis=1, keepdims=True)
    t = np.sqrt(np.sum(yc ** 2, axis=1))
    floor = 1e-12 * max(1.0, float(np.abs(y).max(initial=0.0)))
    if np.any(t <= floor):
        bad = int(np.argmin(t))
        raise DegenerateCovariateError(
            f"covariate row {bad} has zero variance after centering")
    return yc / t[:, None], t


def orthogonalize_y(y):
    """Rotate a (centered) covariate block to have orthonormal rows.

    Returns (y_orth, u, d) with y = u @ diag(d) @ y_orth and
    y_orth @ y_orth.T = I. Requires q < n (otherwise the regression term
    degenerates to an unsupervised factorization) and full row rank.
    """
    y = np.asarray(y, dtype=float)
    q, n = y.shape
    if q >= n:
        raise DegeneracyError(
            f"covariate block with q={q} >= n={n}: regression would "
            "collapse to an unsupervised term")
    u, d, vt = signed_svd(y)
    if d[0] <= 0 or d[-1] <= d[0] * max(q, n) * np.finfo(float).eps:
        raise RankDeficiencyError("covariate block is rank deficient")
    return vt, u, d


def backmap_b(b_fit, transform):
    """Map a fitted coefficient matrix back to the centered-covariate basis.

    Satisfies b_original @ y_centered == b_fit @ y_transformed exactly.
    """
    if transform.kind == "standardize":
        return b_fit / transform.scale[None, :]
    if transform.kind == "orthogonalize":
        return (b_fit / transform.d[None, :]) @ transform.u.T
    raise PreconditionError(f"unknown transform kind {transform.kind!r}")


def backmap_x(x_scaled, info):
    """Undo center_and_scale_x: sigma_hat * x + row_means."""
    return info.sigma_hat * np.asarray(x_scaled, dtype=float) \
        + info.row_means[:, None]


# ===== preprocess record =====

@dataclass
class PreprocessInfo:
    row_means: np.ndarray
    sigma_hat: float
    y_transforms: list = field(default_factory=list)


@dataclass
class PreparedProblem:
    """Solver-ready data: scaled X, per-module transformed covariate
    matrices (q x n, zero outside member cohorts), cohort boundaries."""
    x: np.ndarray
    y_mods: list
    boundaries: list

    @property
    def p(self):
        return self.x.shape[0]

    @property
    def n(self):
        return self.x.shape[1]


def module_columns(c_col, boundaries, n):
    """Boolean column mask for a module's member cohorts."""
    sel = np.zeros(n, dtype=bool)
    for j, (a, b) in enumerate(boundaries):
        if c_col[j]:
            sel[a:b] = True
    return sel


def prepare_problem(ds, cfg, y_treatment="orthogonalize", noise_sd=None):
    """Scale X, transform each covariate module, and assemble solver input.

    Each module's covariate block (the member-cohort columns of Y) is row
    centered and then standardized or orthogonalized; the transformed block
    is embedded back at the member columns with zeros elsewhere. Pass
    `noise_sd` when the noise scale is known a priori to skip estimation.
    Returns (PreparedProblem, PreprocessInfo).
    """
    if y_treatment not in ("orthogonalize", "standardize"):
        raise PreconditionError(f"unknown y treatment {y_treatment!r}")
    x_scaled, row_means, sigma_hat = center_and_scale_x(ds.x, noise_sd=noise_sd)
    y_mods = []
    transforms = []
    k_count = cfg.c_y.shape[1] if cfg.c_y.size else 0
    for k in range(k_count):
        sel = module_columns(cfg.c_y[:, k], ds.boundaries, ds.n)
        block = ds.y[:, sel]
        if y_treatment == "standardize":
            tblock, scale = standardize_y(block)
            transforms.append(StandardizeTransform(scale=scale))
        else:
            centered = block - block.mean(axis=1, keepdims=True)
            tblock, u, d = orthogonalize_y(centered)
            transforms.append(OrthogonalizeTransform(u=u, d=d))
        y_mod = np.zeros((ds.q, ds.n))
        y_mod[:, sel] = tblock
        y_mods.append(y_mod)
    info = PreprocessInfo(row_means=row_means, sigma_hat=sigma_hat,
                          y_transforms=transforms)
    return PreparedProblem(x=x_scaled, y_mods=y_mods,
                           boundaries=list(ds.boundaries)), info


# ===== sidecar serialization =====

def _fmt(v):
    return repr(float(v))


def save_preprocess_info(info, path):
    """Write the preprocess record as structured text with CSV blocks."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["format", "marrr-preprocess-info-v1"])
        w.writerow(["sigma_hat", _fmt(info.sigma_hat)])
        w.writerow(["begin", "row_means"])
        w.writerow([_fmt(v) for v in info.row_means])
        w.writerow(["end", "row_means"])
        for k, tr in enumerate(info.y_transforms):
            w.writerow(["begin", "y_transform", str(k), tr.kind])
            if tr.kind == "standardize":
                w.writerow(["scale"])
                w.writerow([_fmt(v) for v in tr.scale])
            else:
                w.writerow(["d"])
                w.writerow([_fmt(v) for v in tr.d])
                w.writerow(["u"])
                for row in tr.u:
                    w.writerow([_fmt(v) for v in row])
            w.writerow(["end", "y_transform"])


def load_preprocess_info(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["format", "marrr-preprocess-info-v1"]:
        raise SchemaError(f"{path}: not a preprocess info file")
    sigma_hat = None
    row_means = None
    transforms = []
    i = 1
    while i < len(rows):
        row = rows[i]
        if row[0] == "sigma_hat":
            sigma_hat = float(row[1])
            i += 1
        elif row[:2] == ["begin", "row_means"]:
            row_means = np.array([float(v) for v in rows[i + 1]])
            i += 3
        elif row[:2] == ["begin", "y_transform"]:
            kind = row[3]
            if kind == "standardize":
                scale = np.array([float(v) for v in rows[i + 2]])
                transforms.append(StandardizeTransform(scale=scale))
                i += 3
            else:
                d = np.array([float(v) for v in rows[i + 2]])
                q = len(d)
                u = np.array([[float(v) for v in rows[i + 4 + r]]
                              for r in range(q)])
                transforms.append(OrthogonalizeTransform(u=u, d=d))
                i += 4 + q
            if rows[i][:2] != ["end", "y_transform"]:
                raise SchemaError(f"{path}: malformed y_transform block")
            i += 1
        else:
            raise SchemaError(f"{path}: unexpected line {i + 1}: {row}")
    if sigma_hat is None or row_means is None:
        raise SchemaError(f"{path}: missing sigma_hat or row_means")
    return PreprocessInfo(row_means=row_means, sigma_hat=sigma_hat,
                          y_transforms=transforms)
