"""Module membership config: indicator matrices, RMT penalties, the
penalty-validity checker, and module selection."""

import csv
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigError, SchemaError
from .linalg import nuclear_norm, soft_threshold_svd
from .preprocess import module_columns


class IndicatorConfig:
    """Binary membership matrices: c_y (J x K) for covariate modules and
    c_s (J x L) for auxiliary modules. No duplicate columns within either
    matrix; every column names at least one cohort."""

    def __init__(self, c_y, c_s):
        self.c_y = self._validate(c_y, "C_Y")
        self.c_s = self._validate(c_s, "C_S")
        if self.c_y.shape[0] != self.c_s.shape[0]:
            raise ConfigError("C_Y and C_S must have one row per cohort each")

    @staticmethod
    def _validate(c, name):
        c = np.asarray(c, dtype=int)
        if c.ndim == 1:
            c = c[:, None]
        if c.size == 0:
            c = c.reshape(c.shape[0] if c.ndim == 2 else 0, 0)
        if c.ndim != 2:
            raise ConfigError(f"{name} must be a 2-d matrix")
        if c.size and not np.isin(c, (0, 1)).all():
            raise ConfigError(f"{name} entries must be 0 or 1")
        if c.shape[1] and (c.sum(axis=0) == 0).any():
            raise ConfigError(f"{name} has an empty module column")
        cols = {tuple(col) for col in c.T}
        if len(cols) != c.shape[1]:
            raise ConfigError(f"duplicate columns within {name}")
        return c

    @property
    def n_cohorts(self):
        return self.c_y.shape[0]

    @property
    def k_count(self):
        return self.c_y.shape[1]

    @property
    def l_count(self):
        return self.c_s.shape[1]


@dataclass
class PenaltySet:
    lambda_b: np.ndarray
    lambda_s: np.ndarray

    def __post_init__(self):
        self.lambda_b = np.asarray(self.lambda_b, dtype=float)
        self.lambda_s = np.asarray(self.lambda_s, dtype=float)
        if (self.lambda_b <= 0).any() or (self.lambda_s <= 0).any():
            raise ConfigError("penalties must be strictly positive")


def rmt_penalties(ds, cfg):
    """Random-matrix-theory penalties, assuming X scaled to unit noise sd:
    lambda_B = sqrt(p) + sqrt(q) per covariate module, lambda_S = sqrt(p) +
    sqrt(module sample count) per auxiliary module."""
    p, q = ds.p, ds.q
    n_js = np.asarray(ds.n_per_cohort)
    if cfg.c_s.shape[1] and (cfg.c_s.sum(axis=0) == 0).any():
        raise ConfigError("auxiliary module with no cohorts")
    lambda_b = np.full(cfg.k_count, np.sqrt(p) + np.sqrt(q))
    module_n = cfg.c_s.T @ n_js if cfg.l_count else np.zeros(0)
    lambda_s = np.sqrt(p) + np.sqrt(module_n)
    return PenaltySet(lambda_b=lambda_b, lambda_s=lambda_s)


# ===== penalty validity (non-degeneracy) checks =====

@dataclass
class Violation:
    condition: int
    target_kind: str  # "B" or "S"
    target: int
    cover: tuple
    multiplicity: int
    lhs: float
    bound: float

    def __str__(self):
        return (f"condition {self.condition}: lambda_{self.target_kind}"
                f"[{self.target}] = {self.lhs:.4f} must be < {self.bound:.4f} "
                f"(cover {self.cover}, multiplicity {self.multiplicity})")


def _exact_covers(columns, target, exclude=None, full_limit=15):
    """Find (subset, c) with sum of the subset's columns == c * target.

    Columns with support outside the target are never eligible. All subsets
    are tried when few columns are eligible; otherwise only covers of size
    <= 3 (small covers catch the degeneracies that occur in practice).
    """
    j, m = columns.shape
    support = target > 0
    eligible = [i for i in range(m)
                if i != exclude
                and columns[:, i].any()
                and not columns[~support, i].any()]
    if not eligible:
        return []
    max_size = len(eligible) if len(eligible) <= full_limit else 3
    covers = []
    for size in range(1, max_size + 1):
        for subset in combinations(eligible, size):
            total = columns[:, subset].sum(axis=1)
            on = total[support]
            c = on[0]
            if c >= 1 and (on == c).all():
                covers.append((subset, int(c)))
    return covers


def check_prop1(cfg, pen, ds, y_mods=None):
    """Evaluate the four penalty-validity conditions; return violations.

    1. a covariate module exactly covered by other covariate modules must
       have a penalty below the scaled sum of theirs;
    2. a covariate module exactly covered by auxiliary modules must have a
       penalty below the scaled sum of theirs times ||Y^(k)||_*;
    3. an auxiliary module nested inside another must have the smaller
       penalty;
    4. an auxiliary module exactly covered by other auxiliary modules must
       have a penalty below the scaled sum of theirs.

    y_mods (the transformed per-module covariate matrices) should be passed
    when available so condition 2 uses the same Y the solver sees; otherwise
    the raw member-cohort blocks of ds.y are used.
    """
    violations = []
    c_y, c_s = cfg.c_y, cfg.c_s
    lb, ls = pen.lambda_b, pen.lambda_s

    for k in range(cfg.k_count):
        for subset, c in _exact_covers(c_y, c_y[:, k], exclude=k):
            bound = float(lb[list(subset)].sum()) / c
            if lb[k] >= bound:
                violations.append(Violation(1, "B", k, subset, c,
                                            float(lb[k]), bound))

    for k in range(cfg.k_count):
        covers = _exact_covers(c_s, c_y[:, k])
        if not covers:
            continue
        if y_mods is not None:
            y_norm = nuclear_norm(y_mods[k])
        else:
            sel = module_columns(c_y[:, k], ds.boundaries, ds.n)
            y_norm = nuclear_norm(ds.y[:, sel])
        for subset, c in covers:
            bound = float(ls[list(subset)].sum()) * y_norm / c
            if lb[k] >= bound:
                violations.append(Violation(2, "B", k, subset, c,
                                            float(lb[k]), bound))

    for l_outer in range(cfg.l_count):
        for l_inner in range(cfg.l_count):
            if l_inner == l_outer:
                continue
            if np.all(c_s[:, l_outer] >= c_s[:, l_inner]):
                if ls[l_inner] >= ls[l_outer]:
                    violations.append(Violation(
                        3, "S", l_inner, (l_outer,), 1,
                        float(ls[l_inner]), float(ls[l_outer])))

    for l in range(cfg.l_count):
        for subset, c in _exact_covers(c_s, c_s[:, l], exclude=l):
            bound = float(ls[list(subset)].sum()) / c
            if ls[l] >= bound:
                violations.append(Violation(4, "S", l, subset, c,
                                            float(ls[l]), bound))
    return violations


# ===== module construction =====

def enumerate_modules(n_cohorts, max_modules):
    """All non-empty cohort subsets as indicator columns (C_Y = C_S),
    ordered by subset size descending then lexicographic, truncated to
    max_modules."""
    j = int(n_cohorts)
    if j < 1:
        raise ConfigError("need at least one cohort")
    if j > 10:
        raise ConfigError(
            f"enumerating all subsets of {j} cohorts is intractable; "
            "use forward_select instead")
    subsets = []
    for size in range(j, 0, -1):
        subsets.extend(combinations(range(j), size))
    cols = []
    for subset in subsets[:max_modules]:
        col = np.zeros(j, dtype=int)
        col[list(subset)] = 1
        cols.append(col)
    c = np.column_stack(cols) if cols else np.zeros((j, 0), dtype=int)
    return IndicatorConfig(c_y=c.copy(), c_s=c)


def forward_select(ds, l_max, pen_rule="rmt"):
    """Greedy forward selection of auxiliary modules on a preprocessed X.

    Builds up to l_max indicator columns. For each new module the member set
    starts empty and repeatedly adds the cohort whose inclusion most
    decreases the one-pass soft-threshold objective against the current
    residual (ties to the lowest cohort index). A candidate only counts if
    its one-pass estimate is nonzero under the 0.1 singular-value counting
    rule used everywhere else for ranks; right at the RMT penalty the top
    noise singular value pokes past lambda in a nontrivial fraction of
    draws, and without the floor those hairline crossings admit junk
    modules whose every singular value would round to rank zero anyway.
    The fitted one-pass estimate is subtracted from the residual before the
    next module. Selection stops early on an empty or duplicate module.
    C_Y is set equal to C_S.
    """
    if pen_rule != "rmt":
        raise ConfigError(f"unknown penalty rule {pen_rule!r}")
    p, n = ds.p, ds.n
    j = ds.n_cohorts
    resid = np.array(ds.x)
    cols = []
    for _ in range(int(l_max)):
        members = np.zeros(j, dtype=bool)
        gain_now = 0.0
        fit_now = None
        while True:
            best = None
            for cand in range(j):
                if members[cand]:
                    continue
                trial = members.copy()
                trial[cand] = True
                sel = module_columns(trial, ds.boundaries, n)
                lam = np.sqrt(p) + np.sqrt(sel.sum())
                u, s_shr, vt = soft_threshold_svd(resid[:, sel], lam)
                # objective decrease of the one-pass estimate vs zero
                gain = 0.5 * float(np.sum(s_shr ** 2))
                nonzero = s_shr.size > 0 and float(s_shr.max()) > 0.1
                if nonzero and gain > gain_now and (
                        best is None or gain > best[0]):
                    best = (gain, cand, sel, u * s_shr, vt)
            if best is None:
                break
            gain_now, cand, sel, us, vt = best
            members[cand] = True
            fit_now = (sel, us @ vt)
        if fit_now is None:
            break
        col = members.astype(int)
        if any(np.array_equal(col, c) for c in cols):
            break
        cols.append(col)
        sel, s_hat = fit_now
        resid[:, sel] -= s_hat
    c = np.column_stack(cols) if cols else np.zeros((j, 0), dtype=int)
    return IndicatorConfig(c_y=c.copy(), c_s=c)


# ===== serialization =====

def save_indicator_matrix(c, path, cohort_ids=None, prefix="mod"):
    """Write an indicator matrix as CSV: rows = cohorts, columns = modules."""
    c = np.asarray(c, dtype=int)
    if cohort_ids is None:
        cohort_ids = [f"cohort{i}" for i in range(c.shape[0])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cohort_id"] + [f"{prefix}{k}" for k in range(c.shape[1])])
        for cid, row in zip(cohort_ids, c):
            w.writerow([cid] + [int(v) for v in row])


def load_indicator_matrix(path):
    """Read an indicator CSV; returns (matrix, cohort_ids)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["cohort_id"]:
        raise SchemaError(f"{path}: expected header starting with cohort_id")
    n_mods = len(rows[0]) - 1
    cohort_ids = []
    data = []
    for i, row in enumerate(rows[1:]):
        if len(row) != n_mods + 1:
            raise SchemaError(f"{path}: row {i + 2} has wrong field count")
        cohort_ids.append(row[0])
        try:
            data.append([int(v) for v in row[1:]])
        except ValueError:
            raise SchemaError(f"{path}: non-integer entry in row {i + 2}")
    c = np.array(data, dtype=int) if data else np.zeros((0, n_mods), dtype=int)
    return c.reshape(len(cohort_ids), n_mods), cohort_ids
