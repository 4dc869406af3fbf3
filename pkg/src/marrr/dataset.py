"""Multi-cohort datasets: containers, validation, and CSV (de)serialization.

Matrices are stored features-as-rows, samples-as-columns (p x n). The
concatenated outcome matrix X and covariate matrix Y hold cohorts in
contiguous, non-overlapping column ranges. Missing outcome cells are the
literal token "NA" in CSV files and NaN in memory, with their indices held
in a MissingMask; covariates carry no missingness.
"""

import csv

import numpy as np

from .errors import DimensionError, ParseError, SchemaError

MISSING_TOKEN = "NA"


class CohortBlock:
    """One cohort's slice of the dataset (views into the concatenation)."""

    def __init__(self, cohort_id, x, y, sample_ids, feature_ids, covariate_ids):
        self.cohort_id = cohort_id
        self.x = x
        self.y = y
        self.sample_ids = list(sample_ids)
        self.feature_ids = list(feature_ids)
        self.covariate_ids = list(covariate_ids)

    @property
    def n(self):
        return self.x.shape[1]


class MultiCohortDataset:
    """Concatenated outcomes X (p x n) and covariates Y (q x n) with cohort
    boundaries. Immutable after construction: arrays are write-protected."""

    def __init__(self, x, y, n_per_cohort, cohort_ids=None, sample_ids=None,
                 feature_ids=None, covariate_ids=None, mask=None):
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        if x.ndim != 2 or y.ndim != 2:
            raise DimensionError("X and Y must be 2-d matrices")
        if x.shape[1] != y.shape[1]:
            raise DimensionError(
                f"X has {x.shape[1]} samples but Y has {y.shape[1]}")
        n_per_cohort = [int(m) for m in n_per_cohort]
        if any(m < 1 for m in n_per_cohort):
            raise DimensionError("every cohort needs at least one sample")
        if sum(n_per_cohort) != x.shape[1]:
            raise DimensionError(
                f"cohort sizes sum to {sum(n_per_cohort)}, X has {x.shape[1]} columns")
        if np.isnan(y).any():
            raise SchemaError("covariates Y cannot contain missing values")

        p, n = x.shape
        q = y.shape[0]
        self.cohort_ids = (list(cohort_ids) if cohort_ids is not None
                           else [f"cohort{j}" for j in range(len(n_per_cohort))])
        if len(self.cohort_ids) != len(n_per_cohort):
            raise DimensionError("one cohort id per cohort required")
        if len(set(self.cohort_ids)) != len(self.cohort_ids):
            raise SchemaError("duplicate cohort ids")
        self.sample_ids = (list(sample_ids) if sample_ids is not None
                           else [f"s{i}" for i in range(n)])
        self.feature_ids = (list(feature_ids) if feature_ids is not None
                            else [f"f{i}" for i in range(p)])
        self.covariate_ids = (list(covariate_ids) if covariate_ids is not None
                              else [f"y{i}" for i in range(q)])
        if len(self.sample_ids) != n:
            raise DimensionError("one sample id per column required")
        if len(set(self.sample_ids)) != n:
            raise SchemaError("duplicate sample ids")
        if len(self.feature_ids) != p or len(self.covariate_ids) != q:
            raise DimensionError("id lists must match matrix dimensions")

        x.flags.writeable = False
        y.flags.writeable = False
        self.x = x
        self.y = y
        self.n_per_cohort = n_per_cohort
        self.mask = mask if mask is not None else MissingMask([])
        if len(self.mask.idx) and (
                self.mask.idx[:, 0].max() >= p or self.mask.idx[:, 1].max() >= n):
            raise IndexError("mask index out of bounds")

        bounds = []
        start = 0
        for m in n_per_cohort:
            bounds.append((start, start + m))
            start += m
        self.boundaries = bounds

        self.blocks = []
        for j, (a, b) in enumerate(bounds):
            self.blocks.append(CohortBlock(
                self.cohort_ids[j], x[:, a:b], y[:, a:b],
                self.sample_ids[a:b], self.feature_ids, self.covariate_ids))

    @property
    def p(self):
        return self.x.shape[0]

    @property
    def q(self):
        return self.y.shape[0]

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def n_cohorts(self):
        return len(self.blocks)

    def cohort_of_column(self, col):
        for j, (a, b) in enumerate(self.boundaries):
            if a <= col < b:
                return j
        raise IndexError(f"column {col} out of range")


class MissingMask:
    """Index set of absent X entries, with a missingness-kind label."""

    def __init__(self, entries, kind=None):
        idx = np.asarray(list(entries) if not isinstance(entries, np.ndarray)
                         else entries, dtype=int)
        if idx.size == 0:
            idx = np.zeros((0, 2), dtype=int)
        if idx.ndim != 2 or idx.shape[1] != 2:
            raise DimensionError("mask entries must be (row, col) pairs")
        if len(idx) and (idx < 0).any():
            raise IndexError("negative mask index")
        # canonical order, duplicates dropped
        idx = np.unique(idx, axis=0)
        idx.flags.writeable = False
        self.idx = idx
        self.kind = kind

    def __len__(self):
        return len(self.idx)

    @property
    def entries(self):
        return {(int(i), int(j)) for i, j in self.idx}

    def rows_cols(self):
        return self.idx[:, 0], self.idx[:, 1]

    def bool_matrix(self, p, n):
        m = np.zeros((p, n), dtype=bool)
        if len(self.idx):
            m[self.idx[:, 0], self.idx[:, 1]] = True
        return m


def classify_mask(mask, ds):
    """Label a mask as column / row-within-cohort / entry / mixed.

    column: exactly a union of complete columns. row-within-cohort: exactly a
    union of complete per-cohort row ranges. entry: touches no complete
    column or cohort-row. mixed: anything else.
    """
    p, n = ds.p, ds.n
    if len(mask.idx) == 0:
        return "entry"
    if mask.idx[:, 0].max() >= p or mask.idx[:, 1].max() >= n:
        raise IndexError("mask index out of bounds for dataset")
    m = mask.bool_matrix(p, n)

    col_full = m.all(axis=0)
    in_full_col = col_full[mask.idx[:, 1]]
    if in_full_col.all():
        return "column"

    in_full_row = np.zeros(len(mask.idx), dtype=bool)
    any_full_row = False
    for a, b in ds.boundaries:
        row_full = m[:, a:b].all(axis=1)
        any_full_row = any_full_row or row_full.any()
        sel = (mask.idx[:, 1] >= a) & (mask.idx[:, 1] < b)
        in_full_row[sel] = row_full[mask.idx[sel, 0]]
    if in_full_row.all():
        return "row-within-cohort"

    if not in_full_col.any() and not in_full_row.any():
        return "entry"
    return "mixed"


def concatenated_view(ds):
    """Return (X, Y, boundaries); column ranges partition [0, n)."""
    return ds.x, ds.y, list(ds.boundaries)


# ===== CSV loading =====

def _read_matrix_csv(path, allow_missing):
    """Read an id-by-sample CSV. Returns (ids, sample_ids, matrix, na_cells)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise SchemaError(f"{path}: need a header row and at least one data row")
    header = rows[0]
    if len(header) < 2:
        raise SchemaError(f"{path}: need at least one sample column")
    sample_ids = header[1:]
    ids = []
    data = np.empty((len(rows) - 1, len(sample_ids)), dtype=float)
    na_cells = []
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise DimensionError(
                f"{path}: row {i + 2} has {len(row)} fields, header has {len(header)}")
        ids.append(row[0])
        for j, tok in enumerate(row[1:]):
            if tok == MISSING_TOKEN:
                if not allow_missing:
                    raise SchemaError(
                        f"{path}: missing token at row {i + 2}, column {j + 2} "
                        "not allowed here")
                data[i, j] = np.nan
                na_cells.append((i, j))
            else:
                try:
                    data[i, j] = float(tok)
                except ValueError:
                    raise ParseError(
                        f"{path}: cannot parse {tok!r} at row {i + 2}, column {j + 2}")
    return ids, sample_ids, data, na_cells


def _read_cohort_map(path):
    """Read sample_id,cohort_id pairs; cohorts ordered by first appearance."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] != ["sample_id", "cohort_id"]:
        raise SchemaError(f"{path}: expected header sample_id,cohort_id")
    assign = {}
    cohort_order = []
    for i, row in enumerate(rows[1:]):
        if len(row) < 2:
            raise SchemaError(f"{path}: row {i + 2} needs sample_id and cohort_id")
        sid, cid = row[0], row[1]
        if sid in assign:
            raise SchemaError(f"{path}: sample {sid!r} assigned twice")
        assign[sid] = cid
        if cid not in cohort_order:
            cohort_order.append(cid)
    return assign, cohort_order


def load_dataset(x_path, y_path, cohort_map_path, mask_path=None):
    """Load and validate a dataset from CSV files.

    Samples are grouped by cohort (cohort order = first appearance in the
    cohort map, sample order within a cohort = X file order). "NA" cells in
    X become mask entries; an explicit mask file adds more. Mask indices
    refer to the grouped column layout.
    """
    feature_ids, x_samples, x, x_na = _read_matrix_csv(x_path, allow_missing=True)
    covariate_ids, y_samples, y, _ = _read_matrix_csv(y_path, allow_missing=False)
    if len(x_samples) != len(y_samples):
        raise DimensionError(
            f"X has {len(x_samples)} samples but Y has {len(y_samples)}")
    if x_samples != y_samples:
        raise SchemaError("X and Y sample ids differ")
    if len(set(x_samples)) != len(x_samples):
        raise SchemaError("duplicate sample ids in X header")

    assign, cohort_order = _read_cohort_map(cohort_map_path)
    unknown = set(assign) - set(x_samples)
    if unknown:
        raise SchemaError(f"cohort map names unknown sample ids: {sorted(unknown)[:5]}")
    missing = [s for s in x_samples if s not in assign]
    if missing:
        raise SchemaError(f"samples without a cohort: {missing[:5]}")

    # group columns by cohort, preserving X order within each cohort
    perm = []
    n_per_cohort = []
    for cid in cohort_order:
        cols = [j for j, s in enumerate(x_samples) if assign[s] == cid]
        if not cols:
            continue
        perm.extend(cols)
        n_per_cohort.append(len(cols))
    cohort_ids = [c for c in cohort_order
                  if any(assign[s] == c for s in x_samples)]
    inv = np.empty(len(perm), dtype=int)
    inv[np.array(perm)] = np.arange(len(perm))

    entries = [(i, int(inv[j])) for i, j in x_na]
    if mask_path is not None:
        entries.extend(load_mask(mask_path).entries)
    mask = MissingMask(entries)

    ds = MultiCohortDataset(
        x[:, perm], y[:, perm], n_per_cohort, cohort_ids=cohort_ids,
        sample_ids=[x_samples[j] for j in perm], feature_ids=feature_ids,
        covariate_ids=covariate_ids, mask=mask)
    ds.mask.kind = classify_mask(ds.mask, ds)
    return ds


# ===== CSV saving =====

def _fmt(v):
    # repr round-trips doubles exactly in python 3
    return repr(float(v))


def _write_matrix_csv(path, ids, sample_ids, data, na_set=None, id_label="id"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([id_label] + list(sample_ids))
        for i, rid in enumerate(ids):
            row = [rid]
            for j in range(data.shape[1]):
                if (na_set is not None and (i, j) in na_set) or np.isnan(data[i, j]):
                    row.append(MISSING_TOKEN)
                else:
                    row.append(_fmt(data[i, j]))
            w.writerow(row)


def save_dataset(ds, x_path, y_path, cohort_map_path):
    """Write the dataset back to the three CSV files (masked cells as NA)."""
    na = ds.mask.entries if len(ds.mask) else None
    _write_matrix_csv(x_path, ds.feature_ids, ds.sample_ids, ds.x,
                      na_set=na, id_label="feature_id")
    _write_matrix_csv(y_path, ds.covariate_ids, ds.sample_ids, ds.y,
                      id_label="covariate_id")
    with open(cohort_map_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "cohort_id"])
        for block in ds.blocks:
            for sid in block.sample_ids:
                w.writerow([sid, block.cohort_id])


def load_mask(path):
    """Read a mask CSV of 0-based row_index,col_index pairs."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] != ["row_index", "col_index"]:
        raise SchemaError(f"{path}: expected header row_index,col_index")
    entries = []
    for i, row in enumerate(rows[1:]):
        try:
            entries.append((int(row[0]), int(row[1])))
        except (ValueError, IndexError):
            raise ParseError(f"{path}: bad mask row {i + 2}: {row}")
    return MissingMask(entries)


def save_mask(mask, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_index", "col_index"])
        for i, j in mask.idx:
            w.writerow([int(i), int(j)])
