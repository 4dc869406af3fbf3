"""Command line interface: fit, impute, simulate, select-modules, penalties,
benchmark.

Options resolve from (highest priority first) command-line flags, a
``key=value`` config file, and built-in defaults. Every command writes a
metadata JSON with the fully resolved options so a run can be repeated
exactly. Exit codes: 0 success, 2 configuration/usage problems, 1 numerical
failure at runtime. The MARRR_THREADS environment variable caps the thread
count of the underlying linear-algebra kernels.
"""

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .dataset import (MultiCohortDataset, _write_matrix_csv, load_dataset,
                      save_dataset, save_mask)
from .errors import (ConfigError, DegeneracyError, DimensionError, MarrrError,
                     ParseError, PreconditionError, SchemaError)
from .impute import impute
from .modules_config import (IndicatorConfig, PenaltySet, check_prop1,
                             enumerate_modules, forward_select,
                             load_indicator_matrix, rmt_penalties,
                             save_indicator_matrix)
from .preprocess import prepare_problem, save_preprocess_info
from .simulate import (SCENARIOS, SimulationSpec, generate, make_missing,
                       run_orthogonality, run_table1a, run_table1b,
                       run_table2)
from .solver import SolverOptions, fit as solve, save_fit, variance_explained

_USAGE_ERRORS = (ConfigError, SchemaError, ParseError, DimensionError,
                 PreconditionError, DegeneracyError, FileNotFoundError,
                 NotADirectoryError, IsADirectoryError, PermissionError)


# ===== option conversion =====

def _to_int(s):
    try:
        return int(str(s).strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {s!r}")


def _to_float(s):
    try:
        return float(str(s).strip())
    except ValueError:
        raise ConfigError(f"expected a number, got {s!r}")


def _to_bool(s):
    if isinstance(s, bool):
        return s
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _to_int_tuple(s):
    return tuple(_to_int(tok) for tok in str(s).split(",") if tok.strip())


def _to_float_tuple(s):
    return tuple(_to_float(tok) for tok in str(s).split(",") if tok.strip())


def _algorithm(s):
    aliases = {"svt": "svt_als", "svt_als": "svt_als", "als": "factored_als",
               "factored": "factored_als", "factored_als": "factored_als"}
    key = str(s).strip().lower().replace("-", "_")
    if key not in aliases:
        raise ConfigError(f"unknown algorithm {s!r} (want svt or als)")
    return aliases[key]


def _choice(*allowed):
    def conv(s):
        t = str(s).strip()
        if t not in allowed:
            raise ConfigError(f"expected one of {allowed}, got {s!r}")
        return t
    return conv


# ===== per-command option tables: key -> (converter, default, help) =====

_DATA = {
    "x": (str, None, "features CSV (p x n, header = sample ids)"),
    "y": (str, None, "covariates CSV (q x n, same sample ids)"),
    "cohorts": (str, None, "sample_id,cohort_id map CSV"),
    "out": (str, None, "output directory"),
}

_MODULES = {
    "modules-y": (str, None, "covariate-module indicator CSV (cohorts x K)"),
    "modules-s": (str, None, "auxiliary-module indicator CSV (cohorts x L)"),
}

_SOLVER = {
    "algorithm": (_algorithm, "svt_als",
                  "svt (soft-threshold) or als (factored least squares)"),
    "y-transform": (_choice("orthogonalize", "standardize"), "orthogonalize",
                    "per-module covariate treatment"),
    "epsilon": (_to_float, None,
                "convergence threshold (default 1e-6 * p * n)"),
    "max-epochs": (_to_int, 200, "epoch cap"),
    "r-b-upper": (_to_int, 20, "factored rank cap per covariate module"),
    "r-s-upper": (_to_int, 20, "factored rank cap per auxiliary module"),
    "seed": (_to_int, 0, "random seed (factored initialization)"),
    "noise-sd": (_to_float, None,
                 "known noise sd; skips the spectral estimate"),
    "lambda-b": (_to_float_tuple, None,
                 "comma-separated per-module B penalties (default RMT)"),
    "lambda-s": (_to_float_tuple, None,
                 "comma-separated per-module S penalties (default RMT)"),
    "strict": (_to_bool, False,
               "treat penalty-validity violations as errors"),
}

_SPECS = {
    "fit": {**_DATA, **_MODULES, **_SOLVER},
    "impute": {**_DATA, **_MODULES, **_SOLVER,
               "mask": (str, None, "extra mask CSV (row_index,col_index)"),
               "outer-max": (_to_int, 20, "imputation pass cap")},
    "simulate": {
        "out": (str, None, "output directory"),
        "reproduce": (_choice("table1a", "table1b", "table2",
                              "orthogonality"), None,
                      "run a study preset and write its metrics CSV"),
        "scenario": (str, None, f"one of {', '.join(SCENARIOS)}"),
        "which": (str, None,
                  "table2/global_individual large-signal scenario label"),
        "replicates": (_to_int, None,
                       "replicate count (preset-specific default)"),
        "master-seed": (_to_int, 0, "seed that derives per-replicate seeds"),
        "jobs": (_to_int, 1, "worker processes across replicates"),
        "paper-scale": (_to_bool, False,
                        "table2 at the full 1000 x 6581, 30-cohort scale"),
        "include-baselines": (_to_bool, True,
                              "include two-stage baselines in table1a/b"),
        "p": (_to_int, 100, "features"),
        "q": (_to_int, 10, "covariates"),
        "n-per-cohort": (_to_int_tuple, None, "cohort sizes, e.g. 60,60,60"),
        "signal-sds": (_to_float_tuple, None,
                       "scenario signal multipliers, e.g. 5,0.5"),
        "r-y": (_to_int, 1, "coefficient rank"),
        "r-s": (_to_int, 5, "auxiliary rank"),
        "orth-gen": (_to_bool, False,
                     "draw covariates with orthonormal rows"),
        "seed": (_to_int, 0, "generation seed (single-scenario mode)"),
        "missing-fraction": (_to_float, None,
                             "also write a mask covering this fraction"),
        "missing-kind": (_choice("entry", "column", "row"), "entry",
                         "mask shape for --missing-fraction"),
    },
    "select-modules": {
        "x": _DATA["x"], "y": _DATA["y"], "cohorts": _DATA["cohorts"],
        "out": _DATA["out"],
        "mode": (_choice("enumerate", "forward"), "enumerate",
                 "all cohort subsets, or greedy forward selection"),
        "max-modules": (_to_int, 64, "enumeration cap"),
        "l-max": (_to_int, 10, "forward-selection module cap"),
    },
    "penalties": {
        "x": _DATA["x"], "y": _DATA["y"], "cohorts": _DATA["cohorts"],
        "out": _DATA["out"], **_MODULES,
        "y-transform": _SOLVER["y-transform"],
        "noise-sd": _SOLVER["noise-sd"],
        "strict": _SOLVER["strict"],
    },
    "benchmark": {
        "out": (str, None, "output directory"),
        "p": (_to_int, 100, "features"),
        "q": (_to_int, 10, "covariates"),
        "n-per-cohort": (_to_int_tuple, (60, 60), "cohort sizes"),
        "paper-scale": (_to_bool, False, "1000 x 6581, 30 cohorts"),
        "epochs": (_to_int, 3, "timed epochs per algorithm"),
        "rank-cap": (_to_int, 20, "factored rank caps"),
        "seed": (_to_int, 0, "generation seed"),
    },
}

_REQUIRED = {
    "fit": ("x", "y", "cohorts", "out"),
    "impute": ("x", "y", "cohorts", "out"),
    "simulate": ("out",),
    "select-modules": ("x", "y", "cohorts", "out"),
    "penalties": ("x", "y", "cohorts", "out"),
    "benchmark": ("out",),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="marrr",
        description="Multi-cohort low-rank regression and factorization")
    subs = parser.add_subparsers(dest="command", required=True)
    for command, spec in _SPECS.items():
        sub = subs.add_parser(command)
        sub.add_argument("--config", default=None,
                         help="key=value file merged under CLI flags")
        for key, (conv, default, help_) in spec.items():
            shown = default if default is not None else None
            sub.add_argument(f"--{key}", default=None, metavar="V",
                             help=f"{help_}"
                                  + (f" [default: {shown}]"
                                     if shown is not None else ""))
    return parser


def _parse_config_file(path):
    vals = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            vals[key.strip()] = val.strip()
    return vals


def _resolve(args, command):
    """Merge CLI flags over config-file values over defaults; convert all
    through the same per-key converters."""
    spec = _SPECS[command]
    file_vals = _parse_config_file(args.config) if args.config else {}
    unknown = set(file_vals) - set(spec)
    if unknown:
        raise ConfigError(f"config file keys not used by {command}: "
                          f"{sorted(unknown)}")
    resolved = {}
    for key, (conv, default, _) in spec.items():
        attr = key.replace("-", "_")
        raw = getattr(args, attr)
        if raw is None:
            raw = file_vals.get(key)
        if raw is None:
            resolved[attr] = default
        else:
            resolved[attr] = conv(raw)
    for key in _REQUIRED[command]:
        if resolved[key.replace("-", "_")] is None:
            raise ConfigError(f"--{key} is required for {command}")
    return resolved


# ===== shared helpers =====

def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    return v


def _write_metadata(out_dir, command, resolved, results=None):
    meta = {"format": "marrr-run-metadata-v1", "command": command,
            "options": {k: _jsonable(v) for k, v in sorted(resolved.items())}}
    if results:
        meta["results"] = {k: _jsonable(v) for k, v in sorted(results.items())}
    with open(os.path.join(out_dir, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def _load_ds(o, mask_path=None):
    return load_dataset(o["x"], o["y"], o["cohorts"], mask_path=mask_path)


def _load_modules(o, ds):
    j = ds.n_cohorts

    def one(path):
        if path is None:
            return np.zeros((j, 0), dtype=int)
        c, _ = load_indicator_matrix(path)
        if c.shape[0] != j:
            raise ConfigError(f"{path}: {c.shape[0]} cohort rows but the "
                              f"dataset has {j} cohorts")
        return c

    c_y = one(o["modules_y"])
    c_s = one(o["modules_s"])
    if c_y.shape[1] == 0 and c_s.shape[1] == 0:
        raise ConfigError("no modules: pass --modules-y and/or --modules-s")
    return IndicatorConfig(c_y, c_s)


def _penalties(o, ds, cfg):
    pen = rmt_penalties(ds, cfg)
    if o.get("lambda_b") is not None:
        if len(o["lambda_b"]) != cfg.k_count:
            raise ConfigError(f"--lambda-b needs {cfg.k_count} values")
        pen = PenaltySet(np.asarray(o["lambda_b"]), pen.lambda_s)
    if o.get("lambda_s") is not None:
        if len(o["lambda_s"]) != cfg.l_count:
            raise ConfigError(f"--lambda-s needs {cfg.l_count} values")
        pen = PenaltySet(pen.lambda_b, np.asarray(o["lambda_s"]))
    return pen


def _report_validity(cfg, pen, ds, y_mods, strict):
    violations = check_prop1(cfg, pen, ds, y_mods=y_mods)
    for v in violations:
        print(f"warning: penalty validity {v}", file=sys.stderr)
    if violations and strict:
        raise ConfigError(f"{len(violations)} penalty-validity violation(s) "
                          "with --strict")
    return violations


def _solver_options(o):
    return SolverOptions(algorithm=o["algorithm"], epsilon=o["epsilon"],
                         max_epochs=o["max_epochs"],
                         r_b_upper=o["r_b_upper"], r_s_upper=o["r_s_upper"],
                         seed=o["seed"])


def _write_variance_csv(fit_res, cfg, ds, path):
    rows = variance_explained(fit_res, cfg)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["module", "sample_size", "var_BY", "var_S", "var_signal",
                    "cohorts"])
        for r in rows:
            label = ";".join([f"B{k}" for k in r["b_modules"]]
                             + [f"S{l}" for l in r["s_modules"]])
            names = "+".join(str(ds.cohort_ids[j]) for j in r["cohorts"])
            w.writerow([label, r["n_samples"], repr(r["var_b"]),
                        repr(r["var_s"]), repr(r["total"]), names])


def _write_metrics_csv(rows, path):
    rows = sorted(rows, key=lambda r: (r["scenario"], int(r["seed"]),
                                       r["method"], r["metric"]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "seed", "method", "metric", "value"])
        for r in rows:
            w.writerow([r["scenario"], int(r["seed"]), r["method"],
                        r["metric"], repr(float(r["value"]))])


# ===== commands =====

def cmd_fit(o):
    ds = _load_ds(o)
    if len(ds.mask):
        raise ConfigError("X has missing entries; use the impute command")
    cfg = _load_modules(o, ds)
    out = _ensure_out(o["out"])
    prob, info = prepare_problem(ds, cfg, y_treatment=o["y_transform"],
                                 noise_sd=o["noise_sd"])
    pen = _penalties(o, ds, cfg)
    _report_validity(cfg, pen, ds, prob.y_mods, o["strict"])
    opts = _solver_options(o)
    res = solve(prob, cfg, pen, opts)
    save_fit(res, os.path.join(out, "fit"), opts=opts, pen=pen)
    save_preprocess_info(info, os.path.join(out, "preprocess_info.csv"))
    _write_variance_csv(res, cfg, ds, os.path.join(out, "variance.csv"))
    _write_metadata(out, "fit", o, results={
        "epochs": res.epochs, "converged": res.converged,
        "objective": res.objective_trace[-1], "sigma_hat": info.sigma_hat})
    state = "converged" if res.converged else "hit the epoch cap"
    print(f"fit {state} after {res.epochs} epochs, objective "
          f"{res.objective_trace[-1]:.6g}; wrote {out}")
    return 0


def cmd_impute(o):
    ds = _load_ds(o, mask_path=o["mask"])
    if not len(ds.mask):
        raise ConfigError("nothing to impute: X has no missing entries "
                          "and no --mask was given")
    cfg = _load_modules(o, ds)
    out = _ensure_out(o["out"])
    pen = _penalties(o, ds, cfg)
    opts = _solver_options(o)
    result = impute(ds, ds.mask, cfg, pen, opts, outer_max=o["outer_max"],
                    y_treatment=o["y_transform"], noise_sd=o["noise_sd"])
    _write_matrix_csv(os.path.join(out, "x_completed.csv"), ds.feature_ids,
                      ds.sample_ids, result.x_completed_original,
                      id_label="feature_id")
    if result.fit is not None:
        save_fit(result.fit, os.path.join(out, "fit"), opts=opts, pen=pen)
    _write_metadata(out, "impute", o, results={
        "outer_iterations": result.outer_iterations,
        "masked_entries": len(ds.mask), "mask_kind": ds.mask.kind})
    print(f"imputed {len(ds.mask)} entries in {result.outer_iterations} "
          f"passes; wrote {out}")
    return 0


_PRESETS = {"table1a": run_table1a, "table1b": run_table1b,
            "table2": run_table2, "orthogonality": run_orthogonality}
_PRESET_REPLICATES = {"table1a": 25, "table1b": 25, "table2": 10,
                      "orthogonality": 25}


def _preset_worker(name, reps, kwargs):
    return _PRESETS[name](replicates=reps, **kwargs)


def _run_preset(name, replicates, jobs, **kwargs):
    if jobs <= 1:
        return _PRESETS[name](replicates=replicates, **kwargs)
    chunks = [c for c in (list(range(replicates))[i::jobs]
                          for i in range(jobs)) if c]
    rows = []
    with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
        for part in ex.map(_preset_worker, [name] * len(chunks), chunks,
                           [kwargs] * len(chunks)):
            rows.extend(part)
    return rows


def cmd_simulate(o):
    out = _ensure_out(o["out"])
    if o["reproduce"] is not None:
        name = o["reproduce"]
        reps = o["replicates"] or _PRESET_REPLICATES[name]
        kwargs = {"master_seed": o["master_seed"]}
        if name in ("table1a", "table1b"):
            kwargs["include_baselines"] = o["include_baselines"]
        if name == "table2":
            kwargs.update(which=o["which"], paper_scale=o["paper_scale"])
        rows = _run_preset(name, reps, o["jobs"], **kwargs)
        _write_metrics_csv(rows, os.path.join(out, "metrics.csv"))
        _write_metadata(out, "simulate", o, results={"rows": len(rows)})
        print(f"{name}: {reps} replicates, {len(rows)} metric rows; "
              f"wrote {out}")
        return 0

    if o["scenario"] is None:
        raise ConfigError("pass --reproduce or --scenario")
    if o["scenario"] == "global_individual" and o["which"] is not None:
        # single large-signal scenario of the imputation study
        reps = o["replicates"] or _PRESET_REPLICATES["table2"]
        kwargs = {"master_seed": o["master_seed"], "which": o["which"],
                  "paper_scale": o["paper_scale"]}
        if o["n_per_cohort"] is not None:
            kwargs.update(p=o["p"], q=o["q"], n_per_cohort=o["n_per_cohort"])
        rows = _run_preset("table2", reps, o["jobs"], **kwargs)
        _write_metrics_csv(rows, os.path.join(out, "metrics.csv"))
        _write_metadata(out, "simulate", o, results={"rows": len(rows)})
        print(f"global_individual/{o['which']}: {reps} replicates; "
              f"wrote {out}")
        return 0

    defaults = {"aRRR_single": (1.0, 1.0), "mRRR_two_cohort": (1.0, 1.0),
                "global_individual": (1.0, 1.0, 1.0, 1.0),
                "orthogonality_study": (1.0, 1.0)}
    if o["scenario"] not in defaults:
        raise ConfigError(f"unknown scenario {o['scenario']!r}")
    n_per = o["n_per_cohort"]
    if n_per is None:
        n_per = {"mRRR_two_cohort": (100, 100),
                 "global_individual": (60,) * 5}.get(o["scenario"], (100,))
    spec = SimulationSpec(
        scenario=o["scenario"], p=o["p"], q=o["q"], n_per_cohort=n_per,
        signal_sds=o["signal_sds"] or defaults[o["scenario"]],
        r_y=o["r_y"], r_s=o["r_s"],
        orthogonalize_y_in_generation=o["orth_gen"], seed=o["seed"])
    truth = generate(spec)
    ds = truth.dataset
    save_dataset(ds, os.path.join(out, "x.csv"), os.path.join(out, "y.csv"),
                 os.path.join(out, "cohorts.csv"))
    save_indicator_matrix(truth.cfg.c_y, os.path.join(out, "modules_y.csv"),
                          cohort_ids=ds.cohort_ids)
    save_indicator_matrix(truth.cfg.c_s, os.path.join(out, "modules_s.csv"),
                          cohort_ids=ds.cohort_ids)
    for k, b in enumerate(truth.true_b):
        _write_matrix_csv(os.path.join(out, f"true_b{k}.csv"),
                          ds.feature_ids, ds.covariate_ids, b,
                          id_label="feature_id")
    for l, s in enumerate(truth.true_s):
        _write_matrix_csv(os.path.join(out, f"true_s{l}.csv"),
                          ds.feature_ids, ds.sample_ids, s,
                          id_label="feature_id")
    results = {"p": ds.p, "q": ds.q, "n": ds.n, "cohorts": ds.n_cohorts}
    if o["missing_fraction"] is not None:
        mask = make_missing(ds, o["missing_fraction"], o["missing_kind"],
                            seed=o["seed"])
        save_mask(mask, os.path.join(out, "mask.csv"))
        results["masked_entries"] = len(mask)
    _write_metadata(out, "simulate", o, results=results)
    print(f"{o['scenario']}: wrote dataset and truth to {out}")
    return 0


def cmd_select_modules(o):
    ds = _load_ds(o)
    out = _ensure_out(o["out"])
    if o["mode"] == "enumerate":
        cfg = enumerate_modules(ds.n_cohorts, o["max_modules"])
    else:
        cfg = forward_select(ds, o["l_max"])
    save_indicator_matrix(cfg.c_y, os.path.join(out, "modules_y.csv"),
                          cohort_ids=ds.cohort_ids)
    save_indicator_matrix(cfg.c_s, os.path.join(out, "modules_s.csv"),
                          cohort_ids=ds.cohort_ids)
    _write_metadata(out, "select-modules", o, results={
        "k_count": cfg.k_count, "l_count": cfg.l_count})
    print(f"selected {cfg.l_count} module(s) ({o['mode']}); wrote {out}")
    return 0


def cmd_penalties(o):
    ds = _load_ds(o)
    cfg = _load_modules(o, ds)
    out = _ensure_out(o["out"])
    prob, info = prepare_problem(ds, cfg, y_treatment=o["y_transform"],
                                 noise_sd=o["noise_sd"])
    pen = _penalties({**o, "lambda_b": None, "lambda_s": None}, ds, cfg)
    violations = _report_validity(cfg, pen, ds, prob.y_mods, o["strict"])
    path = os.path.join(out, "penalties.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "module", "cohorts", "lambda"])
        for k, lam in enumerate(pen.lambda_b):
            names = "+".join(str(ds.cohort_ids[j])
                             for j in np.flatnonzero(cfg.c_y[:, k]))
            w.writerow(["B", k, names, repr(float(lam))])
        for l, lam in enumerate(pen.lambda_s):
            names = "+".join(str(ds.cohort_ids[j])
                             for j in np.flatnonzero(cfg.c_s[:, l]))
            w.writerow(["S", l, names, repr(float(lam))])
    _write_metadata(out, "penalties", o, results={
        "sigma_hat": info.sigma_hat, "violations": len(violations)})
    print(f"noise sd {info.sigma_hat:.6g}; {cfg.k_count} B / {cfg.l_count} S "
          f"module(s), {len(violations)} validity warning(s); wrote {path}")
    return 0


def cmd_benchmark(o):
    p, q = o["p"], o["q"]
    n_per = o["n_per_cohort"]
    if o["paper_scale"]:
        p, q = 1000, 50
        base, extra = divmod(6581, 30)
        n_per = tuple(base + (1 if j < extra else 0) for j in range(30))
    out = _ensure_out(o["out"])
    j = len(n_per)
    n = sum(n_per)
    rng = np.random.default_rng(o["seed"])
    y = rng.standard_normal((q, n))
    # noise plus a mild planted signal so neither update path degenerates
    x = rng.standard_normal((p, n))
    x += (rng.standard_normal((p, 2)) @ rng.standard_normal((2, q)) @ y) \
        / np.sqrt(q * n / 4)
    ds = MultiCohortDataset(x, y, n_per)
    cols = np.column_stack([np.ones(j, dtype=int), np.eye(j, dtype=int)]) \
        if j > 1 else np.ones((1, 1), dtype=int)
    cfg = IndicatorConfig(cols, cols.copy())
    pen = rmt_penalties(ds, cfg)
    prob, _ = prepare_problem(ds, cfg)
    rows = []
    for alg in ("svt_als", "factored_als"):
        opts = SolverOptions(algorithm=alg, epsilon=1e-300,
                             max_epochs=o["epochs"],
                             r_b_upper=o["rank_cap"],
                             r_s_upper=o["rank_cap"], seed=o["seed"])
        t0 = time.perf_counter()
        res = solve(prob, cfg, pen, opts)
        dt = time.perf_counter() - t0
        rows.append([alg, p, q, n, j, cfg.k_count, cfg.l_count, res.epochs,
                     dt, dt / res.epochs])
        print(f"{alg}: {res.epochs} epochs in {dt:.2f} s "
              f"-> {dt / res.epochs:.4f} s/epoch")
    with open(os.path.join(out, "benchmark.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "p", "q", "n", "cohorts", "k_count",
                    "l_count", "epochs", "seconds_total",
                    "seconds_per_epoch"])
        for row in rows:
            w.writerow(row)
    _write_metadata(out, "benchmark", o)
    return 0


_COMMANDS = {"fit": cmd_fit, "impute": cmd_impute, "simulate": cmd_simulate,
             "select-modules": cmd_select_modules, "penalties": cmd_penalties,
             "benchmark": cmd_benchmark}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    thread_cap = os.environ.get("MARRR_THREADS")
    try:
        resolved = _resolve(args, args.command)
        if thread_cap is not None:
            from threadpoolctl import threadpool_limits
            try:
                limit = int(thread_cap)
            except ValueError:
                raise ConfigError(
                    f"MARRR_THREADS must be an integer, got {thread_cap!r}")
            with threadpool_limits(limits=limit):
                return _COMMANDS[args.command](resolved)
        return _COMMANDS[args.command](resolved)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MarrrError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
