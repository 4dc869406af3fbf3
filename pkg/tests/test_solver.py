"""Both optimizers against closed forms, certificates, and each other."""

from types import SimpleNamespace

import numpy as np
import pytest

from marrr import (
    ConfigError,
    DimensionError,
    IndicatorConfig,
    PenaltySet,
    PreconditionError,
    SolverOptions,
    eval_objective,
    eval_objective_factored,
    fit,
    load_fit,
    prepare_problem,
    rmt_penalties,
    save_fit,
    svt,
)
from marrr.linalg import balanced_factorization, nuclear_norm
from marrr.solver import (
    ModuleFactors,
    estimated_ranks,
    fit_factored_als,
    fit_svt_als,
    options_for_imputation,
    variance_explained,
)
from helpers import (
    global_s_problem,
    orthonormal_rows,
    pen_for,
    planted_two_cohort,
    single_b_problem,
)
from oracles import prox_objective, subgradient_prox_oracle


def test_solver_options_validation():
    with pytest.raises(ConfigError):
        SolverOptions(algorithm="newton")
    with pytest.raises(ConfigError):
        SolverOptions(epsilon=0.0)
    with pytest.raises(ConfigError):
        SolverOptions(max_epochs=0)
    with pytest.raises(ConfigError):
        SolverOptions(r_b_upper=0)
    with pytest.raises(ConfigError):
        SolverOptions(init_scale=0.0)
    assert SolverOptions().resolve_epsilon(40, 60) == pytest.approx(
        1e-6 * 40 * 60)
    assert SolverOptions(epsilon=0.5).resolve_epsilon(40, 60) == 0.5


def test_svt_diagonal_example():
    assert np.allclose(svt(np.diag([5.0, 2.0, 0.5]), 1.0),
                       np.diag([4.0, 1.0, 0.0]), atol=1e-12)


def test_svt_zero_level_is_identity():
    m = np.random.default_rng(0).standard_normal((5, 5))
    assert np.max(np.abs(svt(m, 0.0) - m)) < 1e-10


def test_svt_beats_subgradient_descent():
    # spot check; the full 20-instance comparison runs in the acceptance suite
    for seed in (0, 1, 2):
        m = np.random.default_rng(seed).standard_normal((5, 5))
        f_closed = prox_objective(m, svt(m, 1.0), 1.0)
        f_oracle = subgradient_prox_oracle(m, 1.0, max_iters=1500)
        assert f_closed <= f_oracle + 1e-6


def prepared_instance(seed=0):
    ds, cfg = planted_two_cohort(seed=seed)
    prob, _ = prepare_problem(ds, cfg)
    pen = rmt_penalties(ds, cfg)
    return prob, cfg, pen


def test_eval_objective_zero_fit_is_half_squared_norm():
    prob, cfg, pen = prepared_instance()
    b0 = [np.zeros((prob.p, 5)) for _ in range(3)]
    s0 = [np.zeros((prob.p, prob.n)) for _ in range(3)]
    expected = 0.5 * float(np.sum(prob.x ** 2))
    assert eval_objective(prob, cfg, pen, b0, s0) == pytest.approx(expected)
    factors = ModuleFactors(
        u_b=[np.zeros((prob.p, 2))] * 3, v_b=[np.zeros((5, 2))] * 3,
        u_s=[np.zeros((prob.p, 2))] * 3, v_s=[np.zeros((prob.n, 2))] * 3)
    assert eval_objective_factored(prob, cfg, pen, factors) == pytest.approx(
        expected)


def test_eval_objective_exact_fit_with_zero_penalty_is_zero():
    y = orthonormal_rows(3, 20, seed=1)
    b = np.random.default_rng(2).standard_normal((6, 3))
    prob, cfg = single_b_problem(b @ y, y)
    pen0 = SimpleNamespace(lambda_b=np.zeros(1), lambda_s=np.zeros(0))
    assert eval_objective(prob, cfg, pen0, [b], []) == pytest.approx(0.0)


def test_eval_objective_shape_mismatch():
    prob, cfg, pen = prepared_instance()
    b_bad = [np.zeros((prob.p + 1, 5)) for _ in range(3)]
    s0 = [np.zeros((prob.p, prob.n)) for _ in range(3)]
    with pytest.raises(DimensionError):
        eval_objective(prob, cfg, pen, b_bad, s0)


def test_factored_objective_agrees_on_balanced_factorization():
    # a balanced split makes the Frobenius penalty equal the nuclear norm,
    # so the two objective forms coincide
    prob, cfg, pen = prepared_instance(seed=3)
    rng = np.random.default_rng(4)
    b_list = [rng.standard_normal((prob.p, 2)) @
              rng.standard_normal((5, 2)).T for _ in range(3)]
    from marrr.preprocess import module_columns

    s_list = []
    for l in range(3):
        s = rng.standard_normal((prob.p, 2)) @ \
            rng.standard_normal((prob.n, 2)).T
        cols = module_columns(cfg.c_s[:, l], prob.boundaries, prob.n)
        s[:, ~cols] = 0.0
        s_list.append(s)
    u_b, v_b, u_s, v_s = [], [], [], []
    for b in b_list:
        a, c = balanced_factorization(b)
        u_b.append(a)
        v_b.append(c)
    for s in s_list:
        a, c = balanced_factorization(s)
        u_s.append(a)
        v_s.append(c)
    factors = ModuleFactors(u_b=u_b, v_b=v_b, u_s=u_s, v_s=v_s)
    dense = eval_objective(prob, cfg, pen, b_list, s_list)
    fact = eval_objective_factored(prob, cfg, pen, factors)
    assert fact == pytest.approx(dense, rel=1e-10)


def test_factored_objective_rescaling_moves_only_the_penalty():
    prob, cfg, pen = prepared_instance(seed=5)
    rng = np.random.default_rng(6)
    factors = ModuleFactors(
        u_b=[rng.standard_normal((prob.p, 2)) for _ in range(3)],
        v_b=[rng.standard_normal((5, 2)) for _ in range(3)],
        u_s=[rng.standard_normal((prob.p, 2)) for _ in range(3)],
        v_s=[rng.standard_normal((prob.n, 2)) for _ in range(3)])
    doubled = ModuleFactors(
        u_b=[2.0 * u for u in factors.u_b],
        v_b=[v / 2.0 for v in factors.v_b],
        u_s=factors.u_s, v_s=factors.v_s)
    base = eval_objective_factored(prob, cfg, pen, factors)
    moved = eval_objective_factored(prob, cfg, pen, doubled)
    delta = 0.5 * sum(
        pen.lambda_b[k] * (3.0 * np.sum(factors.u_b[k] ** 2) -
                           0.75 * np.sum(factors.v_b[k] ** 2))
        for k in range(3))
    assert moved - base == pytest.approx(delta, rel=1e-9)


def test_dispatcher_routes_by_algorithm():
    prob, cfg, pen = prepared_instance(seed=7)
    f1 = fit(prob, cfg, pen, SolverOptions(algorithm="factored_als",
                                           max_epochs=3))
    f2 = fit(prob, cfg, pen, SolverOptions(algorithm="svt_als", max_epochs=3))
    assert f1.algorithm == "factored_als"
    assert f2.algorithm == "svt_als"


def test_single_global_module_converges_to_one_shot_svt():
    x = np.random.default_rng(8).standard_normal((30, 40))
    x[:10] += 2.0  # some structure to keep the fit nonzero
    prob, cfg = global_s_problem(x)
    lam = 0.5 * np.linalg.svd(x, compute_uv=False)[0]
    pen = pen_for(cfg, lambda_s=[lam])
    res = fit_svt_als(prob, cfg, pen, SolverOptions())
    assert res.converged
    assert np.max(np.abs(res.S[0] - svt(x, lam))) < 1e-10


def test_svt_trace_is_monotone_nonincreasing():
    prob, cfg, pen = prepared_instance(seed=9)
    res = fit_svt_als(prob, cfg, pen, SolverOptions(max_epochs=50))
    trace = res.objective_trace
    assert len(trace) >= 2
    assert np.all(np.diff(trace) <= 1e-9 * trace[0])


def test_svt_requires_orthonormal_covariate_rows():
    rng = np.random.default_rng(10)
    y_raw = rng.standard_normal((3, 20))
    prob, cfg = single_b_problem(rng.standard_normal((6, 20)), y_raw)
    pen = pen_for(cfg, lambda_b=[3.0])
    with pytest.raises(PreconditionError):
        fit_svt_als(prob, cfg, pen, SolverOptions())


def test_fitted_auxiliary_modules_are_zero_off_cohort():
    prob, cfg, pen = prepared_instance(seed=11)
    for algorithm in ("svt_als", "factored_als"):
        res = fit(prob, cfg, pen,
                  SolverOptions(algorithm=algorithm, max_epochs=20))
        n1 = prob.boundaries[0][1]
        assert np.all(res.S[1][:, n1:] == 0.0)  # module 1: first cohort only
        assert np.all(res.S[2][:, :n1] == 0.0)  # module 2: second cohort only
        v1 = res.s_factors[1][1]
        assert np.all(v1[n1:] == 0.0)


def test_huge_tolerance_stops_after_one_epoch():
    prob, cfg, pen = prepared_instance(seed=12)
    for algorithm in ("svt_als", "factored_als"):
        res = fit(prob, cfg, pen,
                  SolverOptions(algorithm=algorithm, epsilon=1e12))
        assert res.epochs == 1
        assert res.converged


def test_warm_start_resumes_at_convergence():
    prob, cfg, pen = prepared_instance(seed=13)
    first = fit_svt_als(prob, cfg, pen, SolverOptions())
    assert first.converged
    resumed = fit_svt_als(prob, cfg, pen, SolverOptions(), warm=first)
    assert resumed.epochs == 1
    assert resumed.objective_trace[-1] <= first.objective_trace[-1] + 1e-9


def test_factored_matches_svt_closed_form_single_covariate_module():
    # with orthonormal covariate rows the one-module solution is an SVT of
    # the correlation matrix, mapped through Y
    rng = np.random.default_rng(14)
    p, q, n = 20, 4, 50
    y = orthonormal_rows(q, n, seed=15)
    b_true = rng.standard_normal((p, 2)) @ rng.standard_normal((q, 2)).T
    x = 5.0 * (b_true @ y) + 0.1 * rng.standard_normal((p, n))
    prob, cfg = single_b_problem(x, y)
    pen = pen_for(cfg, lambda_b=[1.0])
    closed = svt(x @ y.T, 1.0)
    res = fit_factored_als(prob, cfg, pen, SolverOptions(
        algorithm="factored_als", epsilon=1e-12, max_epochs=3000))
    rel = np.linalg.norm(res.B[0] - closed) / np.linalg.norm(closed)
    assert rel < 1e-6


def test_factored_recovers_rank_one_factorization():
    rng = np.random.default_rng(16)
    p, n = 25, 35
    x = np.outer(rng.standard_normal(p), rng.standard_normal(n)) * 3.0
    prob, cfg = global_s_problem(x)
    lam = 0.2 * np.linalg.svd(x, compute_uv=False)[0]
    pen = pen_for(cfg, lambda_s=[lam])
    res = fit_factored_als(prob, cfg, pen, SolverOptions(
        algorithm="factored_als", epsilon=1e-12, max_epochs=3000))
    closed = svt(x, lam)
    rel = np.linalg.norm(res.S[0] - closed) / np.linalg.norm(closed)
    assert rel < 1e-6
    # at the optimum the residual pairs with the estimate through the penalty
    resid = x - res.S[0]
    pairing = float(np.sum(resid * res.S[0]))
    assert pairing == pytest.approx(lam * nuclear_norm(res.S[0]), rel=1e-6)


def test_square_orthonormal_covariates_collapse_to_factorization():
    # with q = n and an orthogonal Y the covariate term can imitate any
    # auxiliary module; both one-module fits must then agree exactly
    rng = np.random.default_rng(17)
    p, n = 12, 10
    qmat, _ = np.linalg.qr(rng.standard_normal((n, n)))
    y = qmat.T
    x = rng.standard_normal((p, n))
    lam = np.sqrt(p) + np.sqrt(n)
    prob_b, cfg_b = single_b_problem(x, y)
    res_b = fit_svt_als(prob_b, cfg_b, pen_for(cfg_b, lambda_b=[lam]),
                        SolverOptions())
    prob_s, cfg_s = global_s_problem(x)
    res_s = fit_svt_als(prob_s, cfg_s, pen_for(cfg_s, lambda_s=[lam]),
                        SolverOptions())
    assert np.max(np.abs(res_b.B[0] @ y - res_s.S[0])) < 1e-8


def test_nuclear_norm_invariant_under_orthonormal_covariates():
    from marrr import orthogonalize_y

    rng = np.random.default_rng(18)
    y_orth, _, _ = orthogonalize_y(rng.standard_normal((4, 30)))
    for _ in range(5):
        b = rng.standard_normal((7, 4))
        assert abs(nuclear_norm(b) - nuclear_norm(b @ y_orth)) < 1e-10


def test_estimated_ranks_counts_singular_values_over_threshold():
    prob, cfg = global_s_problem(np.zeros((4, 6)))
    pen = pen_for(cfg, lambda_s=[1.0])
    res = fit_svt_als(prob, cfg, pen, SolverOptions())
    ranks = estimated_ranks(res)
    assert ranks == {"B": [], "S": [0]} or ranks["S"][0] == 0
    m = np.diag([5.0, 2.0, 0.5])
    shrunk = svt(m, 1.0)
    assert int(np.sum(np.linalg.svd(shrunk, compute_uv=False) > 0.1)) == 2


def test_variance_explained_orders_modules_by_total():
    prob, cfg, pen = prepared_instance(seed=19)
    res = fit_svt_als(prob, cfg, pen, SolverOptions())
    table = variance_explained(res, cfg)
    totals = [row["total"] for row in table]
    assert totals == sorted(totals, reverse=True)
    assert all(row["total"] >= 0 for row in table)


def test_variance_explained_zero_fit_is_all_zero():
    x = np.random.default_rng(20).standard_normal((200, 300))
    prob, cfg = global_s_problem(x)
    pen = pen_for(cfg, lambda_s=[np.sqrt(200) + np.sqrt(300) + 5.0])
    res = fit_svt_als(prob, cfg, pen, SolverOptions())
    table = variance_explained(res, cfg)
    assert all(row["total"] == 0.0 for row in table)


def test_fit_result_round_trip(tmp_path):
    prob, cfg, pen = prepared_instance(seed=21)
    opts = SolverOptions(max_epochs=30)
    res = fit_svt_als(prob, cfg, pen, opts)
    save_fit(res, tmp_path / "fit", opts=opts, pen=pen)
    back = load_fit(tmp_path / "fit", prob=prob)
    assert back.algorithm == res.algorithm
    assert back.epochs == res.epochs
    assert back.converged == res.converged
    assert np.array_equal(back.objective_trace, res.objective_trace)
    for a, b in zip(back.B, res.B):
        assert np.array_equal(a, b)
    for a, b in zip(back.S, res.S):
        assert np.array_equal(a, b)
    assert np.allclose(back.residual, res.residual, atol=1e-9)


def test_imputation_options_cap_epochs():
    opts = SolverOptions(algorithm="factored_als", max_epochs=200, seed=5)
    capped = options_for_imputation(opts)
    assert capped.max_epochs == 30
    assert capped.algorithm == "factored_als"
    assert capped.seed == 5
    already_short = options_for_imputation(SolverOptions(max_epochs=10))
    assert already_short.max_epochs == 10
