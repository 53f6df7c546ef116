import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sbim.autotune import adjust_weights, candidate_weight, cubic_pvalue, mesle_jacobian, opt_design, stv
from sbim.features import design_matrix, n_vech, unvech, vech
from sbim.metamodel import MetaFit, SimLogLikTable, fit_quadratic, mesle_point

from conftest import quadratic_table


def contaminated_table(seed, M=60):
    rng = np.random.default_rng(seed)
    th = np.linspace(-3, 3, M)
    return SimLogLikTable(th, -th ** 2 + 0.15 * th ** 3 + 0.3 * rng.standard_normal(M))


def test_cubic_pvalue_oracle(rng):
    table = quadratic_table(rng, M=30, d=2, weights=rng.uniform(0.5, 2, 30))
    th, y, w = table.thetas, table.values, table.weights
    cubic = np.column_stack([th[:, 0] ** 3, th[:, 0] ** 2 * th[:, 1], th[:, 0] * th[:, 1] ** 2, th[:, 1] ** 3])
    Xq = design_matrix(th)
    Xc = np.hstack([Xq, cubic])
    sw = np.sqrt(w)
    rss = [np.sum((sw * y - (X * sw[:, None]) @ np.linalg.lstsq(X * sw[:, None], sw * y, rcond=None)[0]) ** 2)
           for X in (Xq, Xc)]
    F = (rss[0] - rss[1]) / 4 / (rss[1] / (30 - 10))
    assert cubic_pvalue(table) == pytest.approx(stats.f.sf(F, 4, 20), rel=1e-7)


def test_cubic_pvalue_uniform_under_quadratic_truth():
    rng = np.random.default_rng(12)
    p = [cubic_pvalue(quadratic_table(rng, M=15)) for _ in range(400)]
    assert stats.kstest(p, "uniform").pvalue > 1e-3


def test_cubic_pvalue_edge_cases():
    th = np.linspace(-1, 1, 10)
    assert cubic_pvalue(SimLogLikTable(th, -th ** 2)) == 1.0
    with pytest.raises(ValueError):
        cubic_pvalue(SimLogLikTable(th[:4], -th[:4] ** 2))


@pytest.mark.parametrize("seed", range(5))
def test_adjust_converges_on_contaminated_data(seed):
    table = contaminated_table(seed)
    assert cubic_pvalue(table) < 0.01
    res = adjust_weights(table)
    assert res.converged
    assert 0.01 <= res.p_cubic_final <= 0.3
    assert math.isfinite(res.g_final) and res.g_final > 0
    assert np.all(res.adjusted_weights <= table.weights * (1 + 1e-12))
    assert cubic_pvalue(table, res.adjusted_weights) == pytest.approx(res.p_cubic_final)


def test_adjusted_weights_decrease_with_fitted_drop():
    table = contaminated_table(1)
    res = adjust_weights(table)
    drop = res.fit.predict(res.theta_hat) - res.fit.predict(table.thetas)
    order = np.argsort(drop)
    ratio = (res.adjusted_weights / table.weights)[order]
    assert np.all(np.diff(ratio) <= 1e-12)


def test_adjust_fast_path_on_clean_data(rng):
    table = quadratic_table(rng, M=40)
    res = adjust_weights(table)
    if cubic_pvalue(table) >= 0.01:
        assert res.converged and math.isinf(res.g_final)
        np.testing.assert_array_equal(res.adjusted_weights, table.weights)
    assert set(res.to_dict()) == {"adjusted_weights", "g_final", "p_cubic_final", "iterations", "converged"}


def _fd_jacobian(fit, h=1e-6):
    d = fit.d
    base = fit.coef

    def point(coef):
        f = MetaFit(coef[0], coef[1:1 + d], unvech(coef[1 + d:]), 1.0, np.eye(coef.size), 10, d)
        return mesle_point(f)

    cols = []
    for k in range(base.size):
        e = np.zeros(base.size)
        e[k] = h
        cols.append((point(base + e) - point(base - e)) / (2 * h))
    return np.column_stack(cols)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_mesle_jacobian_matches_finite_differences(d):
    rng = np.random.default_rng(d)
    A = rng.normal(size=(d, d))
    c = -(A @ A.T + d * np.eye(d))
    b = rng.normal(size=d)
    fit = MetaFit(0.3, b, c, 1.0, np.eye(1 + d + n_vech(d)), 10, d)
    np.testing.assert_allclose(mesle_jacobian(fit), _fd_jacobian(fit), atol=1e-4, rtol=1e-4)


def test_stv_oracle_and_monotonicity(rng):
    table = quadratic_table(rng, M=20, d=2)
    fit = fit_quadratic(table)
    X = design_matrix(table.thetas)
    J = mesle_jacobian(fit)
    base = np.trace(-np.linalg.solve(fit.c, J @ np.linalg.solve(X.T @ X, J.T)))
    cand = np.array([0.5, -0.5])
    assert stv(table, table.weights, fit, cand, 0.0) == pytest.approx(base, rel=1e-9)
    vals = [stv(table, table.weights, fit, cand, w) for w in (0.0, 0.5, 2.0, 10.0)]
    assert np.all(np.diff(vals) <= 1e-12)


def test_candidate_weight():
    th = np.linspace(-1, 1, 10)
    fit = fit_quadratic(SimLogLikTable(th, -th ** 2))
    assert candidate_weight(fit, [0.0], math.inf, 3.0, [5.0]) == 3.0
    assert candidate_weight(fit, [0.0], 2.0, 3.0, [1.0]) == pytest.approx(3.0 * math.exp(-0.5))
    assert candidate_weight(fit, [0.0], 2.0, 3.0, [0.0]) == pytest.approx(3.0)


def test_opt_design_matches_grid_oracle():
    rng = np.random.default_rng(0)
    th = np.linspace(-1, 1, 15)
    table = SimLogLikTable(th, -2 * th ** 2 + 0.5 * th + 0.2 * rng.standard_normal(15))
    info = opt_design(table, return_info=True)
    adj = info.adjust
    fit = adj.fit
    theta_hat = mesle_point(fit)
    grid = np.linspace(info.bounds[0, 0], info.bounds[0, 1], 4001)
    base = float(np.mean(table.weights))
    vals = [stv(table, adj.adjusted_weights, fit, [g], candidate_weight(fit, theta_hat, adj.g_final, base, [g]))
            for g in grid]
    step = grid[1] - grid[0]
    assert info.stv <= min(vals) + 1e-9
    best = grid[int(np.argmin(vals))]
    assert abs(info.point[0] - best) <= step or info.stv == pytest.approx(min(vals), rel=1e-9)
    np.testing.assert_array_equal(opt_design(table), info.point)


def test_opt_design_two_parameters(rng):
    table = quadratic_table(rng, M=30, d=2, sigma=0.2)
    info = opt_design(table, return_info=True)
    assert np.all(info.point >= info.bounds[:, 0]) and np.all(info.point <= info.bounds[:, 1])
    assert info.stv < stv(table, info.adjust.adjusted_weights, info.adjust.fit, info.adjust.theta_hat, 0.0)


def test_opt_design_respects_domain():
    rng = np.random.default_rng(0)
    th = np.linspace(-1, 1, 15)
    table = SimLogLikTable(th, -2 * th ** 2 + 0.2 * rng.standard_normal(15))
    free = opt_design(table)
    point = opt_design(table, bounds=[[-0.5, np.inf]])
    assert point[0] >= -0.5
    assert free[0] < -0.5 or free[0] > 0
    with pytest.raises(ValueError):
        opt_design(table, bounds=[[10.0, 11.0]])
