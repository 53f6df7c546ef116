import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sbim.features import theta_mat
from sbim.mesle import mesle_ci_1d, mesle_confregion, mesle_ht, slope_covariance_factor
from sbim.metamodel import SimLogLikTable, fit_quadratic

from conftest import quadratic_table


def test_slope_covariance_matches_inverse_information(rng):
    fit = fit_quadratic(quadratic_table(rng, M=30, d=2, weights=rng.uniform(0.5, 2, 30)))
    theta0 = np.array([0.3, -0.7])
    L = np.hstack([np.zeros((2, 1)), np.eye(2), 2 * theta_mat(theta0)])
    oracle = L @ np.linalg.solve(fit.info, L.T)
    np.testing.assert_allclose(slope_covariance_factor(fit, theta0), oracle, rtol=1e-9)


def test_statistic_oracle(rng):
    fit = fit_quadratic(quadratic_table(rng, M=25))
    theta0 = np.array([0.4])
    g = fit.b + 2 * fit.c @ theta0
    L = np.array([[0.0, 1.0, 2 * theta0[0]]])
    var = (L @ np.linalg.solve(fit.info, L.T))[0, 0]
    xi = g[0] ** 2 / var
    res = mesle_ht(fit, theta0)
    assert res.statistic == pytest.approx((25 - 3) * xi / (25 * fit.sigma2), rel=1e-10)
    assert res.p_value == pytest.approx(stats.f.sf(res.statistic, 1, 22), rel=1e-8)
    assert res.mllr == pytest.approx(-12.5 * np.log1p(xi / (25 * fit.sigma2)), rel=1e-10)
    assert (res.df1, res.df2) == (1, 22)


def test_null_law_is_exact_f(rng):
    stats_ = []
    for _ in range(400):
        table = quadratic_table(rng, M=12, b=[0.6], sigma=1.0)
        stats_.append(mesle_ht(fit_quadratic(table), [0.3]).statistic)
    assert stats.kstest(stats_, stats.f(1, 9).cdf).pvalue > 0.001


def test_test_invariant_to_value_shift_and_scale(rng):
    table = quadratic_table(rng, M=20)
    base = mesle_ht(fit_quadratic(table), [0.2]).statistic
    moved = table.with_values(3.0 * table.values + 11.0)
    assert mesle_ht(fit_quadratic(moved), [0.2]).statistic == pytest.approx(base, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-3, 3))
def test_test_equivariant_to_parameter_translation(seed, shift):
    rng = np.random.default_rng(seed)
    table = quadratic_table(rng, M=15, d=2)
    moved = SimLogLikTable(table.thetas + shift, table.values)
    null = np.array([0.1, -0.2])
    a = mesle_ht(fit_quadratic(table), null).statistic
    b = mesle_ht(fit_quadratic(moved), null + shift).statistic
    assert b == pytest.approx(a, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.05, 0.2])
def test_ci_duality_on_grid(rng, alpha):
    fit = fit_quadratic(quadratic_table(rng, M=30, sigma=0.8))
    cs = mesle_ci_1d(fit, alpha)
    for t in np.linspace(-3, 3, 200):
        p = mesle_ht(fit, [t]).p_value
        if abs(p - alpha) > 1e-9:
            assert (t in cs) == (p > alpha)
    if cs.kind == "interval":
        for end in cs.bounds:
            assert mesle_ht(fit, [end]).p_value == pytest.approx(alpha, abs=1e-9)


def test_ci_can_be_complement_or_full_line():
    # flat noisy surface: the slope test cannot reject far points
    rng = np.random.default_rng(3)
    kinds = set()
    for _ in range(50):
        th = np.linspace(-1, 1, 8)
        table = SimLogLikTable(th, 0.01 * th ** 2 + rng.standard_normal(8))
        kinds.add(mesle_ci_1d(fit_quadratic(table), 0.05).kind)
    assert kinds & {"complement_of_interval", "full_line"}


def test_confregion_agrees_with_test(rng):
    fit = fit_quadratic(quadratic_table(rng, M=30, d=2))
    grid = rng.uniform(-1, 1, size=(25, 2))
    for point, keep in mesle_confregion(fit, 0.1, grid):
        assert keep == (mesle_ht(fit, point).p_value >= 0.1)


def test_input_validation(rng):
    fit = fit_quadratic(quadratic_table(rng, M=10))
    with pytest.raises(ValueError):
        mesle_ht(fit, [0.0, 1.0])
    with pytest.raises(ValueError):
        mesle_ci_1d(fit, 1.5)
    fit2 = fit_quadratic(quadratic_table(rng, M=10, d=2))
    with pytest.raises(ValueError):
        mesle_ci_1d(fit2, 0.05)
    with pytest.raises(ValueError):
        mesle_confregion(fit, 0.05, [])


def test_nearly_noiseless_rejects_wrong_null(rng):
    th = np.linspace(-1, 1, 9)
    fit = fit_quadratic(SimLogLikTable(th, -(th - 0.25) ** 2 + 1e-6 * rng.standard_normal(9)))
    assert mesle_ht(fit, [0.3]).p_value < 1e-6
    assert mesle_ht(fit, [0.25]).p_value > 1e-3
