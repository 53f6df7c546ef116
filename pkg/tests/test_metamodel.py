import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbim._sets import quadratic_inequality_set
from sbim.features import design_matrix, vech
from sbim.metamodel import (
    ConfidenceSet, NoInteriorMaximumError, RankDeficiencyError, SimLogLikTable, fit_quadratic, mesle_point,
    min_points, mllr_full, proxy_bias_bound, weighted_lstsq,
)

from conftest import quadratic_table


def test_noiseless_fit_recovers_coefficients(rng):
    c = np.array([[-2.0, 0.3], [0.3, -1.0]])
    b = np.array([0.5, -1.5])
    table = quadratic_table(rng, M=30, d=2, a=4.0, b=b, c=c, sigma=0.0)
    fit = fit_quadratic(table)
    assert fit.a == pytest.approx(4.0, abs=1e-10)
    np.testing.assert_allclose(fit.b, b, atol=1e-10)
    np.testing.assert_allclose(fit.c, c, atol=1e-10)
    assert fit.sigma2 == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(mesle_point(fit), -0.5 * np.linalg.solve(c, b), atol=1e-10)


def test_wls_matches_lstsq_oracle(rng):
    w = rng.uniform(0.2, 5.0, 50)
    table = quadratic_table(rng, M=50, d=2, weights=w)
    fit = fit_quadratic(table)
    X = design_matrix(table.thetas)
    sw = np.sqrt(w)
    oracle = np.linalg.lstsq(X * sw[:, None], table.values * sw, rcond=None)[0]
    np.testing.assert_allclose(fit.coef, oracle, rtol=1e-9, atol=1e-12)
    rss = np.sum(w * (table.values - X @ oracle) ** 2)
    assert fit.sigma2 == pytest.approx(rss / 50, rel=1e-10)
    np.testing.assert_allclose(fit.info, X.T @ (w[:, None] * X), rtol=1e-12)


def test_predict_accepts_single_point(rng):
    fit = fit_quadratic(quadratic_table(rng, M=20, d=2))
    pts = rng.normal(size=(3, 2))
    np.testing.assert_allclose(fit.predict(pts[0]), fit.predict(pts)[:1])


def test_weight_scale_invariance(rng):
    table = quadratic_table(rng, M=25)
    a = fit_quadratic(table)
    b = fit_quadratic(table.with_weights(7.0 * table.weights))
    np.testing.assert_allclose(a.coef, b.coef, rtol=1e-10, atol=1e-12)
    assert b.sigma2 == pytest.approx(7.0 * a.sigma2)


def test_rank_deficient_design():
    thetas = np.repeat([[0.0], [1.0]], 5, axis=0)
    with pytest.raises(RankDeficiencyError):
        fit_quadratic(SimLogLikTable(thetas, np.arange(10.0)))


def test_too_few_points():
    with pytest.raises(ValueError, match="at least"):
        fit_quadratic(SimLogLikTable([0.0, 1.0, 2.0], [0.0, 1.0, 0.0]))
    assert min_points(1) == 4 and min_points(2) == 7


def test_weighted_lstsq_multiple_rhs(rng):
    X = rng.normal(size=(20, 3))
    Y = rng.normal(size=(20, 4))
    w = rng.uniform(1, 2, 20)
    out = weighted_lstsq(X, w, Y)
    for k in range(4):
        np.testing.assert_allclose(out[:, k], weighted_lstsq(X, w, Y[:, k]), rtol=1e-12)


def test_mesle_point_needs_concavity(rng):
    table = quadratic_table(rng, M=20, c=np.array([[1.0]]), sigma=0.0)
    with pytest.raises(NoInteriorMaximumError):
        mesle_point(fit_quadratic(table))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(thetas=[0, 1, 2], values=[0, np.nan, 1]),
        dict(thetas=[0, 1, 2], values=[0, 1, 1], weights=[1, 0, 1]),
        dict(thetas=[0, 1, 2], values=[0, 1]),
        dict(thetas=[0, np.inf, 2], values=[0, 1, 1]),
        dict(thetas=[0, 1, 2], values=[0, 1, 1], per_block_values=np.ones((2, 2))),
        dict(thetas=[0, 1, 2], values=[0, 1, 1], n_obs=0),
    ],
)
def test_table_validation(kwargs):
    with pytest.raises(ValueError):
        SimLogLikTable(**kwargs)


def test_mllr_full_zero_at_mle_and_negative_elsewhere(rng):
    table = quadratic_table(rng, M=30)
    fit = fit_quadratic(table)
    assert mllr_full(fit, table, fit.coef, fit.sigma2) == pytest.approx(0.0, abs=1e-9)
    assert mllr_full(fit, table, fit.coef + 0.1, fit.sigma2) < 0
    assert mllr_full(fit, table, fit.coef, 2 * fit.sigma2) < 0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-1, 1), scale=st.floats(0.2, 5))
def test_mllr_full_never_positive(seed, shift, scale):
    rng = np.random.default_rng(seed)
    table = quadratic_table(rng, M=15)
    fit = fit_quadratic(table)
    assert mllr_full(fit, table, fit.coef + shift, fit.sigma2 * scale) <= 1e-9


def test_mllr_full_validates_inputs(rng):
    table = quadratic_table(rng, M=10)
    fit = fit_quadratic(table)
    with pytest.raises(ValueError):
        mllr_full(fit, table, np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        mllr_full(fit, table, fit.coef, 0.0)


def test_proxy_bias_bound():
    assert proxy_bias_bound(2.0, 1.0, 0.25, 0.1) == pytest.approx(2 * 0.45 / 2.0)
    assert proxy_bias_bound(0.1, 1.0, 0.25, 0.1) is None
    with pytest.raises(ValueError):
        proxy_bias_bound(-1.0, 1.0, 0.0, 0.0)


def test_confidence_set_membership():
    ci = ConfidenceSet("interval", (-1.0, 2.0), 0.95)
    assert 0.0 in ci and 3.0 not in ci
    co = ConfidenceSet("complement_of_interval", (-1.0, 2.0), 0.95)
    assert 0.0 not in co and 3.0 in co
    assert 5.0 in ConfidenceSet("full_line", (), 0.9)
    assert 5.0 not in ConfidenceSet("empty", (), 0.9)
    with pytest.raises(ValueError):
        ConfidenceSet("interval", (2.0, 1.0), 0.9)
    with pytest.raises(ValueError):
        ConfidenceSet("ball", (), 0.9)


@pytest.mark.parametrize(
    "A,B,C,kind,bounds",
    [
        (1.0, 0.0, -4.0, "interval", (-2.0, 2.0)),
        (-1.0, 0.0, 4.0, "complement_of_interval", (-2.0, 2.0)),
        (1.0, 0.0, 4.0, "empty", ()),
        (-1.0, 0.0, -4.0, "full_line", ()),
        (0.0, 2.0, -4.0, "interval", (-math.inf, 2.0)),
        (0.0, -2.0, -4.0, "interval", (-2.0, math.inf)),
        (0.0, 0.0, -1.0, "full_line", ()),
        (0.0, 0.0, 1.0, "empty", ()),
    ],
)
def test_quadratic_inequality_cases(A, B, C, kind, bounds):
    cs = quadratic_inequality_set(A, B, C, 0.95)
    assert cs.kind == kind
    np.testing.assert_allclose(cs.bounds, bounds)


@settings(max_examples=200, deadline=None)
@given(A=st.floats(-10, 10), B=st.floats(-10, 10), C=st.floats(-10, 10), x=st.floats(-20, 20))
def test_quadratic_inequality_membership(A, B, C, x):
    val = A * x * x + B * x + C
    cs = quadratic_inequality_set(A, B, C, 0.95)
    if abs(val) > 1e-6 * (abs(A) * x * x + abs(B * x) + abs(C) + 1):
        assert (x in cs) == (val < 0)
