import numpy as np
import pytest
from sklearn.utils.estimator_checks import check_estimator

from sbim.estimators import ProxyMetamodel, QuadraticMetamodel
from sbim.k1 import block_sums, default_blocks
from sbim.metamodel import SimLogLikTable, fit_quadratic, mesle_point
from sbim.mesle import mesle_ht
from sbim.proxy import proxy_fit

# generic sklearn datasets carry fewer rows than a quadratic in many features needs
SMALL_DATA_CHECKS = [
    "check_n_features_in_after_fitting", "check_estimators_dtypes", "check_sample_weights_shape",
    "check_sample_weights_not_overwritten", "check_sample_weight_equivalence_on_dense_data",
    "check_dtype_object", "check_estimators_nan_inf", "check_regressors_no_decision_function",
    "check_regressors_int",
]


def _expected(est):
    return {name: "too few rows for a full quadratic" for name in SMALL_DATA_CHECKS}


@pytest.mark.parametrize("est", [QuadraticMetamodel(), ProxyMetamodel(n_obs=50, k1=1.0)])
def test_sklearn_compatibility(est):
    check_estimator(est, expected_failed_checks=_expected(est))


def _data(rng, M=40, d=1):
    X = rng.uniform(-1, 1, size=(M, d))
    y = -np.sum(X ** 2, axis=1) + 0.3 * X[:, 0] + 0.1 * rng.standard_normal(M)
    return X, y


def test_quadratic_estimator_matches_functions(rng):
    X, y = _data(rng)
    est = QuadraticMetamodel().fit(X, y)
    fit = fit_quadratic(SimLogLikTable(X, y))
    np.testing.assert_allclose(est.coef_, fit.coef)
    np.testing.assert_allclose(est.mesle_, mesle_point(fit))
    assert est.test([0.1]).statistic == pytest.approx(mesle_ht(fit, [0.1]).statistic)
    np.testing.assert_allclose(est.predict(X), fit.predict(X))
    assert est.confidence_set(0.05).kind == "interval"
    assert len(est.confidence_region(0.05, np.linspace(-1, 1, 5))) == 5


def test_proxy_estimator_matches_functions(rng):
    n = 100
    part = default_blocks(n, 10)
    X = np.linspace(-0.5, 0.5, 30)[:, None]
    per_obs = -0.5 * (X - 0.1) ** 2 + 0.05 * rng.standard_normal((30, n))
    blocks = block_sums(per_obs, part)
    est = ProxyMetamodel(n_obs=n, k1=2.0).fit(X, per_obs.sum(axis=1), per_block_values=blocks,
                                              block_sizes=part.sizes)
    table = SimLogLikTable(X, per_obs.sum(axis=1), n_obs=n)
    pf = proxy_fit(table, [[2.0]], fit_quadratic(table).sigma2)
    np.testing.assert_allclose(est.theta_star_, pf.theta_star)
    assert est.test([0.0]).p_value == pytest.approx(pf.test([0.0]).p_value)
    auto = ProxyMetamodel(n_obs=n).fit(X, per_obs.sum(axis=1), per_block_values=blocks, block_sizes=part.sizes)
    assert auto.fit_.k1_source == "estimated"
    resid = per_obs.sum(axis=1) - est.predict(X)
    assert np.mean(resid) == pytest.approx(0.0, abs=1e-9)


def test_validation(rng):
    X, y = _data(rng, M=3)
    with pytest.raises(ValueError, match="at least"):
        QuadraticMetamodel().fit(X, y)
    X, y = _data(rng)
    with pytest.raises(ValueError):
        QuadraticMetamodel().fit(X, y, sample_weight=np.zeros(40))
    with pytest.raises(ValueError, match="n_obs"):
        ProxyMetamodel().fit(X, y)


def test_auto_adjust_records_result(rng):
    X, y = _data(rng)
    est = QuadraticMetamodel(auto_adjust=True).fit(X, y)
    assert est.adjustment_ is not None and est.adjustment_.converged
