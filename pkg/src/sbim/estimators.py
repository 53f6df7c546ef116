"""scikit-learn style estimators for quadratic log-likelihood metamodels.

``X`` holds simulation points (one row per point) and ``y`` the simulated
log-likelihoods.  Both estimators expose the inferential operations on top
of ``fit``/``predict``.
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import _check_sample_weight, check_is_fitted, validate_data

from .autotune import adjust_weights
from .features import design_matrix
from .k1 import estimate_k1
from .mesle import mesle_ci_1d, mesle_confregion, mesle_ht
from .metamodel import NoInteriorMaximumError, SimLogLikTable, fit_quadratic, mesle_point, min_points
from .proxy import proxy_fit

__all__ = ["QuadraticMetamodel", "ProxyMetamodel"]


def _validated_table(est, X, y, sample_weight, **extra):
    X, y = validate_data(est, X, y, y_numeric=True, ensure_min_samples=2)
    d = X.shape[1]
    if X.shape[0] < min_points(d):
        raise ValueError(f"need at least {min_points(d)} simulation points for {d} parameters, got {X.shape[0]}")
    w = _check_sample_weight(sample_weight, X, ensure_non_negative=True)
    if np.any(w <= 0):
        raise ValueError("sample weights must be strictly positive")
    table = SimLogLikTable(X, y, w, **extra)
    if est.auto_adjust:
        est.adjustment_ = adjust_weights(table)
        table = table.with_weights(est.adjustment_.adjusted_weights)
    else:
        est.adjustment_ = None
    return table


class QuadraticMetamodel(RegressorMixin, BaseEstimator):
    """Weighted quadratic fit with exact tests for the MESLE.

    Parameters
    ----------
    auto_adjust : bool, default=False
        Discount far-away simulation points until the cubic misfit test is
        in its target band before fitting.

    Attributes
    ----------
    fit_ : MetaFit
    mesle_ : ndarray of shape (n_features_in_,)
        Maximizer of the fitted quadratic, or NaN when it is not concave.
    """

    def __init__(self, auto_adjust=False):
        self.auto_adjust = auto_adjust

    def fit(self, X, y, sample_weight=None):
        table = _validated_table(self, X, y, sample_weight)
        self.table_ = table
        self.fit_ = fit_quadratic(table)
        self.coef_ = self.fit_.coef
        self.sigma2_ = self.fit_.sigma2
        try:
            self.mesle_ = mesle_point(self.fit_)
        except NoInteriorMaximumError:
            self.mesle_ = np.full(self.n_features_in_, np.nan)
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = validate_data(self, X, reset=False)
        return design_matrix(X) @ self.coef_

    def test(self, theta0):
        check_is_fitted(self, "fit_")
        return mesle_ht(self.fit_, theta0)

    def confidence_set(self, alpha=0.05):
        check_is_fitted(self, "fit_")
        return mesle_ci_1d(self.fit_, alpha)

    def confidence_region(self, alpha, grid):
        check_is_fitted(self, "fit_")
        return mesle_confregion(self.fit_, alpha, grid)


class ProxyMetamodel(RegressorMixin, BaseEstimator):
    """Two-stage fit targeting the simulation-based proxy.

    Parameters
    ----------
    n_obs : int
        Number of observations in the data set.
    k1 : "auto", float or array-like of shape (d, d), default="auto"
        Score covariance.  ``"auto"`` estimates it from ``per_block_values``
        passed to :meth:`fit`; a scalar means that multiple of the identity.
    auto_adjust : bool, default=False

    Notes
    -----
    The marginal metamodel does not identify the intercept, so
    :meth:`predict` centers predictions on the weighted mean of the
    training values.
    """

    def __init__(self, n_obs=None, k1="auto", auto_adjust=False):
        self.n_obs = n_obs
        self.k1 = k1
        self.auto_adjust = auto_adjust

    def fit(self, X, y, sample_weight=None, per_block_values=None, block_sizes=None):
        if self.n_obs is None:
            raise ValueError("n_obs must be set")
        table = _validated_table(self, X, y, sample_weight, n_obs=self.n_obs,
                                 per_block_values=per_block_values, block_sizes=block_sizes)
        first = fit_quadratic(table)
        if isinstance(self.k1, str) and self.k1 == "auto":
            k1, source = estimate_k1(table).matrix, "estimated"
        else:
            k1 = np.asarray(self.k1, dtype=float)
            k1 = k1 * np.eye(table.d) if k1.ndim == 0 else np.atleast_2d(k1)
            source = "user"
        self.table_ = table
        self.fit_ = proxy_fit(table, k1, first.sigma2, k1_source=source, require_concave=False)
        self.theta_star_ = self.fit_.theta_star
        self.c_hat_ = self.fit_.c_hat
        Q = design_matrix(table.thetas, include_intercept=False)
        resid = table.values - Q @ self.fit_.coef
        self.intercept_ = float(np.average(resid, weights=table.weights))
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = validate_data(self, X, reset=False)
        return self.intercept_ + design_matrix(X, include_intercept=False) @ self.fit_.coef

    def test(self, theta0):
        check_is_fitted(self, "fit_")
        return self.fit_.test(theta0)

    def confidence_set(self, alpha=0.05):
        check_is_fitted(self, "fit_")
        return self.fit_.confidence_set(alpha)

    def confidence_region(self, alpha, grid):
        check_is_fitted(self, "fit_")
        return self.fit_.confidence_region(alpha, grid)
