"""Exact finite-sample inference on the maximizer of the expected simulated log-likelihood.

The statistic for ``H0: MESLE = theta0`` only involves the fitted slope at
``theta0``, ``g = b + 2 c theta0``, and its conditional covariance, which
makes the F reference law exact for any number of simulations above the
minimum.
"""
import math

import numpy as np

from ._sets import quadratic_inequality_set
from .distributions import f_quantile, f_sf
from .features import n_quadratic_features, theta_mat
from .metamodel import TestResult

__all__ = ["slope_covariance_factor", "mesle_ht", "mesle_ci_1d", "mesle_confregion"]


class DegenerateDesignError(ValueError):
    """The test's inner matrices are singular at the requested null point."""


def _schur_bc(info):
    # V = U_bc,bc - u_bc,a u_aa^{-1} u_a,bc
    u_aa = info[0, 0]
    u_bc_a = info[1:, 0]
    return info[1:, 1:] - np.outer(u_bc_a, u_bc_a) / u_aa


def slope_covariance_factor(fit, theta0):
    """Matrix ``G' V^{-1} G`` with ``G = (I_d ; 2 theta0_mat')``.

    ``sigma2`` times this matrix is the conditional covariance of the fitted
    slope ``b + 2 c theta0``.
    """
    V = _schur_bc(fit.info)
    G = np.vstack([np.eye(fit.d), 2.0 * theta_mat(theta0).T])
    try:
        return G.T @ np.linalg.solve(V, G)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDesignError("degenerate design at null point") from exc


def mesle_ht(fit, theta_H0):
    """Test ``H0: MESLE = theta_H0`` for a fitted conditional metamodel.

    Returns a :class:`TestResult` whose statistic follows
    ``F(d, M - (d**2 + 3d + 2)/2)`` under the null.
    """
    theta_H0 = np.atleast_1d(np.asarray(theta_H0, dtype=float))
    if theta_H0.size != fit.d:
        raise ValueError(f"null point has dimension {theta_H0.size}, fit has d={fit.d}")
    p = n_quadratic_features(fit.d)
    M, d = fit.M, fit.d
    if M <= p:
        raise ValueError(f"need M > {p} simulations for the test, got {M}")
    g = fit.b + 2.0 * fit.c @ theta_H0
    H = slope_covariance_factor(fit, theta_H0)
    try:
        xi = float(g @ np.linalg.solve(H, g))
    except np.linalg.LinAlgError as exc:
        raise DegenerateDesignError("degenerate design at null point") from exc
    xi = max(xi, 0.0)
    df2 = M - p
    if fit.sigma2 > 0:
        stat = df2 * xi / (M * d * fit.sigma2)
        mllr = -0.5 * M * math.log1p(xi / (M * fit.sigma2))
    else:
        stat = 0.0 if xi == 0 else math.inf
        mllr = 0.0 if xi == 0 else -math.inf
    return TestResult(statistic=stat, df1=d, df2=df2, p_value=f_sf(stat, d, df2), mllr=mllr)


def mesle_ci_1d(fit, alpha):
    """Level ``1 - alpha`` confidence set for a scalar MESLE.

    The set is the inversion of :func:`mesle_ht` and may be an interval, the
    complement of an interval, the whole line, or empty.
    """
    if fit.d != 1:
        raise ValueError("mesle_ci_1d needs d = 1; use mesle_confregion for d >= 2")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    M = fit.M
    V = _schur_bc(fit.info)
    Vbb, Vbc, Vcc = V[0, 0], V[0, 1], V[1, 1]
    detV = Vbb * Vcc - Vbc ** 2
    b, c = float(fit.b[0]), float(fit.c[0, 0])
    crit = M * fit.sigma2 * f_quantile(1.0 - alpha, 1, M - 3)
    k = M - 3
    t1, t2 = 4 * k * c * c * detV, 4 * crit * Vbb
    t3, t4 = 4 * k * b * c * detV, 4 * crit * Vbc
    t5, t6 = k * b * b * detV, crit * Vcc
    return quadratic_inequality_set(
        t1 - t2, t3 + t4, t5 - t6, 1.0 - alpha,
        scales=(max(abs(t1), abs(t2)), max(abs(t3), abs(t4)), max(abs(t5), abs(t6))),
    )


def mesle_confregion(fit, alpha, grid):
    """Flag each grid point by whether the MESLE test keeps it at level ``alpha``."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid is empty")
    if grid.ndim == 1:
        grid = grid[:, None] if fit.d == 1 else grid[None, :]
    return [(point, mesle_ht(fit, point).p_value >= alpha) for point in grid]
