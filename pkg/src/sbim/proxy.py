"""Inference on the simulation-based proxy through the marginal metamodel.

Differences ``l_m - l_1`` remove the intercept, whose distribution across
data sets is left unspecified.  Their covariance combines Monte Carlo noise
``sigma^2 C W^{-1} C'`` with data variability of the slope
``C Theta n K1 Theta' C'``; ``cqc`` is the corresponding precision, scaled by
``sigma^2`` and lifted back to the M simulation points.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy import linalg

from ._sets import quadratic_inequality_set
from .distributions import f_quantile, f_sf
from .features import design_matrix, n_quadratic_features, n_vech, theta_mat, unvech
from .k1 import project_psd
from .metamodel import NoInteriorMaximumError, RANK_TOL, RankDeficiencyError, TestResult

__all__ = [
    "ProxyFit",
    "build_cqc",
    "proxy_fit",
    "proxy_ht",
    "proxy_ci_1d",
    "proxy_confregion",
]

logger = logging.getLogger(__name__)


def build_cqc(table, k1, sigma2, n_obs=None):
    """Composite precision ``C' {C W^-1 C' + C Theta n K1 Theta' C' / sigma2}^-1 C``.

    The result is an M x M symmetric matrix with ``cqc @ ones == 0``.
    """
    n = table.n_obs if n_obs is None else int(n_obs)
    if n is None:
        raise ValueError("n_obs is required to build the composite precision")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    d = table.d
    k1 = np.atleast_2d(np.asarray(k1, dtype=float))
    if k1.shape != (d, d):
        raise ValueError(f"k1 must be {d}x{d}, got {k1.shape}")
    w = table.weights
    D = table.thetas[1:] - table.thetas[0]  # C Theta
    S = np.diag(1.0 / w[1:]) + 1.0 / w[0] + (n / sigma2) * (D @ k1 @ D.T)
    C = np.hstack([-np.ones((table.M - 1, 1)), np.eye(table.M - 1)])
    try:
        Z = linalg.cho_solve(linalg.cho_factor(S), C)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("composite covariance is not positive definite") from exc
    cqc = C.T @ Z
    return 0.5 * (cqc + cqc.T)


@dataclass(frozen=True)
class ProxyFit:
    """Second-stage fit of the marginal metamodel.

    Holds the cached composite precision so that tests at many null values
    reuse a single M x M solve.
    """

    theta_star: np.ndarray
    c_hat: np.ndarray
    sigma2_2nd: float
    cqc: np.ndarray
    k1_used: np.ndarray
    sigma2_used: float
    n_obs: int
    coef: np.ndarray
    thetas: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    k1_source: str = "user"
    sigma2_source: str = "first-stage"

    @property
    def M(self):
        return self.thetas.shape[0]

    @property
    def d(self):
        return self.thetas.shape[1]

    @property
    def df2(self):
        return self.M - n_quadratic_features(self.d)

    def _rss(self):
        return (self.M - 1) * self.sigma2_2nd

    def _restricted_rss(self, theta0):
        Q = design_matrix(self.thetas, include_intercept=False)
        T = Q @ np.vstack([theta_mat(theta0), -0.5 * np.eye(n_vech(self.d))])
        CT = self.cqc @ T
        gram = T.T @ CT
        try:
            gamma = np.linalg.solve(gram, CT.T @ self.values)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("singular restricted design at the null value") from exc
        r = self.values - T @ gamma
        return float(r @ self.cqc @ r)

    def test(self, theta0):
        """Approximate F test of ``H0: proxy = theta0``."""
        theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        if theta0.size != self.d:
            raise ValueError(f"null value has dimension {theta0.size}, fit has d={self.d}")
        rss0 = self._restricted_rss(theta0)
        rss1 = self._rss()
        df1, df2 = self.d, self.df2
        if rss1 > 0:
            ratio = max(rss0 / rss1, 1.0)
            stat = df2 / df1 * (ratio - 1.0)
            mllr = -0.5 * (self.M - 1) * math.log(ratio)
        else:
            stat, mllr = (0.0, 0.0) if rss0 <= 0 else (math.inf, -math.inf)
        return TestResult(
            statistic=stat, df1=df1, df2=df2, p_value=f_sf(stat, df1, df2), mllr=mllr,
            extra=self.summary(),
        )

    def confidence_set(self, alpha):
        """Level ``1 - alpha`` confidence set for a scalar proxy."""
        if self.d != 1:
            raise ValueError("proxy_ci_1d needs d = 1; use proxy_confregion for d >= 2")
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        M = self.M
        Q = design_matrix(self.thetas, include_intercept=False)
        CQ = self.cqc @ Q
        rho = Q.T @ CQ
        zeta1, zeta2 = CQ.T @ self.values
        lcl = float(self.values @ self.cqc @ self.values)
        thresh = self._rss() * (f_quantile(1.0 - alpha, 1, M - 3) / (M - 3) + 1.0)
        zeta0 = lcl - thresh
        r11, r12, r22 = rho[0, 0], rho[0, 1], rho[1, 1]
        A = zeta0 * r11 - zeta1 ** 2
        B = zeta1 * zeta2 - zeta0 * r12
        C = 0.25 * (r22 * zeta0 - zeta2 ** 2)
        z0s = max(abs(lcl), abs(thresh))
        scales = (
            max(z0s * abs(r11), zeta1 ** 2),
            max(abs(zeta1 * zeta2), z0s * abs(r12)),
            0.25 * max(z0s * abs(r22), zeta2 ** 2),
        )
        return quadratic_inequality_set(A, B, C, 1.0 - alpha, scales=scales)

    def confidence_region(self, alpha, grid):
        """Flag grid points whose test p-value is at least ``alpha``."""
        grid = np.asarray(grid, dtype=float)
        if grid.size == 0:
            raise ValueError("grid is empty")
        if grid.ndim == 1:
            grid = grid[:, None] if self.d == 1 else grid[None, :]
        return [(point, self.test(point).p_value >= alpha) for point in grid]

    def summary(self):
        return {
            "theta_star": [float(v) for v in self.theta_star],
            "sigma2_2nd": float(self.sigma2_2nd),
            "k1_used": np.asarray(self.k1_used, dtype=float).tolist(),
            "k1_source": self.k1_source,
            "sigma2_source": self.sigma2_source,
        }


def proxy_fit(table, k1, sigma2, n_obs=None, k1_source="user", sigma2_source="first-stage",
              require_concave=True):
    """Second-stage generalized least squares for the proxy and curvature.

    ``k1`` is projected onto the PSD cone (with a warning) when indefinite.
    With ``require_concave=False`` a fitted curvature that is not negative
    definite gives ``theta_star = nan`` instead of an error; the test and
    confidence set do not depend on the point estimate.
    """
    n = table.n_obs if n_obs is None else int(n_obs)
    d, M = table.d, table.M
    k1 = np.atleast_2d(np.asarray(k1, dtype=float))
    k1_psd = project_psd(k1)
    if not np.allclose(k1_psd, 0.5 * (k1 + k1.T), rtol=0, atol=0):
        logger.warning("K1 estimate is indefinite (eigenvalues %s); projecting onto the PSD cone",
                       np.linalg.eigvalsh(0.5 * (k1 + k1.T)))
    cqc = build_cqc(table, k1_psd, sigma2, n)

    Q = design_matrix(table.thetas, include_intercept=False)
    DQ = Q[1:] - Q[0]
    s = np.linalg.svd(DQ, compute_uv=False)
    if s[-1] < RANK_TOL * s[0]:
        raise RankDeficiencyError("differenced design C theta^{1:2} is rank deficient")
    CQ = cqc @ Q
    coef = np.linalg.solve(Q.T @ CQ, CQ.T @ table.values)
    c_hat = unvech(coef[d:])
    if np.all(np.linalg.eigvalsh(c_hat) < 0):
        theta_star = -0.5 * np.linalg.solve(c_hat, coef[:d])
    elif require_concave:
        raise NoInteriorMaximumError("proxy not identifiable from design: fitted curvature is not negative definite")
    else:
        theta_star = np.full(d, np.nan)
    r = table.values - Q @ coef
    sigma2_2nd = float(r @ cqc @ r) / (M - 1)
    return ProxyFit(
        theta_star=theta_star, c_hat=c_hat, sigma2_2nd=max(sigma2_2nd, 0.0), cqc=cqc,
        k1_used=k1_psd, sigma2_used=float(sigma2), n_obs=n, coef=coef,
        thetas=table.thetas, values=table.values, k1_source=k1_source, sigma2_source=sigma2_source,
    )


def proxy_ht(table, k1, sigma2, theta_star_0, n_obs=None):
    """Test ``H0: proxy = theta_star_0``; see :meth:`ProxyFit.test`."""
    return proxy_fit(table, k1, sigma2, n_obs, require_concave=False).test(theta_star_0)


def proxy_ci_1d(table, k1, sigma2, alpha, n_obs=None):
    """Confidence set for a scalar proxy; see :meth:`ProxyFit.confidence_set`."""
    if table.d != 1:
        raise ValueError("proxy_ci_1d needs d = 1; use proxy_confregion for d >= 2")
    return proxy_fit(table, k1, sigma2, n_obs, require_concave=False).confidence_set(alpha)


def proxy_confregion(table, k1, sigma2, alpha, grid, n_obs=None):
    """Grid scan of the proxy test at level ``alpha``."""
    return proxy_fit(table, k1, sigma2, n_obs, require_concave=False).confidence_region(alpha, grid)
