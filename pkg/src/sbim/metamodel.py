"""Conditional quadratic metamodel for simulated log-likelihoods.

Given simulated log-likelihoods ``l_m`` at parameter points ``theta_m`` with
known precision weights ``w_m``, the metamodel is

    l_m ~ N(a + b'theta_m + theta_m' c theta_m, sigma^2 / w_m).

This module holds the shared data containers and the weighted least-squares
fit of that model.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .features import (
    design_matrix,
    n_quadratic_features,
    symmetrize,
    unvech,
    vech,
)

__all__ = [
    "SimLogLikTable",
    "MetaFit",
    "TestResult",
    "ConfidenceSet",
    "RankDeficiencyError",
    "NoInteriorMaximumError",
    "weighted_lstsq",
    "fit_quadratic",
    "mesle_point",
    "mllr_full",
    "proxy_bias_bound",
    "min_points",
]

RANK_TOL = 1e-10


class RankDeficiencyError(ValueError):
    """The weighted design matrix does not have full column rank."""


class NoInteriorMaximumError(ValueError):
    """The fitted quadratic is not concave, so it has no interior maximizer."""


def min_points(d):
    """Smallest number of simulations for which the full fit is possible."""
    return n_quadratic_features(d) + 1


@dataclass(frozen=True)
class SimLogLikTable:
    """Simulated log-likelihoods at a collection of parameter points.

    Parameters
    ----------
    thetas : array-like, shape (M, d)
        Simulation points.
    values : array-like, shape (M,)
        Simulated log-likelihoods.
    weights : array-like, shape (M,), optional
        Positive precision weights; defaults to ones.
    n_obs : int, optional
        Number of observations in the data set the log-likelihoods refer to.
    per_block_values : array-like, shape (M, K), optional
        Block sums of per-observation simulated log-likelihoods.
    """

    thetas: np.ndarray
    values: np.ndarray
    weights: np.ndarray = None
    n_obs: int = None
    per_block_values: np.ndarray = None
    block_sizes: np.ndarray = None

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        if thetas.ndim != 2 or thetas.shape[1] < 1:
            raise ValueError(f"thetas must have shape (M, d), got {thetas.shape}")
        values = np.asarray(self.values, dtype=float).ravel()
        M = thetas.shape[0]
        if values.size != M:
            raise ValueError(f"{values.size} values for {M} points")
        if not np.all(np.isfinite(thetas)):
            raise ValueError("parameter coordinates must be finite")
        if not np.all(np.isfinite(values)):
            raise ValueError("log-likelihood values must be finite; drop degenerate rows first")
        weights = np.ones(M) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if weights.size != M:
            raise ValueError(f"{weights.size} weights for {M} points")
        if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be strictly positive and finite")
        blocks = self.per_block_values
        sizes = self.block_sizes
        if blocks is not None:
            blocks = np.asarray(blocks, dtype=float)
            if blocks.ndim != 2 or blocks.shape[0] != M:
                raise ValueError(f"per_block_values must have shape (M, K), got {blocks.shape}")
            if sizes is not None:
                sizes = np.asarray(sizes, dtype=int).ravel()
                if sizes.size != blocks.shape[1]:
                    raise ValueError("block_sizes length does not match the number of block columns")
        if self.n_obs is not None and int(self.n_obs) < 1:
            raise ValueError("n_obs must be a positive integer")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "per_block_values", blocks)
        object.__setattr__(self, "block_sizes", sizes)
        if self.n_obs is not None:
            object.__setattr__(self, "n_obs", int(self.n_obs))

    @property
    def M(self):
        return self.thetas.shape[0]

    @property
    def d(self):
        return self.thetas.shape[1]

    def with_weights(self, weights):
        return SimLogLikTable(self.thetas, self.values, weights, self.n_obs,
                              self.per_block_values, self.block_sizes)

    def with_values(self, values):
        return SimLogLikTable(self.thetas, values, self.weights, self.n_obs,
                              self.per_block_values, self.block_sizes)


@dataclass(frozen=True)
class MetaFit:
    """Fitted conditional metamodel.

    ``info`` is the regression information matrix ``X' W X`` with columns in
    the order ``(1, theta, vech(theta^2))``.
    """

    a: float
    b: np.ndarray
    c: np.ndarray
    sigma2: float
    info: np.ndarray
    M: int
    d: int

    @property
    def coef(self):
        return np.concatenate([[self.a], self.b, vech(self.c)])

    def predict(self, thetas):
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.d)
        return design_matrix(thetas) @ self.coef

    def to_dict(self):
        return {
            "a": float(self.a),
            "b": [float(v) for v in self.b],
            "c_vech": [float(v) for v in vech(self.c)],
            "sigma2": float(self.sigma2),
            "M": int(self.M),
            "d": int(self.d),
        }


@dataclass(frozen=True)
class TestResult:
    """Outcome of a metamodel likelihood ratio test.

    ``p_value`` is the upper tail of F(df1, df2) at ``statistic``.
    """

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    df1: int
    df2: float
    p_value: float
    mllr: float
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "statistic": float(self.statistic),
            "df1": int(self.df1),
            "df2": float(self.df2),
            "p_value": float(self.p_value),
            "mllr": float(self.mllr),
        }
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class ConfidenceSet:
    """A one-dimensional confidence set.

    ``kind`` is one of ``interval``, ``complement_of_interval``, ``full_line``
    or ``empty``.  Intervals may have one infinite endpoint when the defining
    quadratic inequality degenerates to a linear one.
    """

    kind: str
    bounds: tuple
    level: float

    KINDS = ("interval", "complement_of_interval", "full_line", "empty")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown confidence set kind {self.kind!r}")
        if self.kind in ("interval", "complement_of_interval"):
            if len(self.bounds) != 2 or not self.bounds[0] < self.bounds[1]:
                raise ValueError(f"{self.kind} requires two increasing bounds, got {self.bounds}")
        elif self.bounds:
            raise ValueError(f"{self.kind} takes no bounds")

    def __contains__(self, x):
        if self.kind == "full_line":
            return True
        if self.kind == "empty":
            return False
        lo, hi = self.bounds
        inside = lo < x < hi
        return inside if self.kind == "interval" else (x < lo or x > hi)

    def to_dict(self):
        return {"kind": self.kind, "bounds": [float(v) for v in self.bounds], "level": float(self.level)}


def weighted_lstsq(X, weights, Y, rank_tol=RANK_TOL):
    """Weighted least squares through an SVD of ``sqrt(W) X``.

    Returns the coefficient array (same trailing shape as ``Y``).  Raises
    :class:`RankDeficiencyError` when the smallest singular value is below
    ``rank_tol`` times the largest.
    """
    sw = np.sqrt(np.asarray(weights, dtype=float))
    Xw = X * sw[:, None]
    U, s, Vt = np.linalg.svd(Xw, full_matrices=False)
    if s.size == 0 or s[-1] < rank_tol * s[0]:
        smin = s[-1] if s.size else 0.0
        raise RankDeficiencyError(
            f"design matrix is rank deficient: singular value ratio {smin / s[0] if s.size else 0:.3g} "
            f"is below {rank_tol:g} ({X.shape[1]} columns, {X.shape[0]} rows)"
        )
    Y = np.asarray(Y, dtype=float)
    Yw = Y * (sw if Y.ndim == 1 else sw[:, None])
    return Vt.T @ ((U.T @ Yw) / (s if Y.ndim == 1 else s[:, None]))


def _split_coef(coef, d):
    return coef[0], coef[1:1 + d], unvech(coef[1 + d:])


def fit_quadratic(table):
    """Fit the conditional quadratic metamodel by weighted least squares.

    Returns a :class:`MetaFit` with the maximum metamodel likelihood
    estimates; ``sigma2`` uses divisor ``M``.
    """
    d, M = table.d, table.M
    if M < min_points(d):
        raise ValueError(f"need at least {min_points(d)} simulation points for d={d}, got {M}")
    X = design_matrix(table.thetas)
    coef = weighted_lstsq(X, table.weights, table.values)
    resid = table.values - X @ coef
    sigma2 = float(np.sum(table.weights * resid ** 2) / M)
    info = X.T @ (X * table.weights[:, None])
    info = 0.5 * (info + info.T)
    a, b, c = _split_coef(coef, d)
    return MetaFit(a=float(a), b=b, c=c, sigma2=sigma2, info=info, M=M, d=d)


def mesle_point(fit):
    """Maximizer ``-c^{-1} b / 2`` of the fitted quadratic.

    Raises :class:`NoInteriorMaximumError` unless ``c`` is negative definite.
    """
    c = symmetrize(fit.c)
    eig = np.linalg.eigvalsh(c)
    if not np.all(eig < 0):
        raise NoInteriorMaximumError(
            f"no interior maximizer: fitted curvature has eigenvalues {eig}; "
            "widen the design or treat the MESLE as unidentifiable"
        )
    return -0.5 * np.linalg.solve(c, fit.b)


def mllr_full(fit, table, A0, sigma0sq):
    """Log-likelihood ratio of ``(A0, sigma0sq)`` against the fitted metamodel."""
    A0 = np.asarray(A0, dtype=float).ravel()
    if A0.size != n_quadratic_features(table.d):
        raise ValueError(f"A0 has length {A0.size}, expected {n_quadratic_features(table.d)}")
    if not sigma0sq > 0:
        raise ValueError("sigma0sq must be positive")
    M = table.M
    resid = table.values - design_matrix(table.thetas) @ A0
    rss0 = float(np.sum(table.weights * resid ** 2))
    if fit.sigma2 == 0:
        return -math.inf
    return 0.5 * M * math.log(fit.sigma2 / sigma0sq) - rss0 / (2.0 * sigma0sq) + 0.5 * M


def proxy_bias_bound(lambda_min, delta, Bbar, eps):
    """Bound on the distance between a target and its quadratic surrogate maximizer.

    Returns ``2 (Bbar + 2 eps) / (delta * lambda_min)`` when the curvature
    condition ``lambda_min * delta**2 >= 2 (Bbar + 2 eps)`` holds, and ``None``
    when it does not.
    """
    if not (lambda_min > 0 and delta > 0):
        raise ValueError("lambda_min and delta must be positive")
    if Bbar < 0 or eps < 0:
        raise ValueError("Bbar and eps must be nonnegative")
    slack = Bbar + 2.0 * eps
    if lambda_min * delta ** 2 < 2.0 * slack:
        return None
    return 2.0 * slack / (delta * lambda_min)
