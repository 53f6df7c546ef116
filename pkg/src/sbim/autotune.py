"""Weight adjustment against cubic misfit and sequential design of simulation points.

Points far below the fitted maximum get exponentially discounted weights,
with the discount scale ``g`` tuned until a cubic term is neither clearly
needed nor clearly absent.  The next simulation point minimizes the scaled
total variance (STV) of the MESLE estimate after a rank-one information
update.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import optimize

from .distributions import f_sf
from .features import cubic_features, design_matrix, n_quadratic_features, n_vech, quad_features, unvech
from .metamodel import MetaFit, NoInteriorMaximumError, RankDeficiencyError, fit_quadratic, mesle_point, weighted_lstsq

__all__ = [
    "AdjustResult",
    "cubic_pvalue",
    "adjust_weights",
    "mesle_jacobian",
    "stv",
    "candidate_weight",
    "DesignResult",
    "opt_design",
]

P_LOW, P_HIGH = 0.01, 0.3
SHRINK, GROW = 1.8, 1.3
MAX_ITER = 50


def cubic_pvalue(table, weights=None):
    """p-value of the partial F test for all cubic monomials beyond the quadratic.

    Both nested fits use the same weights.  Returns 1 when the quadratic is
    already exact.
    """
    w = table.weights if weights is None else np.asarray(weights, dtype=float)
    d, M = table.d, table.M
    Xq = design_matrix(table.thetas)
    Xc = np.hstack([Xq, cubic_features(table.thetas)])
    k = Xc.shape[1] - Xq.shape[1]
    df2 = M - Xc.shape[1]
    if df2 < 1:
        raise ValueError(f"need more than {Xc.shape[1]} points to test the cubic term in d={d}, got {M}")
    y = table.values
    rq = y - Xq @ weighted_lstsq(Xq, w, y)
    rc = y - Xc @ weighted_lstsq(Xc, w, y)
    rss_q = float(np.sum(w * rq ** 2))
    rss_c = float(np.sum(w * rc ** 2))
    scale = max(rss_q, float(np.sum(w * (y - np.average(y, weights=w)) ** 2)), 1e-300)
    if rss_q <= 1e-24 * scale:
        return 1.0
    if rss_c <= 0:
        return 0.0
    F = max(rss_q - rss_c, 0.0) / k / (rss_c / df2)
    return f_sf(F, k, df2)


@dataclass(frozen=True)
class AdjustResult:
    adjusted_weights: np.ndarray
    g_final: float
    p_cubic_final: float
    iterations: int
    converged: bool
    fit: MetaFit = None
    theta_hat: np.ndarray = None

    def to_dict(self):
        return {
            "adjusted_weights": [float(v) for v in self.adjusted_weights],
            "g_final": float(self.g_final),
            "p_cubic_final": float(self.p_cubic_final),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


def _center(fit, thetas):
    # fitted maximizer, or the best design point when the fit is not concave
    try:
        return mesle_point(fit)
    except NoInteriorMaximumError:
        return thetas[int(np.argmax(fit.predict(thetas)))]


def _drop(fit, theta_hat, points):
    return np.maximum(fit.predict(theta_hat[None, :])[0] - fit.predict(points), 0.0)


def adjust_weights(table, max_iter=MAX_ITER):
    """Shrink weights of low-likelihood points until the cubic test is in the mid band.

    Weights become ``w_m exp(-(q2(theta_hat) - q2(theta_m)) / g)`` using the
    most recent quadratic fit ``q2`` and its maximizer.  The loop stops once
    the cubic p-value lies in ``[0.01, 0.3]``.  When the unadjusted fit
    already gives a p-value above 0.3 no adjustment is needed and the
    original weights are returned with ``g = inf``.
    """
    w0 = table.weights
    fit = fit_quadratic(table)
    theta_hat = _center(fit, table.thetas)
    p = cubic_pvalue(table, w0)
    g = math.inf
    w = w0
    if p >= P_LOW:
        return AdjustResult(w0, g, p, 1, True, fit, theta_hat)
    last_error = None
    for it in range(1, max_iter + 1):
        if p < P_LOW:
            if math.isinf(g):
                g = float(_drop(fit, theta_hat, table.thetas).max())
                g = g if g > 0 else 1.0
            else:
                g /= SHRINK
        elif p > P_HIGH:
            g *= GROW
        else:
            return AdjustResult(w, g, p, it, True, fit, theta_hat)
        w_try = w0 * np.exp(-_drop(fit, theta_hat, table.thetas) / g)
        w_try = np.maximum(w_try, w0 * 1e-300)
        try:
            t_try = table.with_weights(w_try)
            fit_try = fit_quadratic(t_try)
            p_try = cubic_pvalue(table, w_try)
        except (RankDeficiencyError, ValueError) as exc:
            # too aggressive: too few effective points remain
            last_error = exc
            p = 1.0
            continue
        w, fit, p = w_try, fit_try, p_try
        theta_hat = _center(fit, table.thetas)
        last_error = None
    if last_error is not None and w is w0:
        raise RuntimeError(f"weight adjustment failed to produce a usable fit: {last_error}")
    return AdjustResult(w, g, p, max_iter, P_LOW <= p <= P_HIGH, fit, theta_hat)


def mesle_jacobian(fit):
    """Jacobian of ``-c^{-1} b / 2`` with respect to ``(a, b, vech(c))``, shape (d, p)."""
    d = fit.d
    cinv = np.linalg.inv(fit.c)
    u = cinv @ fit.b
    J = np.zeros((d, n_quadratic_features(d)))
    J[:, 1:1 + d] = -0.5 * cinv
    for k in range(n_vech(d)):
        e = np.zeros(n_vech(d))
        e[k] = 1.0
        J[:, 1 + d + k] = 0.5 * cinv @ unvech(e) @ u
    return J


def stv(table, adjusted_weights, fit, candidate, candidate_weight):
    """Scaled total variance after adding ``candidate`` with ``candidate_weight``.

    Returns ``+inf`` when the augmented information matrix is singular.
    """
    if not np.all(np.linalg.eigvalsh(fit.c) < 0):
        raise NoInteriorMaximumError("STV needs a negative definite fitted curvature")
    X = design_matrix(table.thetas)
    w = np.asarray(adjusted_weights, dtype=float)
    x = quad_features(np.atleast_1d(np.asarray(candidate, dtype=float)))
    info = X.T @ (X * w[:, None]) + candidate_weight * np.outer(x, x)
    J = mesle_jacobian(fit)
    try:
        cov = J @ np.linalg.solve(info, J.T)
    except np.linalg.LinAlgError:
        return math.inf
    if np.linalg.cond(info) > 1e15:
        return math.inf
    return float(np.trace(-np.linalg.solve(fit.c, cov)))


def candidate_weight(fit, theta_hat, g, base_weight, candidate):
    """Weight for a new point by the same exponential discount as the adjustment."""
    if math.isinf(g):
        return float(base_weight)
    drop = _drop(fit, np.asarray(theta_hat, dtype=float), np.atleast_2d(candidate))[0]
    return float(base_weight * math.exp(-drop / g))


@dataclass(frozen=True)
class DesignResult:
    point: np.ndarray
    stv: float
    candidate_weight: float
    adjust: AdjustResult
    bounds: np.ndarray

    def to_dict(self):
        return {
            "point": [float(v) for v in self.point],
            "stv": float(self.stv),
            "candidate_weight": float(self.candidate_weight),
            "adjust": self.adjust.to_dict(),
            "bounds": self.bounds.tolist(),
        }


def _starts(theta_hat, h, lo, hi):
    d = theta_hat.size
    if d == 1:
        offsets = np.array([[1.5], [-1.5], [0.75], [-0.75]])
    else:
        alt = np.where(np.arange(d) % 2 == 0, 1.0, -1.0)
        offsets = 1.5 * np.stack([np.ones(d), -np.ones(d), alt, -alt])
    pts = np.vstack([theta_hat, theta_hat + offsets * h])
    return np.clip(pts, lo, hi)


def opt_design(table, bound_factor=3.0, return_info=False, bounds=None):
    """Propose the next simulation point by minimizing STV.

    Runs :func:`adjust_weights`, then a bounded quasi-Newton search from the
    fitted maximizer and four perturbations of it.  The search box is the
    design's midrange plus or minus ``bound_factor`` half-widths per axis,
    intersected with the parameter domain ``bounds`` (shape (d, 2), infinite
    entries allowed) when given.
    """
    adj = adjust_weights(table)
    fit = adj.fit if adj.fit is not None else fit_quadratic(table.with_weights(adj.adjusted_weights))
    theta_hat = mesle_point(fit)
    base = float(np.mean(table.weights))
    lo_d, hi_d = table.thetas.min(axis=0), table.thetas.max(axis=0)
    h = np.where(hi_d > lo_d, 0.5 * (hi_d - lo_d), 1.0)
    mid = 0.5 * (lo_d + hi_d)
    lo, hi = mid - bound_factor * h, mid + bound_factor * h
    if bounds is not None:
        dom = np.asarray(bounds, dtype=float).reshape(table.d, 2)
        lo, hi = np.maximum(lo, dom[:, 0]), np.minimum(hi, dom[:, 1])
        if np.any(lo >= hi):
            raise ValueError("parameter domain does not overlap the search box")
    bounds = np.column_stack([lo, hi])

    def objective(theta):
        wc = candidate_weight(fit, theta_hat, adj.g_final, base, theta)
        val = stv(table, adj.adjusted_weights, fit, theta, wc)
        return val if math.isfinite(val) else 1e300

    best, errors = None, []
    for x0 in _starts(np.clip(theta_hat, lo, hi), h, lo, hi):
        try:
            res = optimize.minimize(objective, x0, method="L-BFGS-B", bounds=bounds,
                                    options={"ftol": 1e-12, "gtol": 1e-10})
        except (ValueError, np.linalg.LinAlgError) as exc:
            errors.append(str(exc))
            continue
        if np.isfinite(res.fun) and res.fun < 1e300 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise RuntimeError(f"design optimization failed from every start: {errors}")
    point = np.asarray(best.x, dtype=float)
    out = DesignResult(point, float(best.fun), candidate_weight(fit, theta_hat, adj.g_final, base, point), adj, bounds)
    return out if return_info else point
