"""Shared experiment plumbing used by the command line and the acceptance suite.

Parameters are handled in two coordinate systems: ``natural`` values used to
generate data and ``working`` coordinates in which tables are built and
inference runs.  Only the stochastic volatility model distinguishes them.
"""
import math

import numpy as np

from .k1 import block_sums, default_blocks, estimate_k1
from .mesle import mesle_ci_1d, mesle_confregion, mesle_ht
from .metamodel import NoInteriorMaximumError, SimLogLikTable, fit_quadratic, mesle_point
from .models import GammaPoisson, GaussianLocation, LinearGaussianAR, StoVol, get_model
from .pfilter import PompModel, bpf_run_many
from .rng import derive_rng
from .pmcmc import ess, pmcmc_run, pmcmc_run_many
from .proxy import proxy_fit
from .autotune import adjust_weights

__all__ = [
    "DEFAULT_TRUTH",
    "working_truth",
    "simulate_data",
    "exact_loglik",
    "sim_per_obs",
    "build_table",
    "grid_design",
    "resolve_k1",
    "infer",
    "gauss_pmcmc_ess",
    "gauss_metamodel_ess",
    "gauss_coverage",
    "slice_coverage",
]

DEFAULT_TRUTH = {"gp": [1.0], "lgss": [0.02], "stovol": [0.8, 1.0], "gauss": [0.0]}


def working_truth(model, truth):
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if isinstance(model, StoVol):
        return model.to_working(truth[0], truth[1])
    return truth


def simulate_data(model, truth, n, rng):
    """Observations at natural parameter ``truth``."""
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if isinstance(model, GammaPoisson):
        return model.simulate_data(truth[0], n, rng)
    if isinstance(model, LinearGaussianAR):
        return model.simulate(truth[0], n, rng)[0]
    if isinstance(model, StoVol):
        return model.simulate(truth[0], truth[1], n, rng)[0]
    if isinstance(model, GaussianLocation):
        return model.simulate_data(truth[0], n, rng)
    raise ValueError(f"no data simulator for {type(model).__name__}")


def exact_loglik(model, y, theta):
    """Exact log-likelihood at a natural parameter, or ``None`` when unavailable."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if isinstance(model, GammaPoisson):
        return model.exact_loglik(y, theta[0])
    if isinstance(model, LinearGaussianAR):
        return model.kalman_loglik(y, theta[0])
    if isinstance(model, GaussianLocation):
        return model.exact_loglik(y, theta[0])
    return None


def sim_per_obs(model, y, thetas, rng, particles=100):
    """Per-observation simulated log-likelihoods, shape (M, n), at working ``thetas``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if isinstance(model, GammaPoisson):
        return model.simulate_loglik(y, thetas[:, 0], rng, per_obs=True)[1]
    if isinstance(model, GaussianLocation):
        y = np.asarray(y, dtype=float)
        x = thetas[:, :1] + model.tau * rng.standard_normal((thetas.shape[0], y.size))
        return -0.5 * (x - y) ** 2 - 0.5 * math.log(2 * math.pi)
    if isinstance(model, PompModel):
        return bpf_run_many(model, y, thetas, particles, rng)
    raise ValueError(f"cannot simulate log-likelihoods for {type(model).__name__}")


def build_table(model, y, thetas, rng, particles=100, n_blocks="auto"):
    """Simulate at each working point and assemble a table with block sums.

    Returns ``(table, n_dropped)``; rows with a non-finite log-likelihood
    (particle filter failure) are dropped.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    per_obs = sim_per_obs(model, y, thetas, rng, particles)
    n = per_obs.shape[1]
    part = default_blocks(n, n_blocks)
    totals = per_obs.sum(axis=1)
    ok = np.isfinite(totals)
    # pomp models carry precision weight J; the rest unit weight
    w = float(particles) if isinstance(model, PompModel) else 1.0
    blocks = block_sums(per_obs[ok], part)
    table = SimLogLikTable(thetas[ok], totals[ok], np.full(int(ok.sum()), w), n, blocks, part.sizes)
    return table, int((~ok).sum())


def grid_design(center, halfwidth, points):
    """Equally spaced design: a line for one parameter, a product grid otherwise.

    For ``d >= 2`` each axis gets ``ceil(points ** (1/d))`` values.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    h = np.broadcast_to(np.asarray(halfwidth, dtype=float), center.shape)
    d = center.size
    per_axis = int(points) if d == 1 else int(math.ceil(points ** (1.0 / d) - 1e-9))
    axes = [np.linspace(c - hh, c + hh, per_axis) for c, hh in zip(center, h)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def resolve_k1(table, k1):
    """``(matrix, source)`` from ``"auto"``, a scalar or a matrix."""
    if isinstance(k1, str) and k1 == "auto":
        return estimate_k1(table).matrix, "estimated"
    k1 = np.asarray(k1, dtype=float)
    if k1.ndim == 0:
        k1 = k1 * np.eye(table.d)
    return np.atleast_2d(k1), "user"


def infer(table, test="proxy", alpha=0.05, null=None, k1="auto", auto_adjust=False, grid=None):
    """Fit, then test a null value and/or build a confidence set.

    Returns a plain dict; ``ci`` holds a confidence set for ``d = 1`` and a
    list of accepted grid points for ``d >= 2`` when ``grid`` is given.
    """
    out = {"test_type": test, "alpha": float(alpha), "M": table.M, "d": table.d}
    if auto_adjust:
        adj = adjust_weights(table)
        table = table.with_weights(adj.adjusted_weights)
        out["adjust"] = adj.to_dict()
    fit = fit_quadratic(table)
    out["fit"] = fit.to_dict()
    try:
        out["mesle"] = mesle_point(fit)
    except NoInteriorMaximumError:
        out["mesle"] = None
    if test == "mesle":
        if null is not None:
            out["test"] = mesle_ht(fit, null).to_dict()
        if table.d == 1:
            out["ci"] = mesle_ci_1d(fit, alpha).to_dict()
        elif grid is not None:
            out["region"] = [p for p, keep in mesle_confregion(fit, alpha, grid) if keep]
        return out
    if test != "proxy":
        raise ValueError(f"unknown test type {test!r}")
    k1m, source = resolve_k1(table, k1)
    pf = proxy_fit(table, k1m, fit.sigma2, k1_source=source, require_concave=False)
    out.update(pf.summary())
    if null is not None:
        out["test"] = pf.test(null).to_dict()
    if table.d == 1:
        out["ci"] = pf.confidence_set(alpha).to_dict()
    elif grid is not None:
        out["region"] = [p for p, keep in pf.confidence_region(alpha, grid) if keep]
    return out


# Gaussian location benchmark (pseudo-marginal MCMC versus metamodel)

def gauss_pmcmc_ess(y, checkpoints, replicates, rng, tau=30.0, proposal_sd=3.0, burn_in=100):
    """PM-MCMC ESS at each checkpoint across independent chains on fixed data.

    Chains start from independent exact posterior draws.
    """
    model = GaussianLocation(tau)
    n = len(y)
    pv = model.posterior_var(n)
    init = (np.mean(y) + math.sqrt(pv) * rng.standard_normal(replicates))[:, None]
    batch = pmcmc_run_many(lambda th: model.simulate_loglik(y, th[:, 0], rng), None, proposal_sd,
                           init, checkpoints, rng, burn_in=burn_in)
    out = {}
    for k, m in enumerate(batch.checkpoints):
        v = float(np.var(batch.estimates[k, :, 0], ddof=1))
        out[int(m)] = {"ess": ess(v, pv) if v > 0 else math.inf, "estimator_var": v,
                       "mean_accepts": float(batch.n_accepts[k].mean())}
    return out


def gauss_metamodel_ess(y, sims, replicates, rng, tau=30.0, center=0.0, halfwidth=20.0):
    """Equivalent ESS of the fitted maximizer from ``M`` simulations on fixed data."""
    model = GaussianLocation(tau)
    pv = model.posterior_var(len(y))
    out = {}
    for M in sims:
        thetas = np.linspace(center - halfwidth, center + halfwidth, int(M))
        est = np.empty(replicates)
        for r in range(replicates):
            vals = model.simulate_loglik(y, thetas, rng)
            fit = fit_quadratic(SimLogLikTable(thetas, vals))
            try:
                est[r] = mesle_point(fit)[0]
            except NoInteriorMaximumError:
                est[r] = np.nan
        est = est[np.isfinite(est)]
        v = float(np.var(est, ddof=1))
        out[int(M)] = {"ess": ess(v, pv), "estimator_var": v, "n_failed": int(replicates - est.size)}
    return out


def gauss_coverage(ns, replicates, rng, tau=30.0, theta0=0.0, sims=1000, halfwidth=20.0, alpha=0.05):
    """Coverage and widths of metamodel CIs and PM-MCMC credible intervals across data sizes."""
    model = GaussianLocation(tau)
    from .distributions import norm_ppf

    z = norm_ppf(1 - alpha / 2)
    cov, widths = {}, {}
    for n in ns:
        meta_hits, mcmc_hits, meta_w, mcmc_w = 0, 0, [], []
        for _ in range(replicates):
            y = model.simulate_data(theta0, n, rng)
            thetas = np.linspace(theta0 - halfwidth, theta0 + halfwidth, sims)
            table, _ = build_table(model, y, thetas[:, None], rng)
            cs = infer(table, "proxy", alpha)["ci"]
            if cs["kind"] == "interval":
                lo, hi = cs["bounds"]
                meta_hits += lo < theta0 < hi
                meta_w.append(hi - lo)
            else:
                meta_hits += cs["kind"] == "full_line"
                meta_w.append(math.inf)
            pv = model.posterior_var(n)
            init = np.array([np.mean(y) + math.sqrt(pv) * rng.standard_normal()])
            chain = pmcmc_run(lambda th: model.simulate_loglik(y, th[:, 0], rng), None, 3.0, init,
                              100 + sims, rng)
            post = chain.states[chain.burn_in:, 0]
            lo, hi = np.quantile(post, [alpha / 2, 1 - alpha / 2])
            mcmc_hits += lo <= theta0 <= hi
            mcmc_w.append(hi - lo)
        cov[int(n)] = {"metamodel": meta_hits / replicates, "pmcmc": mcmc_hits / replicates,
                       "exact_width": 2 * z * math.sqrt(model.posterior_var(n))}
        widths[int(n)] = {"metamodel": meta_w, "pmcmc": mcmc_w}
    return cov, widths


def slice_coverage(model, truth, halfwidths, points, particles, n, replicates, seed, alphas=(0.05, 0.1, 0.2)):
    """Coverage of one-parameter proxy confidence sets along slices through the truth.

    For each replicate a new data set is simulated; for each parameter the
    design is ``points`` equally spaced working values within ``halfwidths[j]``
    of the truth, with the other parameters held at their true values.
    Returns a dict with ``coverage`` of shape (d, len(alphas)) and the
    per-replicate hit indicators.
    """
    truth_w = working_truth(model, truth)
    d = truth_w.size
    hits = np.zeros((replicates, d, len(alphas)), dtype=bool)
    dropped = 0
    for r in range(replicates):
        y = simulate_data(model, truth, n, derive_rng(seed, "data", 0, r))
        for j in range(d):
            thetas = np.tile(truth_w, (points, 1))
            thetas[:, j] = np.linspace(truth_w[j] - halfwidths[j], truth_w[j] + halfwidths[j], points)
            table, nd = build_table(model, y, thetas, derive_rng(seed, "simulate", j, r), particles)
            dropped += nd
            sliced = SimLogLikTable(table.thetas[:, j], table.values, table.weights, table.n_obs,
                                    table.per_block_values, table.block_sizes)
            for a, alpha in enumerate(alphas):
                cs = infer(sliced, "proxy", alpha)["ci"]
                lo, hi = (cs["bounds"] + [None, None])[:2]
                hits[r, j, a] = _covers(cs["kind"], lo, hi, truth_w[j])
    return {"coverage": hits.mean(axis=0), "hits": hits, "alphas": list(alphas), "degenerate_dropped": dropped}


def _covers(kind, lo, hi, x):
    if kind == "full_line":
        return True
    if kind == "empty":
        return False
    inside = lo < x < hi
    return inside if kind == "interval" else not inside
