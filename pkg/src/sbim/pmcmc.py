"""Pseudo-marginal Metropolis-Hastings with a Gaussian random-walk proposal.

The likelihood estimate attached to the current state is carried along and
reused until a proposal is accepted; it is never refreshed.
"""
from dataclasses import dataclass

import numpy as np

__all__ = ["PmcmcChain", "PmcmcBatch", "pmcmc_run", "pmcmc_run_many", "running_estimates", "ess"]

BURN_IN = 100


@dataclass(frozen=True)
class PmcmcChain:
    """A single chain.  ``states[m]`` carries the estimate ``logliks[m]``."""

    states: np.ndarray
    logliks: np.ndarray
    accepts: np.ndarray
    burn_in: int = BURN_IN

    @property
    def acceptance_rate(self):
        return float(self.accepts[1:].mean()) if self.accepts.size > 1 else 0.0


@dataclass(frozen=True)
class PmcmcBatch:
    """Running means of many independent chains at fixed checkpoints.

    ``estimates[k]`` has shape (C, d) and averages the first
    ``checkpoints[k]`` post-burn-in states of each chain; ``n_accepts[k]``
    counts accepted moves up to the same point.
    """

    checkpoints: np.ndarray
    estimates: np.ndarray
    n_accepts: np.ndarray
    burn_in: int


def _flat(log_prior):
    return log_prior if log_prior is not None else (lambda theta: np.zeros(np.atleast_2d(theta).shape[0]))


def _step(theta, ll, lp, sim_loglik, log_prior, sd, rng):
    prop = theta + sd * rng.standard_normal(theta.shape)
    lp_prop = np.asarray(log_prior(prop), dtype=float)
    ll_prop = np.asarray(sim_loglik(prop), dtype=float)
    with np.errstate(invalid="ignore"):
        log_ratio = ll_prop + lp_prop - ll - lp
    log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
    # log u <= 0, so a ratio of at least one always accepts
    acc = np.log(rng.random(theta.shape[0])) < log_ratio
    acc |= log_ratio >= 0
    theta = np.where(acc[:, None], prop, theta)
    ll = np.where(acc, ll_prop, ll)
    lp = np.where(acc, lp_prop, lp)
    return theta, ll, lp, acc


def _start(init, sim_loglik, log_prior):
    init = np.atleast_2d(np.asarray(init, dtype=float))
    ll = np.asarray(sim_loglik(init), dtype=float).reshape(-1)
    lp = np.asarray(log_prior(init), dtype=float).reshape(-1)
    if not np.all(np.isfinite(ll)):
        raise ValueError("initial simulated log-likelihood is not finite")
    if not np.all(np.isfinite(lp)):
        raise ValueError("initial state has zero prior density")
    return init, ll, lp


def pmcmc_run(sim_loglik, log_prior, proposal_sd, init, M, rng, burn_in=BURN_IN):
    """Run one pseudo-marginal chain of ``M`` states (the initial state included).

    Parameters
    ----------
    sim_loglik : callable
        Maps an array of shape (1, d) to one simulated log-likelihood per row.
    log_prior : callable or None
        Same signature; ``None`` means a flat prior.
    proposal_sd : float or array of length d
        Random-walk standard deviations.
    """
    M = int(M)
    if M < 1:
        raise ValueError("M must be at least 1")
    log_prior = _flat(log_prior)
    theta, ll, lp = _start(init, sim_loglik, log_prior)
    if theta.shape[0] != 1:
        raise ValueError("pmcmc_run takes a single initial state; use pmcmc_run_many")
    sd = np.broadcast_to(np.asarray(proposal_sd, dtype=float), theta.shape[1:])
    states = np.empty((M, theta.shape[1]))
    logliks = np.empty(M)
    accepts = np.zeros(M, dtype=bool)
    states[0], logliks[0] = theta[0], ll[0]
    for m in range(1, M):
        theta, ll, lp, acc = _step(theta, ll, lp, sim_loglik, log_prior, sd, rng)
        states[m], logliks[m], accepts[m] = theta[0], ll[0], acc[0]
    return PmcmcChain(states=states, logliks=logliks, accepts=accepts, burn_in=int(burn_in))


def pmcmc_run_many(sim_loglik, log_prior, proposal_sd, init, checkpoints, rng, burn_in=BURN_IN):
    """Advance independent chains together and record running means.

    ``init`` has one row per chain and ``sim_loglik`` maps (C, d) to (C,).
    Chains run for ``burn_in + max(checkpoints)`` states in total.
    """
    checkpoints = np.sort(np.asarray(checkpoints, dtype=int))
    if checkpoints[0] < 1:
        raise ValueError("checkpoints must be positive")
    log_prior = _flat(log_prior)
    theta, ll, lp = _start(init, sim_loglik, log_prior)
    sd = np.broadcast_to(np.asarray(proposal_sd, dtype=float), theta.shape[1:])
    C, d = theta.shape
    total = burn_in + int(checkpoints[-1])
    running = np.zeros((C, d))
    estimates = np.empty((checkpoints.size, C, d))
    n_acc = np.zeros(C, dtype=int)
    n_accepts = np.empty((checkpoints.size, C), dtype=int)
    k = 0
    for m in range(total):
        if m > 0:
            theta, ll, lp, acc = _step(theta, ll, lp, sim_loglik, log_prior, sd, rng)
            n_acc += acc
        if m >= burn_in:
            running += theta
            kept = m - burn_in + 1
            if kept == checkpoints[k]:
                estimates[k] = running / kept
                n_accepts[k] = n_acc
                k += 1
    return PmcmcBatch(checkpoints=checkpoints, estimates=estimates, n_accepts=n_accepts, burn_in=int(burn_in))


def running_estimates(chain, checkpoints):
    """Means of the first ``m`` post-burn-in states for each ``m`` in ``checkpoints``."""
    post = chain.states[chain.burn_in:]
    out = []
    for m in checkpoints:
        m = int(m)
        if m < 1:
            raise ValueError("checkpoints must be positive")
        if m > post.shape[0]:
            raise ValueError(f"checkpoint {m} exceeds the {post.shape[0]} post-burn-in states")
        out.append(post[:m].mean(axis=0))
    return out


def ess(estimator_variance, posterior_variance):
    """Posterior variance divided by the Monte Carlo variance of an estimator."""
    if not (estimator_variance > 0 and posterior_variance > 0):
        raise ValueError("variances must be positive")
    return posterior_variance / estimator_variance
