"""Bootstrap particle filter for partially observed Markov process models.

Models only need to simulate the latent transition and evaluate the
measurement density.  All model methods act on a leading batch axis of
parameter points so that many independent filters advance together:

``init_state(theta, J, rng)``
    ``theta`` has shape (B, d); returns latent states of shape (B, J, ...).
``step_state(x, i, theta, rng)``
    Draws ``X_i`` given ``X_{i-1} = x``; same shape as ``x``.
``meas_logdensity(y_i, x, i, theta)``
    Log density of ``y_i`` given each particle; shape (B, J).
"""
from dataclasses import dataclass
import math

import numpy as np

__all__ = [
    "PompModel",
    "PFResult",
    "logmeanexp",
    "multinomial_resample",
    "bpf_run",
    "bpf_run_many",
]


class PompModel:
    """Base class documenting the simulator-only model interface."""

    d = 1

    def init_state(self, theta, J, rng):
        raise NotImplementedError

    def step_state(self, x, i, theta, rng):
        raise NotImplementedError

    def meas_logdensity(self, y_i, x, i, theta):
        raise NotImplementedError


@dataclass(frozen=True)
class PFResult:
    """Output of one filter run.

    ``cond_loglik[i]`` estimates ``log p(y_i | y_{1:i-1})``.  After a
    degenerate step (every particle with zero measurement density) the
    offending entry is ``-inf``, later entries are ``nan`` and
    ``total_loglik`` is ``-inf``.
    """

    cond_loglik: np.ndarray
    total_loglik: float
    n_particles: int
    degenerate_at: int = None


def logmeanexp(values, axis=None):
    """Numerically stable ``log(mean(exp(values)))``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("logmeanexp of an empty array")
    m = np.max(values, axis=axis, keepdims=True)
    finite = np.isfinite(m)
    shift = np.where(finite, m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.mean(np.exp(values - shift), axis=axis, keepdims=True)) + shift
    out = np.where(finite, out, m)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def multinomial_resample(weights, rng, size=None):
    """Draw ancestor indices from categorical ``weights``.

    ``weights`` is a probability vector of length J or a (B, J) array of
    row-wise probability vectors; returns integer indices of the same shape
    (or ``size`` draws per row).
    """
    w = np.asarray(weights, dtype=float)
    single = w.ndim == 1
    w2 = np.atleast_2d(w)
    if np.any(w2 < 0) or not np.all(np.isfinite(w2)):
        raise ValueError("weights must be finite and nonnegative")
    if np.any(np.abs(w2.sum(axis=1) - 1.0) > 1e-12 * w2.shape[1]):
        raise ValueError("weights must sum to one")
    idx = _resample_rows(w2, rng, w2.shape[1] if size is None else int(size))
    return idx[0] if single else idx


def _resample_rows(w, rng, J):
    # one searchsorted over row-offset cumulative sums
    B, K = w.shape
    cw = np.cumsum(w, axis=1)
    cw /= cw[:, -1:]
    cw[:, -1] = 1.0
    rows = np.arange(B)[:, None]
    u = rng.random((B, J))
    flat = (cw + rows).ravel()
    idx = np.searchsorted(flat, (u + rows).ravel(), side="right").reshape(B, J) - rows * K
    return np.clip(idx, 0, K - 1)


def bpf_run_many(model, y, thetas, J, rng):
    """Run independent bootstrap filters at each row of ``thetas``.

    Returns an array of shape (B, n) of conditional log-likelihood
    estimates, with the degeneracy convention of :class:`PFResult`.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    J = int(J)
    if J < 1:
        raise ValueError("need at least one particle")
    n = len(y)
    if n < 1:
        raise ValueError("need at least one observation")
    B = thetas.shape[0]
    out = np.empty((B, n))
    alive = np.ones(B, dtype=bool)
    logJ = math.log(J)
    x = model.init_state(thetas, J, rng)
    for i in range(n):
        if i > 0:
            x = model.step_state(x, i, thetas, rng)
        logw = model.meas_logdensity(y[i], x, i, thetas)
        m = np.max(logw, axis=1)
        ok = np.isfinite(m)
        shift = np.where(ok, m, 0.0)
        w = np.exp(logw - shift[:, None])
        s = w.sum(axis=1)
        with np.errstate(divide="ignore"):
            ll = np.log(s) + shift - logJ
        ll = np.where(ok, ll, -np.inf)
        out[:, i] = np.where(alive, ll, np.nan)
        alive &= ok
        # dead rows keep running on uniform weights; their values are masked
        w = np.where(ok[:, None], w, 1.0)
        anc = _resample_rows(w / w.sum(axis=1, keepdims=True), rng, J)
        x = np.take_along_axis(x, anc.reshape(anc.shape + (1,) * (x.ndim - 2)), axis=1)
    return out


def _result(cond, J):
    bad = np.flatnonzero(~np.isfinite(cond))
    if bad.size:
        return PFResult(cond, -math.inf, J, int(bad[0]))
    return PFResult(cond, float(cond.sum()), J, None)


def bpf_run(model, y, theta, J, rng):
    """Bootstrap particle filter at a single parameter point.

    Multinomial resampling happens at every step.  Results are
    deterministic given the state of ``rng``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cond = bpf_run_many(model, y, theta[None, :], J, rng)[0]
    return _result(cond, int(J))
