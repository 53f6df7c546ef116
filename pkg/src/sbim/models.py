"""Reference models with exact or brute-force likelihood oracles.

Parameters passed to the particle-filter interface are always in the
coordinates the inference runs in; :class:`StoVol` works on
``(logit kappa, log tau)``.
"""
import math
import warnings

import numpy as np
from scipy import linalg, stats
from scipy.special import expit, gammaln, logit, xlogy

from .pfilter import PompModel

__all__ = [
    "GammaPoisson",
    "LinearGaussianAR",
    "StoVol",
    "GaussianLocation",
    "MeaslesSEIR",
    "gp_simulate_loglik",
    "gp_exact_loglik",
    "kalman_loglik",
    "lgss_as_pomp",
    "stovol_as_pomp",
    "MODELS",
    "get_model",
]


class GammaPoisson:
    """Gamma latent rates with conditionally independent Poisson counts.

    ``X_i ~ Gamma(shape=gamma_shape, rate=lam)`` so that ``E[X_i] = gamma_shape / lam``
    and ``Y_i | X_i ~ Poisson(X_i)``.
    """

    d = 1
    name = "gp"

    def __init__(self, gamma_shape=1.0):
        if not gamma_shape > 0:
            raise ValueError("gamma_shape must be positive")
        self.gamma_shape = float(gamma_shape)

    def simulate_data(self, lam, n, rng):
        x = rng.gamma(self.gamma_shape, 1.0 / lam, size=n)
        return rng.poisson(x)

    def simulate_loglik(self, y, lam, rng, per_obs=False):
        """Simulated log-likelihoods at each rate in ``lam``.

        Returns totals of shape (M,) and, with ``per_obs``, the (M, n)
        matrix of per-observation terms ``log Poisson(y_i | X_i)``.
        """
        y = np.asarray(y)
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if np.any(lam <= 0):
            raise ValueError("lam must be positive")
        x = rng.gamma(self.gamma_shape, 1.0, size=(lam.size, y.size)) / lam[:, None]
        terms = xlogy(y, x) - x - gammaln(y + 1.0)
        total = terms.sum(axis=1)
        return (total, terms) if per_obs else total

    def exact_loglik(self, y, lam, per_obs=False):
        """Negative-binomial marginal log-likelihood."""
        lam = float(lam)
        if lam <= 0:
            raise ValueError("lam must be positive")
        terms = stats.nbinom.logpmf(np.asarray(y), self.gamma_shape, lam / (1.0 + lam))
        return terms if per_obs else float(terms.sum())

    def mesle(self, y):
        """Closed-form maximizer of the expected simulated log-likelihood."""
        return len(y) * self.gamma_shape / float(np.sum(y))


def gp_simulate_loglik(model, y, lam, rng):
    total, terms = model.simulate_loglik(y, lam, rng, per_obs=True)
    return total, terms


def gp_exact_loglik(model, y, lam):
    return model.exact_loglik(y, lam)


def _chol(m, what):
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"{what} is not positive definite") from exc


class LinearGaussianAR(PompModel):
    """Multivariate AR(1) observed with Gaussian noise.

    ``X_i = A X_{i-1} + v_i``, ``Y_i = X_i + e_i`` where ``A`` has diagonal
    ``diag`` and every off-diagonal entry equal to the scalar parameter.
    The chain starts in its stationary law when ``A`` is stable, and at
    ``X_0 = 0`` otherwise.
    """

    d = 1
    name = "lgss"

    def __init__(self, dim=10, diag=-0.3, process_cov=None, meas_cov=None):
        self.dim = int(dim)
        self.diag = float(diag)
        k = self.dim
        self.process_cov = np.eye(k) if process_cov is None else np.asarray(process_cov, dtype=float)
        self.meas_cov = np.eye(k) if meas_cov is None else np.asarray(meas_cov, dtype=float)
        self._q_chol = _chol(self.process_cov, "process covariance")
        self._r_chol = _chol(self.meas_cov, "measurement covariance")
        self._r_logdet = 2.0 * np.log(np.diag(self._r_chol)).sum()

    def transition(self, theta):
        theta = float(np.ravel(theta)[0])
        A = np.full((self.dim, self.dim), theta)
        np.fill_diagonal(A, self.diag)
        return A

    def initial_cov(self, theta):
        A = self.transition(theta)
        if np.max(np.abs(np.linalg.eigvals(A))) >= 1:
            warnings.warn("transition matrix is not stable; starting from X_0 = 0", RuntimeWarning)
            return self.process_cov.copy()
        P = linalg.solve_discrete_lyapunov(A, self.process_cov)
        return 0.5 * (P + P.T)

    def simulate(self, theta, n, rng):
        """Return ``(y, x)`` arrays of shape (n, dim)."""
        A = self.transition(theta)
        k = self.dim
        x = np.empty((n, k))
        x[0] = _chol(self.initial_cov(theta), "initial covariance") @ rng.standard_normal(k)
        for i in range(1, n):
            x[i] = A @ x[i - 1] + self._q_chol @ rng.standard_normal(k)
        y = x + rng.standard_normal((n, k)) @ self._r_chol.T
        return y, x

    def kalman_loglik(self, y, theta):
        """Exact log-likelihood by the Kalman prediction-update recursion."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        A = self.transition(theta)
        m = np.zeros(self.dim)
        P = self.initial_cov(theta)
        total = 0.0
        k = self.dim
        for i in range(y.shape[0]):
            if i > 0:
                m = A @ m
                P = A @ P @ A.T + self.process_cov
            S = P + self.meas_cov
            try:
                cf = linalg.cho_factor(S, lower=True)
            except linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError(f"innovation covariance not positive definite at step {i}") from exc
            e = y[i] - m
            sol = linalg.cho_solve(cf, e)
            logdet = 2.0 * np.log(np.diag(cf[0])).sum()
            total -= 0.5 * (k * math.log(2 * math.pi) + logdet + e @ sol)
            K = linalg.cho_solve(cf, P).T  # P S^{-1}
            m = m + K @ e
            P = P - K @ P
            P = 0.5 * (P + P.T)
        return total

    def init_state(self, theta, J, rng):
        theta = np.atleast_2d(theta)
        L = np.stack([_chol(self.initial_cov(t), "initial covariance") for t in theta])
        z = rng.standard_normal((theta.shape[0], J, self.dim))
        return np.einsum("bkl,bjl->bjk", L, z)

    def step_state(self, x, i, theta, rng):
        A = np.stack([self.transition(t) for t in np.atleast_2d(theta)])
        noise = rng.standard_normal(x.shape) @ self._q_chol.T
        return np.einsum("bkl,bjl->bjk", A, x) + noise

    def meas_logdensity(self, y_i, x, i, theta):
        e = np.asarray(y_i, dtype=float) - x
        z = linalg.solve_triangular(self._r_chol, e.reshape(-1, self.dim).T, lower=True)
        quad = np.sum(z * z, axis=0).reshape(x.shape[:2])
        return -0.5 * (self.dim * math.log(2 * math.pi) + self._r_logdet + quad)


def kalman_loglik(model, y, theta_offdiag):
    return model.kalman_loglik(y, theta_offdiag)


def lgss_as_pomp(model):
    return model


class StoVol(PompModel):
    """Stochastic volatility with Student-t returns.

    ``r_i = exp(s_i) W_i`` with ``W_i ~ t_5``; ``s_1 = tau V_1`` and
    ``s_i = kappa s_{i-1} + tau sqrt(1 - kappa^2) V_i``.  Filter parameters
    are ``(logit kappa, log tau)``, so ``kappa`` is restricted to (0, 1).
    """

    d = 2
    name = "stovol"
    t_dof = 5

    def __init__(self):
        nu = self.t_dof
        self._logc = gammaln(0.5 * (nu + 1)) - gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi)

    @staticmethod
    def to_natural(theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return expit(theta[:, 0]), np.exp(theta[:, 1])

    @staticmethod
    def to_working(kappa, tau):
        kappa = np.asarray(kappa, dtype=float)
        tau = np.asarray(tau, dtype=float)
        if np.any((kappa <= 0) | (kappa >= 1)) or np.any(tau <= 0):
            raise ValueError("need 0 < kappa < 1 and tau > 0")
        return np.stack([logit(kappa), np.log(tau)], axis=-1)

    def simulate(self, kappa, tau, n, rng):
        """Return ``(r, s)`` for natural parameters ``kappa, tau``."""
        if not (-1 < kappa < 1 and tau > 0):
            raise ValueError("need -1 < kappa < 1 and tau > 0")
        s = np.empty(n)
        s[0] = tau * rng.standard_normal()
        sd = tau * math.sqrt(1 - kappa ** 2)
        for i in range(1, n):
            s[i] = kappa * s[i - 1] + sd * rng.standard_normal()
        r = np.exp(s) * rng.standard_t(self.t_dof, size=n)
        return r, s

    def log_t(self, z):
        nu = self.t_dof
        return self._logc - 0.5 * (nu + 1) * np.log1p(z * z / nu)

    def init_state(self, theta, J, rng):
        _, tau = self.to_natural(theta)
        return tau[:, None] * rng.standard_normal((tau.size, J))

    def step_state(self, x, i, theta, rng):
        kappa, tau = self.to_natural(theta)
        sd = tau * np.sqrt(1.0 - kappa ** 2)
        return kappa[:, None] * x + sd[:, None] * rng.standard_normal(x.shape)

    def meas_logdensity(self, y_i, x, i, theta):
        return self.log_t(y_i * np.exp(-x)) - x


def stovol_as_pomp(kappa=None, tau=None):
    return StoVol()


class GaussianLocation:
    """Gaussian location model with a noisy latent layer.

    ``X_i ~ N(theta, tau^2)`` and ``Y_i | X_i ~ N(X_i, 1)``.  With a flat
    prior the posterior is ``N(mean(y), (tau^2 + 1) / n)``.
    """

    d = 1
    name = "gauss"

    def __init__(self, tau=30.0):
        self.tau = float(tau)

    def simulate_data(self, theta, n, rng):
        return theta + math.sqrt(self.tau ** 2 + 1.0) * rng.standard_normal(n)

    def simulate_loglik(self, y, theta, rng):
        """Simulated log-likelihoods at each ``theta`` in one draw each.

        The sum of squared residuals is a scaled noncentral chi-square, so
        one draw replaces ``n`` latent normals.
        """
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        shape = theta.shape
        t = theta.reshape(-1)
        n = y.size
        ybar, ss = y.mean(), np.sum((y - y.mean()) ** 2)
        nonc = (ss + n * (t - ybar) ** 2) / self.tau ** 2
        q = rng.noncentral_chisquare(n, nonc) if t.size else np.empty(0)
        out = -0.5 * self.tau ** 2 * q - 0.5 * n * math.log(2 * math.pi)
        return out.reshape(shape)

    def simulate_loglik_direct(self, y, theta, rng):
        x = theta + self.tau * rng.standard_normal(len(y))
        return -0.5 * np.sum((x - y) ** 2) - 0.5 * len(y) * math.log(2 * math.pi)

    def exact_loglik(self, y, theta):
        return float(stats.norm.logpdf(y, theta, math.sqrt(self.tau ** 2 + 1.0)).sum())

    def posterior_var(self, n):
        return (self.tau ** 2 + 1.0) / n


class MeaslesSEIR:
    """Placeholder for an SEIR measles transmission model.

    Model details such as compartments, rates and the observation process are
    not given, so no simulator is provided; the class marks where one would
    plug into the toolkit.
    """

    name = "seir"

    def __init__(self, *args, **kwargs):
        raise NotImplementedError("the measles SEIR model is not implemented")


MODELS = {
    "gp": GammaPoisson,
    "lgss": LinearGaussianAR,
    "stovol": StoVol,
    "gauss": GaussianLocation,
    "seir": MeaslesSEIR,
}


def get_model(name, **kwargs):
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(**kwargs)
