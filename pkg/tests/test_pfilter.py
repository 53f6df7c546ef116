import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats
from scipy.special import logsumexp

from sbim.models import LinearGaussianAR
from sbim.pfilter import PompModel, bpf_run, bpf_run_many, logmeanexp, multinomial_resample


@settings(max_examples=100, deadline=None)
@given(v=arrays(float, st.integers(1, 30), elements=st.floats(-700, 700)))
def test_logmeanexp_matches_logsumexp(v):
    assert logmeanexp(v) == pytest.approx(logsumexp(v) - math.log(v.size), rel=1e-12, abs=1e-12)


def test_logmeanexp_edge_cases():
    assert logmeanexp([-np.inf, -np.inf]) == -np.inf
    assert logmeanexp([-np.inf, 0.0]) == pytest.approx(math.log(0.5))
    np.testing.assert_allclose(logmeanexp(np.array([[0.0, 0.0], [1.0, -np.inf]]), axis=1), [0.0, 1 - math.log(2)])
    with pytest.raises(ValueError):
        logmeanexp([])


def test_resample_frequencies(rng):
    w = np.array([0.1, 0.2, 0.3, 0.4])
    idx = multinomial_resample(w, rng, size=20000)
    counts = np.bincount(idx, minlength=4)
    assert stats.chisquare(counts, 20000 * w).pvalue > 1e-3


def test_resample_rows_are_independent_distributions(rng):
    w = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    idx = multinomial_resample(w, rng)
    assert np.all(idx[0] == 0) and np.all(idx[1] == 2)


def test_resample_validation(rng):
    with pytest.raises(ValueError):
        multinomial_resample([0.5, 0.6], rng)
    with pytest.raises(ValueError):
        multinomial_resample([1.5, -0.5], rng)
    with pytest.raises(ValueError):
        multinomial_resample([np.nan, 1.0], rng)


def test_single_step_single_particle_oracle():
    model = LinearGaussianAR(dim=2)
    y = np.array([[0.3, -0.2]])
    res = bpf_run(model, y, [0.1], 1, np.random.default_rng(4))
    x = model.init_state(np.array([[0.1]]), 1, np.random.default_rng(4))[0, 0]
    expected = stats.multivariate_normal(x, np.eye(2)).logpdf(y[0])
    assert res.total_loglik == pytest.approx(expected, rel=1e-12)
    assert res.cond_loglik.shape == (1,) and res.n_particles == 1 and res.degenerate_at is None


def test_reproducible_under_seed():
    model = LinearGaussianAR(dim=2)
    y, _ = model.simulate(0.1, 20, np.random.default_rng(0))
    a = bpf_run(model, y, [0.1], 50, np.random.default_rng(9))
    b = bpf_run(model, y, [0.1], 50, np.random.default_rng(9))
    np.testing.assert_array_equal(a.cond_loglik, b.cond_loglik)


def test_unbiased_on_likelihood_scale():
    model = LinearGaussianAR(dim=1)
    y, _ = model.simulate(0.0, 10, np.random.default_rng(1))
    exact = model.kalman_loglik(y, [0.0])
    ll = bpf_run_many(model, y, np.zeros((2000, 1)), 20, np.random.default_rng(2)).sum(axis=1)
    ratio = np.exp(ll - exact)
    assert abs(ratio.mean() - 1) < 4 * ratio.std(ddof=1) / math.sqrt(ratio.size)


def test_log_estimate_variance_scales_inversely_with_particles():
    model = LinearGaussianAR(dim=1)
    y, _ = model.simulate(0.0, 20, np.random.default_rng(1))
    rng = np.random.default_rng(3)
    v = [bpf_run_many(model, y, np.zeros((400, 1)), J, rng).sum(axis=1).var() for J in (50, 200)]
    assert 2.5 < v[0] / v[1] < 6.5


class _Blackout(PompModel):
    # observation 2 is impossible under every particle
    def init_state(self, theta, J, rng):
        return rng.standard_normal((theta.shape[0], J))

    def step_state(self, x, i, theta, rng):
        return x + rng.standard_normal(x.shape)

    def meas_logdensity(self, y_i, x, i, theta):
        return np.full(x.shape, -np.inf) if i == 2 else -0.5 * (y_i - x) ** 2


def test_degenerate_run(rng):
    res = bpf_run(_Blackout(), np.zeros(5), [0.0], 10, rng)
    assert res.degenerate_at == 2
    assert res.total_loglik == -np.inf
    assert np.isfinite(res.cond_loglik[:2]).all()
    assert res.cond_loglik[2] == -np.inf and np.isnan(res.cond_loglik[3:]).all()


def test_input_validation(rng):
    model = LinearGaussianAR(dim=1)
    with pytest.raises(ValueError):
        bpf_run(model, np.zeros((3, 1)), [0.0], 0, rng)
    with pytest.raises(ValueError):
        bpf_run(model, np.zeros((0, 1)), [0.0], 5, rng)
