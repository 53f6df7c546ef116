"""Distribution functions used for p-values and critical values.

The F and chi-square laws are evaluated through the regularized incomplete
beta and gamma functions, computed by continued fractions (modified Lentz)
and power series.  Scalar cores operate on Python floats; the public
functions accept scalars or arrays.
"""
import math

import numpy as np

__all__ = [
    "betainc",
    "gammainc",
    "gammaincc",
    "f_cdf",
    "f_sf",
    "f_quantile",
    "chi2_cdf",
    "chi2_sf",
    "chi2_quantile",
    "norm_cdf",
    "norm_sf",
    "norm_ppf",
]

_EPS = 1e-16
_TINY = 1e-300
_MAXIT = 20000


def _check_df(*dfs):
    for df in dfs:
        if not (df > 0 and math.isfinite(df)):
            raise ValueError(f"degrees of freedom must be positive and finite, got {df!r}")


def _betacf(a, b, x):
    # continued fraction for I_x(a, b), modified Lentz
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _betainc_pair(a, b, x, y=None):
    """Return (I_x(a, b), 1 - I_x(a, b)) without cancellation.

    ``y`` is ``1 - x`` when the caller can form it more accurately.
    """
    y = 1.0 - x if y is None else y
    if x <= 0.0:
        return 0.0, 1.0
    if y <= 0.0:
        return 1.0, 0.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log(y))
    if x < (a + 1.0) / (a + b + 2.0):
        lower = front * _betacf(a, b, x) / a
        return lower, 1.0 - lower
    upper = front * _betacf(b, a, y) / b
    return 1.0 - upper, upper


def _gamma_series(a, x):
    ap = a
    total = delta = 1.0 / a
    for _ in range(_MAXIT):
        ap += 1.0
        delta *= x / ap
        total += delta
        if abs(delta) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cf(a, x):
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise ArithmeticError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _gammainc_pair(a, x):
    if x <= 0.0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    if x < a + 1.0:
        lower = _gamma_series(a, x)
        return lower, 1.0 - lower
    upper = _gamma_cf(a, x)
    return 1.0 - upper, upper


def _vectorized(fn):
    vfn = np.vectorize(fn, otypes=[float])

    def wrapper(*args):
        out = vfn(*args)
        return float(out) if out.ndim == 0 else out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_vectorized
def betainc(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    _check_df(a, b)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    return _betainc_pair(float(a), float(b), float(x))[0]


@_vectorized
def gammainc(a, x):
    """Regularized lower incomplete gamma function P(a, x)."""
    _check_df(a)
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x!r}")
    return _gammainc_pair(float(a), float(x))[0]


@_vectorized
def gammaincc(a, x):
    """Regularized upper incomplete gamma function Q(a, x)."""
    _check_df(a)
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x!r}")
    return _gammainc_pair(float(a), float(x))[1]


def _f_pair(x, df1, df2):
    _check_df(df1, df2)
    if math.isnan(x):
        raise ValueError("x is NaN")
    if x <= 0.0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    # I_z(d1/2, d2/2) with z = d1 x / (d1 x + d2); 1 - z is formed directly
    u = df1 * x
    return _betainc_pair(df1 / 2.0, df2 / 2.0, u / (u + df2), df2 / (u + df2))


@_vectorized
def f_cdf(x, df1, df2):
    """CDF of the F(df1, df2) distribution."""
    return _f_pair(float(x), float(df1), float(df2))[0]


@_vectorized
def f_sf(x, df1, df2):
    """Upper-tail probability P[F(df1, df2) > x]."""
    return _f_pair(float(x), float(df1), float(df2))[1]


def _bisect_quantile(pair_fn, p, lo, hi, expand):
    """Invert a monotone CDF given as (cdf, sf) pairs by bracketing + bisection."""
    while pair_fn(hi)[0] < p:
        lo, hi = hi, expand(hi)
        if math.isinf(hi):
            return hi
    use_sf = p > 0.5
    target = 1.0 - p
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        cdf, sf = pair_fn(mid)
        below = sf > target if use_sf else cdf < p
        if below:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _check_prob(p):
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p!r}")


@_vectorized
def f_quantile(p, df1, df2):
    """Quantile function of F(df1, df2): the x with f_cdf(x) = p."""
    p, df1, df2 = float(p), float(df1), float(df2)
    _check_prob(p)
    _check_df(df1, df2)
    return _bisect_quantile(lambda x: _f_pair(x, df1, df2), p, 0.0, 1.0, lambda h: 2.0 * h)


def _chi2_pair(x, df):
    _check_df(df)
    if math.isnan(x):
        raise ValueError("x is NaN")
    return _gammainc_pair(df / 2.0, max(x, 0.0) / 2.0)


@_vectorized
def chi2_cdf(x, df):
    """CDF of the chi-square distribution with df degrees of freedom."""
    return _chi2_pair(float(x), float(df))[0]


@_vectorized
def chi2_sf(x, df):
    """Upper-tail probability of the chi-square distribution."""
    return _chi2_pair(float(x), float(df))[1]


@_vectorized
def chi2_quantile(p, df):
    """Quantile function of the chi-square distribution."""
    p, df = float(p), float(df)
    _check_prob(p)
    _check_df(df)
    return _bisect_quantile(lambda x: _chi2_pair(x, df), p, 0.0, max(df, 1.0), lambda h: 2.0 * h)


@_vectorized
def norm_cdf(x):
    """Standard normal CDF."""
    return 0.5 * math.erfc(-float(x) / math.sqrt(2.0))


@_vectorized
def norm_sf(x):
    """Standard normal upper-tail probability."""
    return 0.5 * math.erfc(float(x) / math.sqrt(2.0))


# Acklam's rational approximation, refined by one Halley step
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)


@_vectorized
def norm_ppf(p):
    """Standard normal quantile function."""
    p = float(p)
    _check_prob(p)
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p > 1.0 - plow:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    if p < 0.5:
        e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    else:
        # cdf(x) - p written through the upper tail
        e = (1.0 - p) - 0.5 * math.erfc(x / math.sqrt(2.0))
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)
