"""Half-vectorization and polynomial feature maps for quadratic metamodels.

Feature ordering is ``(1, theta, vech(theta^2))`` throughout the package,
where ``theta^2`` has diagonal ``theta_k**2`` and off-diagonal entries
``2 * theta_k * theta_l`` so that ``theta @ c @ theta`` equals
``quad_part(theta) @ vech(c)`` for any symmetric ``c``.
"""
import itertools
import math

import numpy as np

__all__ = [
    "n_vech",
    "n_quadratic_features",
    "vech",
    "unvech",
    "symmetrize",
    "quad_features",
    "design_matrix",
    "theta_mat",
    "cubic_features",
]

ASYMMETRY_TOL = 1e-10


def n_vech(d):
    """Length of vech of a d x d matrix."""
    return d * (d + 1) // 2


def n_quadratic_features(d):
    """Number of coefficients ``(d**2 + 3d + 2) / 2`` in a full quadratic."""
    return (d * d + 3 * d + 2) // 2


def _vech_index(d):
    # column-major lower triangle: (0,0), (1,0), ..., (d-1,0), (1,1), ...
    rows, cols = [], []
    for j in range(d):
        for i in range(j, d):
            rows.append(i)
            cols.append(j)
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


def symmetrize(c, tol=ASYMMETRY_TOL):
    """Return ``(c + c.T) / 2`` after checking ``c`` is square and nearly symmetric."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {c.shape}")
    scale = max(np.max(np.abs(c)), 1.0) if c.size else 1.0
    if np.max(np.abs(c - c.T), initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return 0.5 * (c + c.T)


def vech(c):
    """Stack the lower triangle of a symmetric matrix column by column."""
    c = symmetrize(c)
    rows, cols = _vech_index(c.shape[0])
    return c[rows, cols]


def unvech(v):
    """Inverse of :func:`vech`: rebuild the symmetric matrix."""
    v = np.asarray(v, dtype=float).ravel()
    d = (math.isqrt(8 * v.size + 1) - 1) // 2
    if v.size == 0 or n_vech(d) != v.size:
        raise ValueError(f"length {v.size} is not a triangular number")
    rows, cols = _vech_index(d)
    c = np.zeros((d, d))
    c[rows, cols] = v
    c[cols, rows] = v
    return c


def _quad_part(theta):
    # theta: (m, d) -> (m, d(d+1)/2)
    d = theta.shape[1]
    rows, cols = _vech_index(d)
    factor = np.where(rows == cols, 1.0, 2.0)
    return theta[:, rows] * theta[:, cols] * factor


def quad_features(theta):
    """Quadratic feature vector ``(1, theta, vech(theta^2))``.

    Accepts a single point of shape ``(d,)`` or a stack of points ``(m, d)``.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    X = design_matrix(theta[None, :] if single else theta)
    return X[0] if single else X


def design_matrix(thetas, include_intercept=True):
    """Stacked quadratic features for the rows of ``thetas`` (m x d)."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 2:
        raise ValueError(f"expected a 2-d array of points, got shape {thetas.shape}")
    parts = [thetas, _quad_part(thetas)]
    if include_intercept:
        parts.insert(0, np.ones((thetas.shape[0], 1)))
    return np.hstack(parts)


def theta_mat(theta):
    """d x d(d+1)/2 matrix with ``c @ theta == theta_mat(theta) @ vech(c)``."""
    theta = np.asarray(theta, dtype=float).ravel()
    d = theta.size
    rows, cols = _vech_index(d)
    out = np.zeros((d, rows.size))
    for k, (i, j) in enumerate(zip(rows, cols)):
        out[i, k] += theta[j]
        if i != j:
            out[j, k] += theta[i]
    return out


def cubic_features(thetas):
    """All degree-3 monomials of the columns of ``thetas`` (m x d)."""
    thetas = np.asarray(thetas, dtype=float)
    d = thetas.shape[1]
    combos = list(itertools.combinations_with_replacement(range(d), 3))
    return np.column_stack([np.prod(thetas[:, list(c)], axis=1) for c in combos])
