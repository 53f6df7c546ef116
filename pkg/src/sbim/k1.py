"""Block-partition estimate of the score covariance K1 from a single data set.

The observations are split into contiguous blocks that are treated as
approximately independent.  A quadratic is fitted to the block sums of the
per-observation simulated log-likelihoods, and the between-block spread of
the fitted slopes, corrected for their Monte Carlo variance, estimates K1.
"""
from dataclasses import dataclass
import math

import numpy as np

from .features import design_matrix, theta_mat
from .metamodel import fit_quadratic, weighted_lstsq

__all__ = [
    "BlockPartition",
    "K1Estimate",
    "default_blocks",
    "block_sums",
    "block_slope",
    "block_slopes",
    "cond_var_term",
    "estimate_k1",
    "project_psd",
]


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous blocks covering ``0..n-1``; block k is ``range(starts[k], stops[k])``."""

    starts: np.ndarray
    stops: np.ndarray

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=int)
        stops = np.asarray(self.stops, dtype=int)
        if starts.size < 2 or starts.shape != stops.shape:
            raise ValueError("a partition needs at least two blocks")
        if starts[0] != 0 or np.any(stops[:-1] != starts[1:]) or np.any(stops <= starts):
            raise ValueError("blocks must be contiguous, non-empty and non-overlapping from 0")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "stops", stops)

    @property
    def K(self):
        return self.starts.size

    @property
    def n(self):
        return int(self.stops[-1])

    @property
    def sizes(self):
        return self.stops - self.starts

    def __iter__(self):
        return (range(a, b) for a, b in zip(self.starts, self.stops))

    @classmethod
    def from_sizes(cls, sizes):
        stops = np.cumsum(np.asarray(sizes, dtype=int))
        return cls(np.concatenate([[0], stops[:-1]]), stops)


@dataclass(frozen=True)
class K1Estimate:
    matrix: np.ndarray
    var_term: np.ndarray
    cond_var_term: np.ndarray
    vartheta: np.ndarray


def default_blocks(n, K="auto"):
    """Split ``n`` observations into ``K`` contiguous blocks of near-equal size.

    With ``K="auto"`` the block count is ``floor(sqrt(n))`` clamped to
    ``[5, n // 2]``.  Larger blocks come first when ``n`` is not divisible.
    """
    n = int(n)
    if K == "auto" or K is None:
        K = min(max(math.isqrt(n), 5), n // 2)
    K = int(K)
    if K < 2 or n < 2 * K:
        raise ValueError(f"cannot form {K} blocks of size >= 2 from n={n} observations")
    base, extra = divmod(n, K)
    sizes = np.full(K, base)
    sizes[:extra] += 1
    return BlockPartition.from_sizes(sizes)


def block_sums(per_obs, partition):
    """Sum per-observation values (..., n) over each block -> (..., K)."""
    per_obs = np.asarray(per_obs, dtype=float)
    if per_obs.shape[-1] != partition.n:
        raise ValueError(f"expected {partition.n} observations, got {per_obs.shape[-1]}")
    return np.add.reduceat(per_obs, partition.starts, axis=-1)


def _slope_operator(vartheta, d):
    # (0_d, I_d, 2 vartheta_mat): maps quadratic coefficients to the slope at vartheta
    return np.hstack([np.zeros((d, 1)), np.eye(d), 2.0 * theta_mat(vartheta)])


def block_slopes(table, block_values, vartheta):
    """Fitted slopes at ``vartheta`` for each column of ``block_values`` (M x K) -> (K x d)."""
    vartheta = np.atleast_1d(np.asarray(vartheta, dtype=float))
    X = design_matrix(table.thetas)
    coef = weighted_lstsq(X, table.weights, np.asarray(block_values, dtype=float))
    return (_slope_operator(vartheta, table.d) @ coef).T


def block_slope(table, block_values, vartheta):
    """Slope at ``vartheta`` of the weighted quadratic fitted to one block's values."""
    block_values = np.asarray(block_values, dtype=float).ravel()
    return block_slopes(table, block_values[:, None], vartheta)[0]


def cond_var_term(fit, vartheta, n):
    """Monte Carlo variance of the fitted slope at ``vartheta``, divided by ``n``."""
    vartheta = np.atleast_1d(np.asarray(vartheta, dtype=float))
    S = _slope_operator(vartheta, fit.d)
    out = fit.sigma2 / n * (S @ np.linalg.solve(fit.info, S.T))
    return 0.5 * (out + out.T)


def estimate_k1(table, partition=None, vartheta="auto"):
    """Estimate K1 from the block columns of ``table``.

    Parameters
    ----------
    table : SimLogLikTable
        Must carry ``per_block_values`` and ``n_obs``.
    partition : BlockPartition, optional
        Defines block sizes.  Defaults to ``table.block_sizes`` when present,
        otherwise to :func:`default_blocks` with the table's block count.
    vartheta : array-like or "auto"
        Point at which slopes are evaluated; ``"auto"`` uses the mean design point.

    Returns
    -------
    K1Estimate
        ``matrix`` is the raw, possibly indefinite, difference
        ``var_term - cond_var_term``.
    """
    if table.per_block_values is None:
        raise ValueError("table has no per-block values; K1 estimation needs block columns")
    blocks = table.per_block_values
    K = blocks.shape[1]
    if K < 2:
        raise ValueError("need at least two blocks to estimate K1")
    if partition is None:
        if table.block_sizes is not None:
            partition = BlockPartition.from_sizes(table.block_sizes)
        elif table.n_obs is not None:
            partition = default_blocks(table.n_obs, K)
        else:
            raise ValueError("block sizes unknown: pass a partition or set n_obs")
    if partition.K != K:
        raise ValueError(f"partition has {partition.K} blocks but table has {K} block columns")
    n = partition.n
    if table.n_obs is not None and table.n_obs != n:
        raise ValueError(f"partition covers {n} observations but table has n_obs={table.n_obs}")
    if isinstance(vartheta, str) and vartheta == "auto":
        vartheta = table.thetas.mean(axis=0)
    vartheta = np.atleast_1d(np.asarray(vartheta, dtype=float))

    slopes = block_slopes(table, blocks, vartheta)  # K x d
    sizes = partition.sizes.astype(float)
    centered = slopes / sizes[:, None] - slopes.sum(axis=0) / n
    var_term = (centered.T * sizes) @ centered / (K - 1)
    var_term = 0.5 * (var_term + var_term.T)

    cvt = cond_var_term(fit_quadratic(table), vartheta, n)
    matrix = var_term - cvt
    matrix = 0.5 * (matrix + matrix.T)
    return K1Estimate(matrix=matrix, var_term=var_term, cond_var_term=cvt, vartheta=vartheta)


def project_psd(m):
    """Nearest positive-semidefinite matrix in Frobenius norm (eigenvalue clipping)."""
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(m)
    if np.all(vals >= 0):
        return m
    out = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return 0.5 * (out + out.T)
