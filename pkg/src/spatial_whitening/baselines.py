"""Global (non-local) whitening transforms used as comparison schemes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateEigenvectorError, DegenerateRowError, NumericFailure

__all__ = ["GlobalWhitening", "pca_whitening", "cholesky_whitening", "inverse_cholesky"]

DEGENERATE_TOL = 1e-10


@dataclass(frozen=True)
class GlobalWhitening:
    """Mean-preserving transform ``T`` (``T 1 = 1``) and its output variances.

    ``excluded`` lists eigen-components dropped because they carry no mean
    (PCA only, and only when requested).
    """

    transform: np.ndarray
    variances: np.ndarray
    label: str
    excluded: tuple = ()


def pca_whitening(sigma, drop_degenerate: bool = False) -> GlobalWhitening:
    """Orthogonal whitening ``T = diag(U^T 1)^{-1} U^T`` from ``Sigma = U L U^T``.

    Eigenpairs are ordered by descending eigenvalue and each eigenvector is
    signed so that ``u . 1 >= 0``. Components with ``|u . 1| < 1e-10`` cannot be
    rescaled to unit mean; they raise :class:`DegenerateEigenvectorError`
    unless ``drop_degenerate`` is set, in which case they are left out.
    """
    sigma = np.asarray(sigma, dtype=float)
    eigval, eigvec = np.linalg.eigh(0.5 * (sigma + sigma.T))
    if eigval[0] <= 0:
        raise NumericFailure("covariance is not positive definite")
    order = np.argsort(eigval, kind="stable")[::-1]
    eigval, eigvec = eigval[order], eigvec[:, order]
    sums = eigvec.sum(axis=0)
    flip = sums < 0
    eigvec[:, flip] *= -1.0
    sums[flip] *= -1.0

    bad = np.flatnonzero(np.abs(sums) < DEGENERATE_TOL)
    if bad.size and not drop_degenerate:
        raise DegenerateEigenvectorError(
            f"eigenvectors {bad.tolist()} are orthogonal to the all-ones vector", bad
        )
    keep = np.setdiff1d(np.arange(sigma.shape[0]), bad)
    transform = eigvec[:, keep].T / sums[keep, None]
    variances = eigval[keep] / sums[keep] ** 2
    return GlobalWhitening(transform, variances, "pca", tuple(bad.tolist()))


def inverse_cholesky(sigma) -> np.ndarray:
    """``L^{-1}`` for the lower Cholesky factor ``Sigma = L L^T``."""
    sigma = np.asarray(sigma, dtype=float)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("Cholesky factorization failed") from exc
    return solve_triangular(chol, np.eye(sigma.shape[0]), lower=True)


def cholesky_whitening(sigma) -> GlobalWhitening:
    """Inverse Cholesky factor with rows rescaled to sum to one."""
    l_inv = inverse_cholesky(sigma)
    sums = l_inv.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums) < DEGENERATE_TOL)
    if bad.size:
        raise DegenerateRowError(f"rows {bad.tolist()} of L^-1 sum to ~0")
    return GlobalWhitening(l_inv / sums[:, None], 1.0 / sums**2, "cholesky")
