"""Adjacency-constrained spatial whitening by row-wise coordinate descent.

We look for ``Z`` supported on an adjacency pattern ``A`` that minimizes the
log-determinant divergence of ``Z Sigma Z^T`` from the identity::

    l(Z) = tr(Z Sigma Z^T) - log det(Z Z^T) - N - log det(Sigma)

Fixing every row but ``k``, ``det Z`` is linear in the free entries ``z_k``
(cofactor expansion along row ``k``), so the row subproblem is

    g(z_k) = 1/2 z_k^T Sigma_k z_k - log(z_k^T c_k)

with the closed-form minimizer ``Sigma_k^{-1} c_k / sqrt(c_k^T Sigma_k^{-1} c_k)``.
The cofactors are ``det(Z) * (Z^{-1})[j, k]``; the ``det(Z)`` factor is a
common scale and the minimizer does not depend on the scale of ``c_k``, so a
column of the maintained inverse is enough. After each row replacement the
inverse is patched with Sherman-Morrison and periodically refactored.

The mean-preserving transform is ``W = diag(Z 1)^{-1} Z`` and the implied
per-sensor noise variances are ``D = diag(Z 1)^{-2}``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DegenerateRowError,
    InvalidArgumentError,
    MeanDegenerateError,
    NumericFailure,
    OptimizationError,
    SingularUpdateError,
)
from .network import CovarianceModel, SparsityPattern, is_positive_definite

__all__ = [
    "WhiteningProblem",
    "WhiteningSolution",
    "RowSubproblem",
    "log_det_divergence",
    "cost",
    "gradient",
    "cofactor_vector",
    "row_update",
    "rank_one_inverse_update",
    "initialize",
    "optimize",
    "extract_wd",
]

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 4
DEFAULT_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 500
REFACTOR_EVERY = 50
SM_DENOM_TOL = 1e-12
COFACTOR_TOL = 1e-12
ROW_SUM_TOL = 1e-10


def _as_matrix(sigma) -> np.ndarray:
    if isinstance(sigma, CovarianceModel):
        return sigma.matrix
    return np.asarray(sigma, dtype=float)


def _logdet_spd(m: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(m)
    if sign <= 0:
        raise NumericFailure("expected a positive definite matrix")
    return float(val)


def log_det_divergence(p, q) -> float:
    """``tr(Q^{-1} P) - log det P - N + log det Q`` for SPD ``P`` and ``Q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise InvalidArgumentError(f"shape mismatch: {p.shape} vs {q.shape}")
    for name, m in (("P", p), ("Q", q)):
        if not is_positive_definite(m, ratio=0.0):
            raise InvalidArgumentError(f"{name} is not symmetric positive definite")
    n = p.shape[0]
    q_fac = cho_factor(q)
    tr = float(np.trace(cho_solve(q_fac, p)))
    logdet_q = 2.0 * float(np.sum(np.log(np.diag(q_fac[0]))))
    return tr - _logdet_spd(p) - n + logdet_q


def cost(z, sigma, c0: float | None = None) -> float:
    """Divergence of ``Z Sigma Z^T`` from ``I``; ``+inf`` for singular ``Z``.

    ``c0 = -N - log det Sigma`` may be passed in to skip recomputing it.
    """
    z = np.asarray(z, dtype=float)
    sigma = _as_matrix(sigma)
    sign, logabs = np.linalg.slogdet(z)
    if sign == 0 or not np.isfinite(logabs):
        return float("inf")
    if c0 is None:
        c0 = -sigma.shape[0] - _logdet_spd(sigma)
    tr = float(np.einsum("ij,jk,ik->", z, sigma, z))
    return tr - 2.0 * float(logabs) + c0


def gradient(z, sigma, pattern: SparsityPattern) -> np.ndarray:
    """Masked derivative ``2 (Z Sigma - Z^{-T}) o A`` of :func:`cost`."""
    z = np.asarray(z, dtype=float)
    sigma = _as_matrix(sigma)
    try:
        z_inv = np.linalg.inv(z)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("gradient undefined at a singular Z") from exc
    return 2.0 * (z @ sigma - z_inv.T) * pattern.mask


@dataclass(frozen=True)
class RowSubproblem:
    """Data for minimizing ``1/2 z^T sigma_k z - log(z^T c_k)`` over one row."""

    k: int
    neighborhood: np.ndarray
    sigma_k: np.ndarray
    c_k: np.ndarray

    @classmethod
    def build(cls, z, z_inv, sigma, pattern: SparsityPattern, k: int) -> "RowSubproblem":
        nb = pattern.neighborhood(k)
        sigma = _as_matrix(sigma)
        return cls(k, nb, sigma[np.ix_(nb, nb)], cofactor_vector(z, z_inv, k, pattern))

    def objective(self, zk) -> float:
        zk = np.asarray(zk, dtype=float)
        inner = float(zk @ self.c_k)
        if inner <= 0:
            return float("inf")
        return 0.5 * float(zk @ self.sigma_k @ zk) - np.log(inner)


def cofactor_vector(z, z_inv, k: int, pattern: SparsityPattern) -> np.ndarray:
    """Cofactors of row ``k`` over its neighborhood, up to a positive scale.

    Uses ``cof(Z)[k, j] = det(Z) * (Z^{-1})[j, k]``. The sign is chosen so that
    the current row has ``z_k . c_k >= 0``.
    """
    z = np.asarray(z)
    z_inv = np.asarray(z_inv)
    nb = pattern.neighborhood(k)
    c = np.array(z_inv[nb, k], dtype=float)
    scale = float(np.abs(z_inv).max())
    if not np.isfinite(scale) or np.linalg.norm(c) < COFACTOR_TOL * scale:
        raise DegenerateRowError(f"cofactor vector of row {k} vanished")
    if float(z[k, nb] @ c) < 0:
        c = -c
    return c


def _row_minimizer(factor, c: np.ndarray) -> np.ndarray:
    y = cho_solve(factor, c)
    s = float(c @ y)
    if not s > 0:
        raise NumericFailure("row subproblem has a non-positive quadratic form")
    return y / np.sqrt(s)


def row_update(sub: RowSubproblem) -> np.ndarray:
    """Unique minimizer of the row subproblem; satisfies ``z . c_k > 0``."""
    try:
        factor = cho_factor(sub.sigma_k)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"clique covariance of row {sub.k} is not SPD") from exc
    return _row_minimizer(factor, np.asarray(sub.c_k, dtype=float))


def rank_one_inverse_update(z_inv, k: int, old_row, new_row) -> np.ndarray:
    """Inverse of ``Z`` after row ``k`` changes from ``old_row`` to ``new_row``.

    With ``Z' = Z + e_k delta^T`` Sherman-Morrison gives
    ``Z'^{-1} = Z^{-1} - (Z^{-1} e_k)(delta^T Z^{-1}) / (1 + delta^T Z^{-1} e_k)``.
    """
    z_inv = np.asarray(z_inv, dtype=float)
    delta = np.asarray(new_row, dtype=float) - np.asarray(old_row, dtype=float)
    u = z_inv[:, k]
    denom = 1.0 + float(delta @ u)
    if abs(denom) < SM_DENOM_TOL:
        raise SingularUpdateError(f"row {k} replacement makes Z (nearly) singular")
    return z_inv - np.outer(u, delta @ z_inv) / denom


@dataclass(frozen=True)
class WhiteningProblem:
    sigma: CovarianceModel | np.ndarray
    pattern: SparsityPattern

    def __post_init__(self):
        m = self.matrix
        if m.shape != self.pattern.mask.shape:
            raise InvalidArgumentError(
                f"covariance {m.shape} and pattern {self.pattern.mask.shape} disagree"
            )
        if not is_positive_definite(m):
            raise InvalidArgumentError("covariance is not positive definite")

    @property
    def matrix(self) -> np.ndarray:
        return _as_matrix(self.sigma)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class WhiteningSolution:
    z: np.ndarray
    w: np.ndarray
    d: np.ndarray
    divergence: float
    trace: tuple
    restarts_used: int
    converged: bool
    stationarity: float = float("nan")
    run_divergences: tuple = ()
    run_traces: tuple = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return self.z.shape[0]


def extract_wd(z) -> tuple[np.ndarray, np.ndarray]:
    """Mean-preserving transform ``W`` and diagonal ``d`` of ``D`` from ``Z``."""
    z = np.asarray(z, dtype=float)
    s = z.sum(axis=1)
    bad = np.flatnonzero(np.abs(s) < ROW_SUM_TOL)
    if bad.size:
        raise MeanDegenerateError(f"rows {bad.tolist()} of Z sum to ~0")
    return z / s[:, None], 1.0 / (s * s)


def initialize(problem: WhiteningProblem, strategy: str = "diagonal", seed=None) -> np.ndarray:
    """Feasible nonsingular starting point.

    ``diagonal`` returns ``diag(1 / sigma_k)``. ``perturbed`` adds Gaussian
    noise of scale ``0.1 / sigma_k`` to the allowed off-diagonal entries of
    row ``k``.
    """
    sig = np.sqrt(np.diag(problem.matrix))
    z0 = np.diag(1.0 / sig)
    if strategy == "diagonal":
        return z0
    if strategy != "perturbed":
        raise InvalidArgumentError(f"unknown initialization strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    off = problem.pattern.mask & ~np.eye(problem.n, dtype=bool)
    for _ in range(100):
        noise = rng.standard_normal(z0.shape) * (0.1 / sig)[:, None]
        z = z0 + noise * off
        if np.linalg.cond(z) < 1e12:
            return z
    return z0


@dataclass
class _Run:
    z: np.ndarray
    trace: list
    converged: bool


def _descend(problem, z0, tol, max_sweeps, factors, neighborhoods, c0) -> _Run:
    sigma = problem.matrix
    n = problem.n
    z = np.array(z0, dtype=float)
    z_inv = np.linalg.inv(z)
    trace = [cost(z, sigma, c0)]
    updates = 0
    converged = False
    for _ in range(max_sweeps):
        for k in range(n):
            nb = neighborhoods[k]
            c = cofactor_vector(z, z_inv, k, problem.pattern)
            new_row = np.zeros(n)
            new_row[nb] = _row_minimizer(factors[k], c)
            try:
                z_inv = rank_one_inverse_update(z_inv, k, z[k], new_row)
                z[k] = new_row
                updates += 1
                if updates % REFACTOR_EVERY == 0:
                    z_inv = np.linalg.inv(z)
            except SingularUpdateError:
                z[k] = new_row
                z_inv = np.linalg.inv(z)
        value = cost(z, sigma, c0)
        if not np.isfinite(value):
            raise DegenerateRowError("iterate became singular")
        decrease = trace[-1] - value
        trace.append(value)
        if decrease < tol:
            converged = True
            break
    return _Run(z, trace, converged)


def optimize(
    problem: WhiteningProblem,
    restarts: int = DEFAULT_RESTARTS,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    seed: int = 0,
) -> WhiteningSolution:
    """Minimize the whitening divergence over ``Z`` supported on the pattern.

    The first restart starts from ``diag(1 / sigma_k)``; the others from
    seeded perturbations of it. Rows are swept in ascending order and a run
    stops once a full sweep lowers the divergence by less than ``tol``. The
    best run wins, where a later run must beat the current best by more than
    ``tol``; runs that hit a degenerate row are skipped.

    Returns
    -------
    WhiteningSolution
        ``trace`` holds the starting divergence followed by the value after
        each sweep of the winning run.
    """
    if restarts < 1:
        raise InvalidArgumentError("restarts must be >= 1")
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    sigma = problem.matrix
    n = problem.n
    c0 = -n - _logdet_spd(sigma)
    neighborhoods = [problem.pattern.neighborhood(k) for k in range(n)]
    try:
        factors = [cho_factor(sigma[np.ix_(nb, nb)]) for nb in neighborhoods]
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("a clique covariance is not positive definite") from exc

    runs, failures = [], []
    for r in range(restarts):
        if r == 0:
            z0 = initialize(problem, "diagonal")
        else:
            z0 = initialize(problem, "perturbed", seed=[seed, r])
        try:
            run = _descend(problem, z0, tol, max_sweeps, factors, neighborhoods, c0)
            extract_wd(run.z)
        except (DegenerateRowError, MeanDegenerateError) as exc:
            logger.warning("restart %d failed: %s", r, exc)
            failures.append(f"restart {r}: {exc}")
            continue
        runs.append(run)
    if not runs:
        raise OptimizationError("every restart failed", diagnostics=failures)

    # a later restart only wins by a margin above tol; ties keep the earlier run
    best = runs[0]
    for run in runs[1:]:
        if run.trace[-1] < best.trace[-1] - tol:
            best = run
    w, d = extract_wd(best.z)
    stationarity = float(np.abs(gradient(best.z, sigma, problem.pattern)).max())
    return WhiteningSolution(
        z=best.z,
        w=w,
        d=d,
        divergence=float(best.trace[-1]),
        trace=tuple(best.trace),
        restarts_used=restarts,
        converged=best.converged,
        stationarity=stationarity,
        run_divergences=tuple(float(run.trace[-1]) for run in runs),
        run_traces=tuple(tuple(run.trace) for run in runs),
    )
