"""Sensor placement, adjacency patterns and the exponential covariance model.

Sensors are dropped uniformly on the unit square. Two sensors can talk to each
other when they are at most ``r`` apart, and the observation noise between
sensors ``i`` and ``j`` has covariance ``sigma_i * sigma_j * alpha ** d_ij``.

All randomness goes through :func:`numpy.random.default_rng` (PCG64), so a
seed reproduces the same network on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericFailure

__all__ = [
    "SensorNetwork",
    "SparsityPattern",
    "CovarianceModel",
    "generate_rgg",
    "adjacency_pattern",
    "build_covariance",
    "draw_sigmas",
    "sample_observations",
    "is_positive_definite",
]

PD_RATIO = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


@dataclass(frozen=True)
class SensorNetwork:
    """Node positions in the unit square and their Euclidean distances."""

    positions: np.ndarray
    distances: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen(self.positions))
        object.__setattr__(self, "distances", _frozen(self.distances))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def from_positions(cls, positions, seed=None) -> "SensorNetwork":
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise InvalidArgumentError("positions must be an (n, 2) array")
        return cls(positions, pairwise_distances(positions), seed)


@dataclass(frozen=True)
class SparsityPattern:
    """Boolean adjacency mask ``A`` with self-loops on the diagonal."""

    mask: np.ndarray

    def __post_init__(self):
        mask = _frozen(self.mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise InvalidArgumentError("pattern mask must be square")
        if not mask.diagonal().all():
            raise InvalidArgumentError("pattern mask must contain every self-loop")
        object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return self.mask.shape[0]

    def neighborhood(self, k: int) -> np.ndarray:
        """Column indices allowed in row ``k``, in ascending order."""
        return np.flatnonzero(self.mask[k])

    def nnz(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def full(cls, n: int) -> "SparsityPattern":
        return cls(np.ones((n, n), dtype=bool))

    @classmethod
    def identity(cls, n: int) -> "SparsityPattern":
        return cls(np.eye(n, dtype=bool))


def is_positive_definite(matrix: np.ndarray, ratio: float = PD_RATIO) -> bool:
    """True when ``matrix`` is symmetric with eigenvalues above ``ratio * max``."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    if not np.allclose(matrix, matrix.T, rtol=1e-12, atol=1e-14 * np.abs(matrix).max(initial=0.0)):
        return False
    eig = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    return bool(eig[-1] > 0 and eig[0] > ratio * eig[-1])


@dataclass(frozen=True)
class CovarianceModel:
    """Exponentially correlated Gaussian noise covariance.

    ``matrix[i, j] = sigmas[i] * sigmas[j] * alpha ** distances[i, j]``.
    Positive definiteness is checked on construction.
    """

    sigmas: np.ndarray
    alpha: float
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigmas", _frozen(self.sigmas))
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        if not is_positive_definite(self.matrix):
            raise NumericFailure("covariance matrix is not positive definite")

    @property
    def n(self) -> int:
        return self.sigmas.shape[0]


def generate_rgg(n: int, seed: int | None = None) -> SensorNetwork:
    """Place ``n`` sensors i.i.d. uniformly on ``[0, 1]^2``."""
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 sensors, got n={n}")
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0.0, 1.0, size=(n, 2))
    return SensorNetwork.from_positions(positions, seed=seed)


def adjacency_pattern(net: SensorNetwork, r: float) -> SparsityPattern:
    """Links between every pair at distance ``<= r``; self-loops always on."""
    if r < 0:
        raise InvalidArgumentError(f"radius must be non-negative, got {r}")
    mask = net.distances <= r
    np.fill_diagonal(mask, True)
    return SparsityPattern(mask)


def draw_sigmas(n: int, variance_range=(0.5, 1.5), seed: int | None = None) -> np.ndarray:
    """Standard deviations whose squares are uniform on ``variance_range``."""
    lo, hi = variance_range
    if not 0 < lo <= hi:
        raise InvalidArgumentError(f"invalid variance range {variance_range}")
    rng = np.random.default_rng(seed)
    return np.sqrt(rng.uniform(lo, hi, size=n))


def build_covariance(net: SensorNetwork, sigmas, alpha: float) -> CovarianceModel:
    sigmas = np.asarray(sigmas, dtype=float)
    if sigmas.shape != (net.n,):
        raise InvalidArgumentError(f"expected {net.n} sigmas, got shape {sigmas.shape}")
    if np.any(sigmas <= 0) or not np.all(np.isfinite(sigmas)):
        raise InvalidArgumentError("sigmas must be finite and positive")
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    matrix = np.outer(sigmas, sigmas) * np.power(alpha, net.distances)
    np.fill_diagonal(matrix, sigmas * sigmas)
    return CovarianceModel(sigmas, float(alpha), matrix)


def sample_observations(
    model: CovarianceModel | np.ndarray,
    theta: float,
    count: int,
    seed=None,
    clip: float | None = None,
) -> np.ndarray:
    """Draw ``count`` rows from ``N(theta * 1, Sigma)``, optionally clipped to ``[-clip, clip]``.

    ``seed`` may be an int or an existing :class:`numpy.random.Generator`.
    """
    sigma = model.matrix if isinstance(model, CovarianceModel) else np.asarray(model, dtype=float)
    if clip is not None and clip <= 0:
        raise InvalidArgumentError(f"clip limit must be positive, got {clip}")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("Cholesky factorization of the covariance failed") from exc
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = theta + rng.standard_normal((count, sigma.shape[0])) @ chol.T
    if clip is not None:
        np.clip(x, -clip, clip, out=x)
    return x
