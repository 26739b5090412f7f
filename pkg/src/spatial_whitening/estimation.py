"""Quantized distributed estimation of a scalar location parameter.

Each active sensor quantizes its (possibly whitened) observation with a
randomized uniform quantizer on ``[-U, U]``, the number of bits per sensor
comes from a threshold rule driven by a multiplier ``lambda``, and the fusion
center combines the messages with the best linear unbiased weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidArgumentError, NumericFailure, UndefinedEstimateError

__all__ = [
    "BitAllocation",
    "EstimationReport",
    "allocate_bits",
    "solve_budget",
    "quantization_noise",
    "quantize",
    "quantize_array",
    "quantizer_cell",
    "fusion_weights",
    "fuse",
    "analytic_mse",
    "crb",
    "scheme_variances",
    "approximation_gap",
]

LOG10_LAMBDA_RANGE = (-9.0, 9.0)
BISECTION_STEPS = 200


@dataclass(frozen=True)
class BitAllocation:
    bits: np.ndarray
    lam: float
    budget: int
    range_limit: float

    @property
    def total(self) -> int:
        return int(self.bits.sum())

    @property
    def active(self) -> np.ndarray:
        return self.bits >= 1


@dataclass(frozen=True)
class EstimationReport:
    scheme: str
    budget: int
    analytic_mse: float
    crb: float
    mc_mse: float | None = None
    mc_halfwidth: float | None = None
    trials: int = 0


def allocate_bits(variances, lam: float) -> np.ndarray:
    """``b_k = ROUND(log2(1 + 1 / (lam * var_k)))``, rounding halves up, floored at 0."""
    variances = np.asarray(variances, dtype=float)
    if not lam > 0:
        raise InvalidArgumentError(f"lambda must be positive, got {lam}")
    with np.errstate(over="ignore", divide="ignore"):
        raw = np.log2(1.0 + 1.0 / (lam * variances))
    return np.maximum(np.floor(raw + 0.5), 0).astype(np.int64)


def _total(variances, log_lam):
    return int(allocate_bits(variances, 10.0**log_lam).sum())


def solve_budget(variances, budget: int, range_limit: float = 20.0) -> BitAllocation:
    """Pick ``lambda`` so the allocation spends ``budget`` bits in total.

    The total is a non-increasing step function of ``lambda``. When ``budget``
    falls between two steps the largest achievable total below it is used;
    ``lambda`` is then the geometric midpoint of that step.
    """
    variances = np.asarray(variances, dtype=float)
    budget = int(budget)
    if budget < 0:
        raise InvalidArgumentError(f"budget must be non-negative, got {budget}")
    if budget == 0 or variances.size == 0:
        return BitAllocation(np.zeros(variances.size, dtype=np.int64), float("inf"), budget, range_limit)

    lo, hi = LOG10_LAMBDA_RANGE
    if _total(variances, lo) <= budget:
        edge = lo
    else:
        # invariant: total(lo) > budget >= total(hi)
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            if _total(variances, mid) > budget:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13:
                break
        edge = hi
    achieved = _total(variances, edge)

    # upper end of the plateau on which the total equals `achieved`
    lo, hi = edge, LOG10_LAMBDA_RANGE[1]
    if _total(variances, hi) == achieved:
        upper = hi
    else:
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            if _total(variances, mid) == achieved:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13:
                break
        upper = lo
    log_lam = 0.5 * (edge + upper)
    bits = allocate_bits(variances, 10.0**log_lam)
    if int(bits.sum()) != achieved:
        log_lam = edge
        bits = allocate_bits(variances, 10.0**edge)
    return BitAllocation(bits, float(10.0**log_lam), budget, float(range_limit))


def quantization_noise(allocation: BitAllocation) -> np.ndarray:
    """Worst-case quantizer variances ``U^2 / (2^b - 1)^2`` of the active sensors."""
    b = allocation.bits[allocation.active].astype(float)
    return allocation.range_limit**2 / (2.0**b - 1.0) ** 2


def quantizer_cell(x, b, U):
    """Grid points ``(a_j, a_{j+1})`` bracketing ``x`` and the grid step."""
    levels = 2.0**b - 1.0
    step = 2.0 * U / levels
    j = np.clip(np.floor((x + U) / step), 0, levels - 1)
    lower = -U + j * step
    upper = -U + (j + 1) * step
    return lower, upper, step


def quantize(x: float, b: int, U: float, rng) -> float:
    """Randomized rounding of ``x`` onto ``2**b`` evenly spaced points of ``[-U, U]``.

    ``x`` in ``[a_j, a_{j+1})`` maps to ``a_j`` with probability
    ``(a_{j+1} - x) / step`` and to ``a_{j+1}`` otherwise, so ``E[m | x] = x``.
    """
    if b < 1:
        raise InvalidArgumentError("a quantizer needs at least one bit")
    if not -U <= x <= U:
        raise InvalidArgumentError(f"x={x} lies outside [-{U}, {U}]")
    lower, upper, step = quantizer_cell(float(x), int(b), float(U))
    q = (upper - x) / step
    return float(lower if rng.random() < q else upper)


def quantize_array(x, bits, U: float, rng) -> np.ndarray:
    """Vectorized :func:`quantize`; ``bits`` broadcasts against the last axis of ``x``."""
    x = np.asarray(x, dtype=float)
    bits = np.asarray(bits)
    if np.any(bits < 1):
        raise InvalidArgumentError("a quantizer needs at least one bit")
    if np.any(np.abs(x) > U):
        raise InvalidArgumentError(f"observations lie outside [-{U}, {U}]")
    lower, upper, step = quantizer_cell(x, bits.astype(float), float(U))
    q = (upper - x) / step
    return np.where(rng.random(x.shape) < q, lower, upper)


def _factor(c):
    try:
        return cho_factor(np.asarray(c, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("fusion covariance is not positive definite") from exc


def fusion_weights(c) -> np.ndarray:
    """BLUE weights ``C^{-1} 1 / (1^T C^{-1} 1)``; they sum to one."""
    c = np.asarray(c, dtype=float)
    if c.size == 0:
        raise UndefinedEstimateError("no active sensors to fuse")
    a = cho_solve(_factor(c), np.ones(c.shape[0]))
    return a / a.sum()


def fuse(messages, c) -> np.ndarray | float:
    """Weighted least-squares estimate of ``theta``; rows of ``messages`` are trials."""
    est = np.asarray(messages, dtype=float) @ fusion_weights(c)
    return float(est) if np.ndim(est) == 0 else est


def analytic_mse(c, q_diag) -> float:
    """``1^T C^{-1} (C + Q) C^{-1} 1 / (1^T C^{-1} 1)^2`` over the active sensors."""
    c = np.asarray(c, dtype=float)
    q_diag = np.asarray(q_diag, dtype=float)
    if c.size == 0:
        raise UndefinedEstimateError("no active sensors to fuse")
    if q_diag.shape != (c.shape[0],):
        raise InvalidArgumentError("quantization noise does not match the covariance")
    a = cho_solve(_factor(c), np.ones(c.shape[0]))
    s = a.sum()
    return float((a @ c @ a + a @ (q_diag * a)) / (s * s))


def crb(sigma) -> float:
    """Cramer-Rao bound ``1 / (1^T Sigma^{-1} 1)`` for the location parameter."""
    sigma = np.asarray(sigma, dtype=float)
    a = cho_solve(_factor(sigma), np.ones(sigma.shape[0]))
    return float(1.0 / a.sum())


def _transform_of(scheme) -> np.ndarray:
    for attr in ("w", "transform"):
        if hasattr(scheme, attr):
            return np.asarray(getattr(scheme, attr))
    return np.asarray(scheme, dtype=float)


def scheme_variances(scheme, sigma) -> np.ndarray:
    """Exact output variances ``diag(T Sigma T^T)`` of a whitening scheme.

    ``scheme`` may be a :class:`~spatial_whitening.whitening.WhiteningSolution`,
    a :class:`~spatial_whitening.baselines.GlobalWhitening` or a plain matrix.
    """
    t = _transform_of(scheme)
    return np.einsum("ij,jk,ik->i", t, np.asarray(sigma, dtype=float), t)


def approximation_gap(solution, sigma) -> float:
    """Largest relative gap between ``diag(W Sigma W^T)`` and ``D = diag(Z 1)^{-2}``."""
    exact = scheme_variances(solution, sigma)
    return float(np.max(np.abs(exact - solution.d) / exact))
