"""End-to-end bit-allocation experiment over whitening schemes and budgets."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import baselines, estimation
from .errors import InvalidArgumentError, WhiteningError
from .network import (
    CovarianceModel,
    SensorNetwork,
    adjacency_pattern,
    build_covariance,
    draw_sigmas,
    generate_rgg,
    sample_observations,
)
from .whitening import WhiteningProblem, WhiteningSolution, log_det_divergence, optimize

__all__ = [
    "ExperimentConfig",
    "Scheme",
    "SweepRow",
    "SweepResult",
    "build_model",
    "build_schemes",
    "monte_carlo_mse",
    "run_experiment",
    "CSV_HEADER",
]

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "scheme", "B", "lambda", "bits_total", "analytic_mse",
    "mc_mse", "mc_halfwidth", "crb", "divergence",
)
BASE_SCHEMES = ("raw", "whitened", "pca", "cholesky")
_WHITENED_RE = re.compile(r"^whitened\(([0-9.eE+-]+)\)$")


def default_budgets(n: int) -> list[int]:
    """Six budgets doubling from ``n/2`` to ``16 n`` bits."""
    return sorted({max(1, int(round(b))) for b in np.geomspace(n / 2, 16 * n, 6)})


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 50
    seed: int = 0
    sigma_range: tuple = (0.5, 1.5)
    alpha: float = 0.02
    U: float = 20.0
    radii: tuple = (0.1, 0.5)
    budgets: tuple | None = None
    trials: int = 20000
    restarts: int = 4
    tol: float = 1e-8
    max_sweeps: int = 500
    schemes: tuple = BASE_SCHEMES
    theta: float = 1.0
    monte_carlo: bool = True

    def __post_init__(self):
        for name in ("sigma_range", "radii", "schemes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n < 1:
            raise InvalidArgumentError("n must be >= 1")
        if self.budgets is None:
            object.__setattr__(self, "budgets", tuple(default_budgets(self.n)))
        else:
            object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidArgumentError("n must be >= 1")
        lo, hi = self.sigma_range
        if not 0 < lo <= hi:
            raise InvalidArgumentError(f"bad sigma_range {self.sigma_range}")
        if not 0 < self.alpha < 1:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        if self.U <= 0:
            raise InvalidArgumentError("U must be positive")
        if any(r < 0 for r in self.radii):
            raise InvalidArgumentError("radii must be non-negative")
        if any(b < 0 for b in self.budgets):
            raise InvalidArgumentError("budgets must be non-negative")
        if self.monte_carlo and self.trials < 1000:
            raise InvalidArgumentError("Monte Carlo needs at least 1000 trials")
        if self.restarts < 1 or self.max_sweeps < 1 or not self.tol > 0:
            raise InvalidArgumentError("bad optimizer settings")
        for s in self.schemes:
            if s not in BASE_SCHEMES and not _WHITENED_RE.match(s):
                raise InvalidArgumentError(f"unknown scheme {s!r}")

    def scheme_labels(self) -> list[str]:
        labels = []
        for s in self.schemes:
            expanded = [f"whitened({r:g})" for r in self.radii] if s == "whitened" else [s]
            labels.extend(x for x in expanded if x not in labels)
        return labels

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**payload)
        except TypeError as exc:
            raise InvalidArgumentError(str(exc)) from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(payload, dict):
            raise InvalidArgumentError("config must be a JSON object")
        return cls.from_dict(payload)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


@dataclass(frozen=True)
class Scheme:
    """A mean-preserving transform applied before quantization."""

    label: str
    transform: np.ndarray
    covariance: np.ndarray
    divergence: float
    solution: WhiteningSolution | None = None
    radius: float | None = None

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.covariance).copy()


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    B: int
    lam: float
    bits_total: int
    analytic_mse: float
    mc_mse: float | None
    mc_halfwidth: float | None
    crb: float
    divergence: float
    min_active_bits: int = 0

    def report(self, trials: int = 0) -> estimation.EstimationReport:
        return estimation.EstimationReport(
            self.scheme, self.B, self.analytic_mse, self.crb,
            self.mc_mse, self.mc_halfwidth, trials if self.mc_mse is not None else 0,
        )


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    schemes: dict = field(default_factory=dict)
    model: CovarianceModel | None = None
    network: SensorNetwork | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([
                r.scheme, r.B, _fmt(r.lam), r.bits_total, _fmt(r.analytic_mse),
                _fmt(r.mc_mse), _fmt(r.mc_halfwidth), _fmt(r.crb), _fmt(r.divergence),
            ])
        return buf.getvalue()

    def row(self, scheme: str, budget: int) -> SweepRow:
        for r in self.rows:
            if r.scheme == scheme and r.B == budget:
                return r
        raise KeyError((scheme, budget))


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _seed(config, *parts) -> np.random.Generator:
    return np.random.default_rng([config.seed, *parts])


def build_model(config: ExperimentConfig) -> tuple[SensorNetwork, CovarianceModel]:
    """Sensor positions from ``seed``, variances from an independent child stream."""
    if config.n == 1:
        pos = np.random.default_rng(config.seed).uniform(0.0, 1.0, size=(1, 2))
        net = SensorNetwork.from_positions(pos, seed=config.seed)
    else:
        net = generate_rgg(config.n, config.seed)
    sigmas = draw_sigmas(config.n, config.sigma_range, seed=[config.seed, 1])
    return net, build_covariance(net, sigmas, config.alpha)


def _divergence_from_diagonal(c: np.ndarray) -> float:
    return log_det_divergence(c, np.diag(np.diag(c)))


def _make_scheme(label, transform, sigma, **extra) -> Scheme:
    c = transform @ sigma @ transform.T
    c = 0.5 * (c + c.T)
    return Scheme(label, transform, c, _divergence_from_diagonal(c), **extra)


def solve_whitening(config, net, model, radius) -> WhiteningSolution:
    problem = WhiteningProblem(model, adjacency_pattern(net, radius))
    return optimize(problem, config.restarts, config.tol, config.max_sweeps, seed=config.seed)


def build_schemes(config, net, model, solutions=None) -> dict[str, Scheme]:
    """Transforms for every requested scheme label.

    ``solutions`` may map radius to precomputed whitening solutions.
    """
    sigma = model.matrix
    solutions = dict(solutions or {})
    out = {}
    for label in config.scheme_labels():
        if label == "raw":
            out[label] = _make_scheme(label, np.eye(config.n), sigma)
        elif label == "pca":
            g = baselines.pca_whitening(sigma, drop_degenerate=True)
            if g.excluded:
                logger.warning("pca: components %s carry no mean and are excluded", g.excluded)
            out[label] = _make_scheme(label, g.transform, sigma)
        elif label == "cholesky":
            out[label] = _make_scheme(label, baselines.cholesky_whitening(sigma).transform, sigma)
        else:
            radius = float(_WHITENED_RE.match(label).group(1))
            sol = solutions.get(radius)
            if sol is None:
                sol = solve_whitening(config, net, model, radius)
            out[label] = _make_scheme(label, sol.w, sigma, solution=sol, radius=radius)
    return out


def monte_carlo_mse(
    transform,
    sigma,
    allocation: estimation.BitAllocation | None,
    theta: float,
    trials: int,
    seed=None,
    quantize: bool = True,
    range_limit: float | None = None,
) -> tuple[float, float]:
    """Simulate sample -> transform -> clip -> quantize -> fuse.

    With ``quantize=False`` (or no allocation) every transformed variable is
    fused unquantized. Returns the mean squared error and its normal
    approximation 95% half-width.
    """
    if trials < 1000:
        raise InvalidArgumentError("Monte Carlo needs at least 1000 trials")
    transform = np.asarray(transform, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if allocation is not None:
        range_limit = allocation.range_limit
    if range_limit is None:
        range_limit = 20.0
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    c = transform @ sigma @ transform.T
    c = 0.5 * (c + c.T)
    if quantize and allocation is not None:
        active = np.flatnonzero(allocation.active)
        bits = allocation.bits[active]
    else:
        active = np.arange(transform.shape[0])
        bits = None
    if active.size == 0:
        raise estimation.UndefinedEstimateError("no active sensors to fuse")
    weights = estimation.fusion_weights(c[np.ix_(active, active)])

    x = sample_observations(sigma, theta, trials, rng, clip=range_limit)
    y = x @ transform[active].T
    np.clip(y, -range_limit, range_limit, out=y)
    if bits is not None:
        y = estimation.quantize_array(y, bits, range_limit, rng)
    err2 = (y @ weights - theta) ** 2
    mse = float(err2.mean())
    halfwidth = float(1.96 * err2.std(ddof=1) / np.sqrt(trials))
    return mse, halfwidth


def evaluate_scheme(scheme: Scheme, budget: int, range_limit: float):
    """Allocation and analytic MSE of one scheme at one budget."""
    alloc = estimation.solve_budget(scheme.variances, budget, range_limit)
    active = np.flatnonzero(alloc.active)
    c = scheme.covariance[np.ix_(active, active)]
    mse = estimation.analytic_mse(c, estimation.quantization_noise(alloc))
    return alloc, mse


def run_experiment(config: ExperimentConfig, solutions=None, monte_carlo: bool | None = None) -> SweepResult:
    """Sweep every (scheme, budget) pair in config order."""
    if monte_carlo is None:
        monte_carlo = config.monte_carlo
    net, model = build_model(config)
    schemes = build_schemes(config, net, model, solutions)
    bound = estimation.crb(model.matrix)
    result = SweepResult(config, schemes=schemes, model=model, network=net)
    for si, (label, scheme) in enumerate(schemes.items()):
        for bi, budget in enumerate(config.budgets):
            try:
                alloc, mse = evaluate_scheme(scheme, budget, config.U)
                mc = hw = None
                if monte_carlo:
                    mc, hw = monte_carlo_mse(
                        scheme.transform, model.matrix, alloc, config.theta,
                        config.trials, _seed(config, 2, si, bi),
                    )
            except WhiteningError as exc:
                exc.args = (f"[{label}, B={budget}] {exc}",) + exc.args[1:]
                raise
            active_bits = alloc.bits[alloc.active]
            result.rows.append(SweepRow(
                scheme=label, B=budget, lam=alloc.lam, bits_total=alloc.total,
                analytic_mse=mse, mc_mse=mc, mc_halfwidth=hw, crb=bound,
                divergence=scheme.divergence,
                min_active_bits=int(active_bits.min()) if active_bits.size else 0,
            ))
    return result
