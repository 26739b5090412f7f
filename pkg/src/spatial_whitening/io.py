"""JSON artifacts for networks, covariance models and whitening solutions."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .network import SensorNetwork, build_covariance
from .whitening import WhiteningSolution, extract_wd

FORMAT_VERSION = 1


def _write(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def network_to_dict(net: SensorNetwork, model) -> dict:
    return {
        "kind": "network",
        "format_version": FORMAT_VERSION,
        "seed": net.seed,
        "positions": net.positions.tolist(),
        "sigmas": model.sigmas.tolist(),
        "alpha": model.alpha,
    }


def network_from_dict(payload: dict):
    """Rebuild ``(SensorNetwork, CovarianceModel)``; distances are recomputed."""
    net = SensorNetwork.from_positions(payload["positions"], seed=payload.get("seed"))
    return net, build_covariance(net, payload["sigmas"], payload["alpha"])


def save_network(path, net, model) -> None:
    _write(path, network_to_dict(net, model))


def load_network(path):
    return network_from_dict(json.loads(Path(path).read_text()))


def solution_to_dict(solution: WhiteningSolution, radius: float | None = None) -> dict:
    return {
        "kind": "whitening_solution",
        "format_version": FORMAT_VERSION,
        "radius": radius,
        "z": solution.z.tolist(),
        "divergence": solution.divergence,
        "trace": list(solution.trace),
        "restarts_used": solution.restarts_used,
        "converged": solution.converged,
        "stationarity": solution.stationarity,
        "run_divergences": list(solution.run_divergences),
    }


def solution_from_dict(payload: dict) -> WhiteningSolution:
    z = np.array(payload["z"], dtype=float)
    w, d = extract_wd(z)
    return WhiteningSolution(
        z=z,
        w=w,
        d=d,
        divergence=payload["divergence"],
        trace=tuple(payload["trace"]),
        restarts_used=payload["restarts_used"],
        converged=payload["converged"],
        stationarity=payload.get("stationarity", float("nan")),
        run_divergences=tuple(payload.get("run_divergences", ())),
    )


def save_solution(path, solution, radius=None) -> None:
    _write(path, solution_to_dict(solution, radius))


def load_solution(path) -> WhiteningSolution:
    return solution_from_dict(json.loads(Path(path).read_text()))
