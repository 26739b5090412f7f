"""Command line entry point.

Exit codes: 0 success, 1 invalid config, 2 numeric failure, 3 optimization failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import InvalidArgumentError, NumericFailure, OptimizationError, WhiteningError
from .harness import ExperimentConfig, build_model, run_experiment, solve_whitening
from .io import save_network, save_solution

logger = logging.getLogger("spatial_whitening")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OPTIMIZATION = 0, 1, 2, 3


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    return replace(cfg, **overrides) if overrides else cfg


def _metadata(cfg: ExperimentConfig) -> dict:
    return {
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "versions": {
            "spatial_whitening": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _solve_all(cfg, net, model, out: Path) -> dict:
    solutions = {}
    for r in cfg.radii:
        sol = solve_whitening(cfg, net, model, r)
        save_solution(out / f"solution_r{r:g}.json", sol, radius=r)
        logger.info(
            "r=%g: divergence %.6g after %d sweeps (converged=%s)",
            r, sol.divergence, len(sol.trace) - 1, sol.converged,
        )
        solutions[float(r)] = sol
    return solutions


def cmd_generate(cfg, out: Path) -> None:
    net, model = build_model(cfg)
    save_network(out / "network.json", net, model)
    _write_json(out / "config.json", cfg.to_dict())


def cmd_whiten(cfg, out: Path) -> None:
    net, model = build_model(cfg)
    _solve_all(cfg, net, model, out)


def _sweep(cfg, out: Path, monte_carlo: bool, name: str, solutions=None):
    result = run_experiment(cfg, solutions=solutions, monte_carlo=monte_carlo)
    (out / name).write_text(result.to_csv())
    _write_json(out / (Path(name).stem + ".meta.json"), _metadata(cfg))
    return result


def cmd_evaluate(cfg, out: Path) -> None:
    _sweep(cfg, out, monte_carlo=False, name="sweep.csv")


def cmd_validate(cfg, out: Path) -> None:
    result = _sweep(cfg, out, monte_carlo=True, name="validation.csv")
    for r in result.rows:
        gap = abs(r.mc_mse - r.analytic_mse)
        ok = gap <= max(3 * r.mc_halfwidth, 0.1 * r.analytic_mse)
        print(
            f"{r.scheme:>16} B={r.B:<5d} analytic={r.analytic_mse:.6g} "
            f"mc={r.mc_mse:.6g}+-{r.mc_halfwidth:.2g} {'ok' if ok else 'MISMATCH'}"
        )


def cmd_all(cfg, out: Path) -> None:
    net, model = build_model(cfg)
    save_network(out / "network.json", net, model)
    _write_json(out / "config.json", cfg.to_dict())
    solutions = _solve_all(cfg, net, model, out)
    _sweep(cfg, out, monte_carlo=cfg.monte_carlo, name="results.csv", solutions=solutions)


COMMANDS = {
    "generate": cmd_generate,
    "whiten": cmd_whiten,
    "evaluate": cmd_evaluate,
    "validate": cmd_validate,
    "all": cmd_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatial-whitening",
        description="Adjacency-constrained spatial whitening for quantized distributed estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--trials", type=int)
        p.add_argument("--format", choices=["csv"], default="csv")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args.out)
    except InvalidArgumentError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OptimizationError as exc:
        print(f"optimization failed: {exc}", file=sys.stderr)
        for line in exc.diagnostics:
            print(f"  {line}", file=sys.stderr)
        return EXIT_OPTIMIZATION
    except (NumericFailure, WhiteningError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
