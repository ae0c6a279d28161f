"""Command-line entry point: ``gap run`` and ``gap distance``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from gap.errors import DimensionMismatch, InvalidSpec, NoConvergence
from gap.experiments import EXPERIMENTS, load_config, preset, run_experiment
from gap.geometry import bhattacharyya_overlap_gaussians, hellinger_distance, spherical_fisher_distance
from gap.io import load_model_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_IO = 4

log = logging.getLogger("gap")


def _positive_floats(text: str) -> float | list[float]:
    parts = [float(p) for p in text.split(",")]
    return parts[0] if len(parts) == 1 else parts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gap", description="Gaussian approximation by spherical Fisher distance.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write trace.csv, result.json and density_curves.csv")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--experiment", choices=[e for e in EXPERIMENTS if e != "custom"])
    src.add_argument("--config", help="JSON experiment config")
    run.add_argument("--seed", type=int)
    run.add_argument("--samples", type=int, help="Monte Carlo samples per iteration")
    run.add_argument("--max-iters", type=int)
    run.add_argument("--step-mu", type=_positive_floats, help="mean step size (comma list for per-coordinate)")
    run.add_argument("--step-l", type=_positive_floats, help="factor step size (comma list for per-coordinate)")
    run.add_argument("--out", help="output directory")

    dist = sub.add_parser("distance", help="distance between two Gaussians stored as JSON")
    dist.add_argument("model_a")
    dist.add_argument("model_b")
    return parser


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config) if args.config else preset(args.experiment)
        config = config.with_overrides(seed=args.seed, samples=args.samples, max_iters=args.max_iters,
                                       step_mu=args.step_mu, step_l=args.step_l, output_dir=args.out)
    except (InvalidSpec, ValueError) as exc:
        print(f"gap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outcome = run_experiment(config)
    except (InvalidSpec, DimensionMismatch) as exc:
        print(f"gap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as exc:
        print(f"gap: optimizer did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except OSError as exc:
        print(f"gap: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote results to {outcome.out_dir}")
    return EXIT_OK


def _cmd_distance(args) -> int:
    try:
        a = load_model_json(args.model_a)
        b = load_model_json(args.model_b)
        overlap = bhattacharyya_overlap_gaussians(a, b)
    except (OSError, ValueError) as exc:
        print(f"gap: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    # closed-form overlap: no Monte Carlo guard band needed
    print(f"spherical_fisher_distance {spherical_fisher_distance(overlap, clamp=0.0):.17g}")
    print(f"hellinger_distance {hellinger_distance(overlap):.17g}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_distance(args)


if __name__ == "__main__":
    sys.exit(main())
