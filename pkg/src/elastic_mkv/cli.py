"""Command-line entry point: run/validate experiment configs, print oracles."""

from __future__ import annotations

import argparse
import sys

from .experiments import ExperimentError, load_config, run_experiment


def _cmd_run(args) -> int:
    config = load_config(args.config)
    try:
        manifest = run_experiment(
            config,
            output_dir=args.output_dir,
            threads=args.threads,
            seed_override=args.seed,
        )
    except ExperimentError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for entry in manifest.inventory:
        print(f"{entry['sha256'][:12]}  {entry['file']}  ({entry['rows']} rows)")
    print("manifest: run.json")
    return 0


def _cmd_validate(args) -> int:
    try:
        config = load_config(args.config)
    except (ValueError, KeyError, OSError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return 1
    print(f"ok: kind={config.kind} seed={config.seed}")
    return 0


def _cmd_oracles(_args) -> int:
    """Closed-form values used by the test suite."""
    from scipy import special, stats

    from .mkv_solver import gamma_zero_analytic
    from .sampling import PointMass

    phi1 = float(special.ndtr(-1.0))
    print("closed-form oracle values:")
    print(
        "  elastic first-passage, x0=0, kappa=1, t=1:  "
        f"{gamma_zero_analytic(1.0, PointMass(0.0), 1.0):.9f}"
        "   (= 1 - 2 e^{1/2} Phi(-1))"
    )
    print(f"  absorbing first-passage from 1 by t=1:      {2 * phi1:.9f}   (= 2 Phi(-1))")
    folded = float(stats.norm.pdf(1.0) * 2 + (2 * stats.norm.cdf(1.0) - 1))
    print(f"  mean of |1 + B_1| (reflected-path oracle):  {folded:.9f}")
    print("  blow-up threshold:                          alpha > 2 (m0 + 1/kappa)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="elastic-mkv",
        description="Particle, fixed-point, and PDE solvers for loss feedback "
        "through elastic boundaries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True, help="path to a JSON config")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_or = sub.add_parser("oracles", help="print the closed-form oracle values")
    p_or.set_defaults(func=_cmd_oracles)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
