"""Command line entry point: ``animats {evolve,sweep,analyze,trial}``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .genome import GenomeError
from .runner import (ANALYSES, ConfigError, ExperimentConfig, MissingArtifactError, cli_analyze,
                     cli_evolve, cli_sweep, cli_trial, load_config, parse_overrides)
from .world import MapError


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = parse_overrides(args.set or [])
    for key in ("seed", "workers", "condition", "map"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    return cfg.replace(**changes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="animats", description="Evolve and analyze Markov Brain animat swarms.")
    parser.add_argument("--version", action="version", version=f"animats {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="key = value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--map", help="map file, or 'default'")

    p = sub.add_parser("evolve", help="run the evolution replicates of one condition")
    common(p)
    p.add_argument("--condition", help="G_single, G_0.25, G_0.50, G_0.75 or G_1.00")
    p.add_argument("-o", "--output", help="run directory (overrides the 'output' key)")

    p = sub.add_parser("sweep", help="test one genome at all 21 swarm sizes")
    common(p)
    p.add_argument("genomes", help="genome file (hex lines, or .bin)")
    p.add_argument("--index", type=int, default=0, help="which genome in the file")
    p.add_argument("-o", "--output", default="sweep.csv")

    p = sub.add_parser("analyze", help="post-hoc analyses of run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--which", choices=ANALYSES, required=True)
    p.add_argument("--sizes", help="comma-separated test swarm sizes")
    p.add_argument("--trials", type=int, default=1, help="fresh trials per genome and size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="analysis")

    p = sub.add_parser("trial", help="one trial with a full per-step log")
    common(p)
    p.add_argument("genomes")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--size", type=int, help="swarm size (default: the condition's)")
    p.add_argument("--condition")
    p.add_argument("-o", "--output", default="trial")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "evolve":
            cfg = _config(args)
            if args.output:
                cfg = cfg.replace(output=args.output)
            print(cli_evolve(cfg))
        elif args.command == "sweep":
            print(cli_sweep(args.genomes, _config(args), args.output, args.index))
        elif args.command == "trial":
            trial_log = cli_trial(args.genomes, _config(args), args.output, args.index, args.size)
            print(f"{args.output}: {trial_log.swarm_size} animats, "
                  f"mean f = {trial_log.fitness.mean():.4f}")
        else:
            sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else None
            for path in cli_analyze(args.run_dirs, args.which, args.output, sizes,
                                    args.trials, args.seed):
                print(path)
    except (ConfigError, GenomeError, MapError, MissingArtifactError, ValueError, IndexError) as exc:
        print(f"animats: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
