"""Command-line entry point: ``memodiff run <config> [--out DIR] [--threads N] [--seed S]``."""

from __future__ import annotations

import argparse
import sys

from .experiments import OUTPUT_ENV_VAR, run_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memodiff",
        description="Run memory/delay diffusion experiments from a TOML scenario file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario and write CSV tables plus summary.txt")
    run.add_argument("config", help="path to the scenario configuration file")
    run.add_argument("--out", default=None, help=f"output directory (default: config value or ${OUTPUT_ENV_VAR})")
    run.add_argument("--threads", type=int, default=1, help="parallel workers for sweep members")
    run.add_argument("--seed", type=int, default=0, help="seed for randomized ensembles")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        code = run_scenario(args.config, out_dir=args.out, threads=args.threads, seed=args.seed)
        if argv is None:
            sys.exit(code)
        return code
    return 2  # pragma: no cover


if __name__ == "__main__":
    main()
