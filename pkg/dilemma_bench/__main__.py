#!/usr/bin/env python3
"""
Main entry point for the Dilemma Bench tool.
"""

import argparse
import logging
import sys

from colorama import Fore, Style, init as colorama_init

from dilemma_bench.config import resolve_config
from dilemma_bench.exceptions import ConfigInvalid, DilemmaBenchError, MissingData
from dilemma_bench.runner import REPORT_KINDS, excluded_total, gen_trials, generate_reports, run_experiment, run_summary

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_MISSING_DATA = 4


def parse_args(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="dilemma-bench",
        description="Run and analyse iterated Prisoner's Dilemma experiments with scripted and model agents."
    )
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")

    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    # Run command
    run_parser = subparsers.add_parser("run", help="Run the configured experiment(s)")
    run_parser.add_argument("--config", required=True, help="Path to the experiment config (JSON)")
    run_parser.add_argument("--out", required=True, help="Output directory")
    run_parser.add_argument("--seed", type=int, help="Override the experiment seed")
    run_parser.add_argument("--concurrency", type=int, help="Override the concurrency budget")

    # Report command
    report_parser = subparsers.add_parser("report", help="Compute a report from a run's output directory")
    report_parser.add_argument("--out", required=True, help="Output directory of a finished run")
    report_parser.add_argument(
        "--report",
        choices=REPORT_KINDS,
        default="metrics",
        help="Report kind (default: metrics)"
    )
    report_parser.add_argument(
        "--baseline",
        help="Output directory of a baseline run to contrast against (contrasts only)"
    )

    # Trial generation command
    trials_parser = subparsers.add_parser("gen-trials", help="Write the reputation trial set for a seed")
    trials_parser.add_argument("--seed", type=int, required=True, help="Trial-set seed")
    trials_parser.add_argument("--out", required=True, help="Path to the JSONL file to write")

    # Config validation command
    validate_parser = subparsers.add_parser("validate-config", help="Check an experiment config")
    validate_parser.add_argument("--config", required=True, help="Path to the experiment config (JSON)")

    return parser.parse_args(argv)


def _print_error(message):
    print(f"{Fore.RED}Error:{Style.RESET_ALL} {message}", file=sys.stderr)


def _print_config_problems(error):
    _print_error("invalid configuration")
    for problem in error.problems:
        print(f"  - {problem}", file=sys.stderr)


def cmd_run(args):
    try:
        config = resolve_config(args.config, {"seed": args.seed, "concurrency": args.concurrency})
    except ConfigInvalid as e:
        _print_config_problems(e)
        return EXIT_CONFIG

    manifest = run_experiment(config, args.out)
    print(run_summary(args.out))

    excluded = excluded_total(manifest)
    if excluded:
        print(f"{Fore.YELLOW}Partial failure:{Style.RESET_ALL} {excluded} episode(s)/trial(s) excluded; "
              f"see the manifest in {args.out}")
        return EXIT_PARTIAL
    print(f"{Fore.GREEN}Done.{Style.RESET_ALL} Outputs written to {args.out}")
    return EXIT_OK


def cmd_report(args):
    try:
        written = generate_reports(args.out, args.report, baseline_dir=args.baseline)
    except MissingData as e:
        _print_error(str(e))
        return EXIT_MISSING_DATA
    for path in written:
        print(f"{Fore.GREEN}Wrote{Style.RESET_ALL} {path}")
    return EXIT_OK


def cmd_gen_trials(args):
    count = gen_trials(args.seed, args.out)
    print(f"{Fore.GREEN}Wrote{Style.RESET_ALL} {count} trials to {args.out}")
    return EXIT_OK


def cmd_validate_config(args):
    try:
        resolve_config(args.config)
    except ConfigInvalid as e:
        _print_config_problems(e)
        return EXIT_CONFIG
    print(f"{Fore.GREEN}Configuration is valid.{Style.RESET_ALL}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "report": cmd_report,
    "gen-trials": cmd_gen_trials,
    "validate-config": cmd_validate_config,
}


def main(argv=None):
    """Main entry point for the application."""
    args = parse_args(argv)
    colorama_init()

    if not args.command:
        _print_error("No command specified. Use one of: " + ", ".join(COMMANDS))
        return EXIT_ERROR

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, DilemmaBenchError) as e:
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        _print_error(str(e))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
