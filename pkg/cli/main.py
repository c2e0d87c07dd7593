"""
Command-line entry point.

Run with:
    python -m cli.main golden
    python -m cli.main duality --torus 3 --t 1
    python -m cli.main coalesce --config experiments/nn.ini --task theta
"""

import argparse
import sys
from typing import Optional, Sequence

from app.config import settings
from app.errors import (
    EXIT_CHECK_FAILED,
    EXIT_FAILURE,
    EXIT_NUMERICAL,
    EXIT_USAGE,
    CheckFailed,
    ConfigError,
    ToolkitError,
)
from app.logging_config import get_logger
from cli.commands import GROUPS

logger = get_logger(__name__)


def exit_code_for(exc: BaseException) -> int:
    """
    Convert an exception to the process exit status.

    Args:
        exc: The exception that ended the run

    Returns:
        2 for usage and config errors, 3 for failed checks, 4 for numerical
        and simulation failures, 1 for anything else
    """
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, CheckFailed):
        return EXIT_CHECK_FAILED
    if isinstance(exc, ToolkitError):
        return exc.exit_code or EXIT_NUMERICAL
    return EXIT_FAILURE


def common_parser() -> argparse.ArgumentParser:
    """Flags every subcommand accepts."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (INI sections)")
    common.add_argument("--seed", type=int, help=f"master seed (default {settings.DEFAULT_SEED})")
    common.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    common.add_argument("--out", help="output directory (default: OUTPUT_DIR/<run id>)")
    common.add_argument("--preset", choices=("nn", "moore"), help="neighbourhood preset")
    common.add_argument("--dim", type=int, help="lattice dimension")
    common.add_argument("--family", help="perturbation family name")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmp",
        description="Exact algebra and Monte Carlo diagnostics for voter-model perturbations",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = common_parser()
    for group in GROUPS:
        group.register(subparsers, common)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    problems = settings.validate()
    if problems:
        for problem in problems:
            print(f"error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.handler(args)
    except Exception as exc:
        code = exit_code_for(exc)
        if isinstance(exc, ToolkitError):
            logger.error(f"{args.command} failed: {exc.message}")
            print(f"error: {exc.message}", file=sys.stderr)
        else:
            logger.error(f"Unhandled exception in {args.command}: {exc}", exc_info=True)
            print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
