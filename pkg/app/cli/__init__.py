"""Command-line front end: ``run``, ``simulate``, ``evaluate`` and ``oracle-check``."""
import argparse
import logging
import sys
from typing import List, Optional

from app.config import configure_logging
from app.exceptions import ConfigError, MoefError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ORACLE_FAILURE = 1
EXIT_BAD_INPUT = 2
EXIT_USAGE = 64


class UsageError(Exception):
    """Invalid command-line flags."""


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer")
    if not 0 <= value <= 2 ** 64 - 1:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64 - 1], got {value}")
    return value


def build_parser() -> CliParser:
    from app.cli.commands import evaluate, oracle_check, run, simulate

    parser = CliParser(prog="moef", description="MoE-F online fusion of expert predictions")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (run, simulate, evaluate, oracle_check):
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)
    except (UsageError, ConfigError) as e:
        logger.error(f"{e}")
        return EXIT_USAGE
    except MoefError as e:
        logger.error(f"{e}")
        return EXIT_BAD_INPUT
    except OSError as e:
        logger.error(f"{e}")
        return EXIT_BAD_INPUT
