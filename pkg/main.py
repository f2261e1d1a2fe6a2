import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from commands import bench, gen, replay, simulate, tune, validate
from commands.utils import runtime
from errors import DomainError, OlsrTuneError

logger = logging.getLogger(__name__)

COMMANDS = (gen, simulate, tune, validate, bench, replay)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="olsrtune",
        description="Energy-aware OLSR tuning for vehicular networks: simulate, tune, validate, benchmark.",
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else runtime.log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args.argv = argv
    try:
        return args.handler(args)
    except OlsrTuneError as e:
        logger.error(f"{args.command} failed: {e.detail}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"{args.command} failed: invalid configuration: {e}")
        return DomainError.exit_code


if __name__ == "__main__":
    sys.exit(main())
