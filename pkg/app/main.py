import argparse
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from app.cli import crossval, evaluate, inspect, predict, synth, train
from app.core.errors import LoTeNetError
from app.core.logging import get_logger, setup_logging

logger = get_logger(__name__)

EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lotenet",
        description="Locally orderless tensor network image classifier",
    )
    parser.add_argument("--log-level", default=None, help="override LOTENET_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register subcommands
    train.register(subparsers)
    evaluate.register(subparsers)
    predict.register(subparsers)
    inspect.register(subparsers)
    synth.register(subparsers)
    crossval.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code: 0 ok, 2 usage/config, 3 divergence, 4 shape."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return int(error.code or 0)

    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except LoTeNetError as error:
        logger.error(f"{args.command} failed: {error}")
        print(f"error: {error}", file=sys.stderr)
        return error.exit_code
    except ValidationError as error:
        print(f"error: invalid configuration: {error.errors()[0]['msg']}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
