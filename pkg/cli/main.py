import argparse
import logging
import os
import sys

import numpy as np
import torch

from cli.commands import COMMANDS, CommandResult
from cli.log import RunLog

EXIT_FAILED = 1
EXIT_BAD_INPUT = 2


def default_seed() -> int:
    value = os.environ.get("BCQ_SEED", "0")
    try:
        return int(value)
    except ValueError:
        raise SystemExit(f"BCQ_SEED must be an integer, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bcq", description="Mixed-precision binary-code quantization for transformers"
    )
    parser.add_argument("--seed", type=int, default=None, help="random seed (default $BCQ_SEED or 0)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for quantization")
    parser.add_argument("--verbose", "-v", action="store_true")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, command in COMMANDS.items():
        command.add_arguments(subparsers.add_parser(name, help=command.help))
    return parser


def run(argv: list[str] | None = None, log: RunLog | None = None) -> int:
    """Parse argv, run one command and return its exit code"""
    args = build_parser().parse_args(argv)
    if args.seed is None:
        args.seed = default_seed()
    if args.threads < 1:
        args.threads = 1

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    np.random.seed(args.seed % 2**32)
    torch.manual_seed(args.seed)

    log = log if log is not None else RunLog()
    try:
        result = COMMANDS[args.command].run(args, log)
    except ValueError as e:
        log.add_error(str(e))
        result = CommandResult.failed(EXIT_BAD_INPUT)
    except (RuntimeError, OSError) as e:
        log.add_error(str(e))
        result = CommandResult.failed(EXIT_FAILED)
    finally:
        log.dump(sys.stdout)

    if log.failed and result.succeeded:
        return EXIT_FAILED
    return result.exit_code
