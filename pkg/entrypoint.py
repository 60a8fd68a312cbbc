#!/usr/bin/env python3
"""
pfbmux - Command Line Interface
"""
import sys
import argparse
import logging
from pfbmux import (
    configure_logger,
    cmd_design,
    cmd_train,
    cmd_mux,
    cmd_eval,
    cmd_bench,
    setup_design_parser,
    setup_train_parser,
    setup_mux_parser,
    setup_eval_parser,
    setup_bench_parser,
)

logger = logging.getLogger("pfbmux")

COMMANDS = {
    "design": cmd_design,
    "train": cmd_train,
    "mux": cmd_mux,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None):
    """Main CLI entrypoint"""
    parser = argparse.ArgumentParser(prog="pfbmux", description="Polyphase filter-bank spectrum multiplexer")

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    design_parser = subparsers.add_parser("design", help="Design analysis and synthesis prototypes")
    setup_design_parser(design_parser)

    train_parser = subparsers.add_parser("train", help="Train the synthesis prototype")
    setup_train_parser(train_parser)

    mux_parser = subparsers.add_parser("mux", help="Multiplex streams into a wideband cf32 file")
    setup_mux_parser(mux_parser)

    eval_parser = subparsers.add_parser("eval", help="Evaluate methods over an SNR sweep")
    setup_eval_parser(eval_parser)

    bench_parser = subparsers.add_parser("bench", help="Time methods over a message-size ladder")
    setup_bench_parser(bench_parser)

    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_help()
        return 1

    args = parser.parse_args(argv)

    configure_logger(logger, debug=args.debug)

    command = COMMANDS.get(args.command)
    if command is None:
        parser.print_help()
        return 1
    return command(args)


if __name__ == "__main__":
    sys.exit(main())
