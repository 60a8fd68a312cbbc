"""Command-line interface for multiplexing streams into one wideband signal."""

import argparse
import json
import logging

from .config import analysis_prototypes, build_streams, load_config, plan_streams, synthesis_prototype
from .mux import METHODS, multiplex, stream_gains
from .utils import EXIT_OK, exit_code_for, join_path, setup_global_args, write_cf32
from .logger import configure_logger

logger = logging.getLogger("pfbmux")


def setup_parser(parser):
    """
    Setup the parser for the mux command.

    Args:
        parser (argparse.ArgumentParser): ArgumentParser object to add arguments to.

    Returns:
        argparse.ArgumentParser: Updated parser with added arguments.

    Arguments added:
        --method: Multiplexing method.
        --in: cf32 input files, one per configured stream.
        --allow-overlap: Permit streams to share synthesis subbands.
        Additional arguments from setup_global_args.
    """
    setup_global_args(parser)
    parser.add_argument("--method", type=str, choices=METHODS, default="nnpfb", help="Multiplexing method")
    parser.add_argument(
        "--in",
        dest="inputs",
        type=str,
        nargs="+",
        default=None,
        help="cf32 input files in stream order (default: the config's inputs or rendered payloads)",
    )
    parser.add_argument(
        "--allow-overlap", action="store_true", help="Allow streams to share synthesis subbands"
    )
    return parser


def mux_summary(buf, plan, gains):
    return {"samples_out": len(buf), "gain": gains, "plan": plan.to_dict()}


def run(args):
    """
    Multiplex the configured streams and write the wideband cf32 file.

    Prints a JSON summary {samples_out, gain, plan} to stdout.

    Args:
        args (argparse.Namespace): Command-line arguments including:
            - config (str): Experiment configuration.
            - method (str): 'nnpfb', 'direct' or 'dft'.
            - inputs (list): Optional cf32 inputs.
            - out (str): Output cf32 path; defaults to <output_dir>/<method>.cf32.

    Returns:
        int: 0 for success, 2 for plan errors, 4 for I/O errors.
    """
    try:
        cfg = load_config(args.config, args.seed)
        out = args.out or join_path(cfg.output_dir, f"{args.method}.cf32")
        streams = [spec for spec, _ in build_streams(cfg, args.inputs)]

        synthesis = analysis = None
        if args.method == "nnpfb":
            synthesis = synthesis_prototype(cfg)
            plan = plan_streams(cfg, args.allow_overlap)
            analysis = analysis_prototypes(cfg, [route.K_ana for route in plan.routes])
        buf, plan = multiplex(
            args.method,
            streams,
            cfg.wideband,
            synthesis,
            analysis,
            cfg.evaluation.dft_block,
            args.allow_overlap,
            args.threads,
        )
        gains = stream_gains(plan, synthesis, analysis) if synthesis is not None else {s.name: 1.0 for s in streams}

        write_cf32(out, buf)
        logger.info(f"Wrote wideband signal (method={args.method}, samples={len(buf)}, out={out})")
        print(json.dumps(mux_summary(buf, plan, gains)))
        return EXIT_OK
    except Exception as e:
        logger.error(f"Error multiplexing streams: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Multiplex streams into a wideband signal")
    parser = setup_parser(parser)
    args = parser.parse_args()

    configure_logger(logger, debug=args.debug)

    exit(run(args))
