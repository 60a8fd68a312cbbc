"""Command-line interface for timing the multiplexing methods."""

import argparse
import logging
import time
import numpy as np
import pandas as pd

from .config import analysis_prototypes, build_streams, load_config, plan_streams, synthesis_prototype
from .mux import multiplex
from .utils import EXIT_OK, exit_code_for, join_path, setup_global_args, write_csv
from .logger import configure_logger

logger = logging.getLogger("pfbmux")

COLUMNS = ["method", "size", "samples_in", "repetitions", "median_s", "iqr_s", "min_s", "max_s"]


def setup_parser(parser):
    """
    Setup the parser for the bench command.

    Args:
        parser (argparse.ArgumentParser): ArgumentParser object to add arguments to.

    Returns:
        argparse.ArgumentParser: Updated parser with added arguments.
    """
    setup_global_args(parser)
    return parser


def time_method(method, streams, cfg, synthesis, analysis, repetitions, workers=0):
    """Wall-clock seconds of each of repetitions multiplex calls."""
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        multiplex(method, streams, cfg.wideband, synthesis, analysis, cfg.evaluation.dft_block, workers=workers)
        times.append(time.perf_counter() - t0)
    return np.array(times)


def summarize(method, size, samples_in, times):
    q1, median, q3 = np.percentile(times, [25, 50, 75])
    return {
        "method": method,
        "size": size,
        "samples_in": samples_in,
        "repetitions": len(times),
        "median_s": float(median),
        "iqr_s": float(q3 - q1),
        "min_s": float(np.min(times)),
        "max_s": float(np.max(times)),
    }


def bench(cfg, workers=0):
    """
    Time every configured method over the message-size ladder.

    Payloads are rendered once per size and prototype design is outside the
    timed region. Methods run one after another; workers is the per-stream
    thread count inside a method.

    Args:
        cfg (ExperimentConfig): Parsed configuration.
        workers (int, optional): Worker threads inside each method.

    Returns:
        pandas.DataFrame: One row per (method, size) with median and IQR.
    """
    plan = plan_streams(cfg)
    synthesis = synthesis_prototype(cfg)
    analysis = analysis_prototypes(cfg, [route.K_ana for route in plan.routes])
    rows = []
    for size in cfg.bench.sizes:
        streams = [spec for spec, _ in build_streams(cfg, n_symbols=size)]
        samples_in = sum(len(s.payload) for s in streams)
        for method in cfg.bench.methods:
            times = time_method(method, streams, cfg, synthesis, analysis, cfg.bench.repetitions, workers)
            row = summarize(method, size, samples_in, times)
            logger.info(
                f"Benchmarked method (method={method}, size={size}, "
                f"median_s={row['median_s']:.6f}, iqr_s={row['iqr_s']:.6f})"
            )
            rows.append(row)
    return pd.DataFrame(rows, columns=COLUMNS)


def run(args):
    """
    Run the benchmark and write bench.csv.

    Args:
        args (argparse.Namespace): Command-line arguments including:
            - config (str): Experiment configuration with streams and a bench section.
            - out (str): Output directory; defaults to the config's output_dir.
            - threads (int): Worker threads inside each method.

    Returns:
        int: 0 for success, otherwise the exit code for the failure.
    """
    try:
        cfg = load_config(args.config, args.seed)
        out = args.out or cfg.output_dir
        report = bench(cfg, args.threads)
        write_csv(join_path(out, "bench.csv"), report)
        logger.info(f"Wrote benchmark report (rows={len(report)}, out={out})")
        return EXIT_OK
    except Exception as e:
        logger.error(f"Error benchmarking methods: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Benchmark multiplexing methods")
    parser = setup_parser(parser)
    args = parser.parse_args()

    configure_logger(logger, debug=args.debug)

    exit(run(args))
