"""Command-line interface for evaluating multiplexing methods over an SNR sweep."""

import argparse
import math
import logging
import numpy as np
import pandas as pd

from .config import analysis_prototypes, build_streams, load_config, plan_streams, synthesis_prototype
from .errors import TimingError
from .mux import demux_reference, multiplex
from .numerics import nmse_db
from .utils import EXIT_OK, exit_code_for, join_path, parallel_map, setup_global_args, write_csv, write_json
from .waveforms import awgn, qpsk_ber
from .logger import configure_logger

logger = logging.getLogger("pfbmux")

DEFAULT_MAX_LAG = 512
COLUMNS = ["snr_db", "method", "stream", "nmse_db", "ber"]


def setup_parser(parser):
    """
    Setup the parser for the eval command.

    Args:
        parser (argparse.ArgumentParser): ArgumentParser object to add arguments to.

    Returns:
        argparse.ArgumentParser: Updated parser with added arguments.
    """
    setup_global_args(parser)
    return parser


def noise_seed(seed, snr_index):
    return int(np.random.SeedSequence([seed, 2, snr_index]).generate_state(1)[0])


def stream_ber(estimate, spec, symbols, sps):
    """BER of a recovered QPSK stream; NaN for other schemes or when timing is lost."""
    if spec.scheme != "qpsk" or symbols is None:
        return math.nan
    try:
        return qpsk_ber(estimate, symbols, sps)
    except TimingError:
        logger.warning(f"No BER for stream, timing not recovered (stream={spec.name})")
        return math.nan


def evaluate(cfg, workers=0):
    """
    Multiplex with every configured method, add noise, demultiplex and score.

    Each method's wideband output gets the same noise realization per SNR
    point; every stream is recovered with the reference receiver and scored
    against its clean payload.

    Args:
        cfg (ExperimentConfig): Parsed configuration.
        workers (int, optional): Worker threads, one method per task.

    Returns:
        pandas.DataFrame: One row per (snr_db, method, stream) with nmse_db and ber.
    """
    built = build_streams(cfg)
    streams = [spec for spec, _ in built]
    sps = {s.name: s.sps for s in cfg.streams}
    max_lag = cfg.evaluation.max_lag if cfg.evaluation.max_lag is not None else DEFAULT_MAX_LAG
    plan = plan_streams(cfg)
    synthesis = synthesis_prototype(cfg)
    analysis = analysis_prototypes(cfg, [route.K_ana for route in plan.routes])

    def score(method):
        wideband, _ = multiplex(
            method, streams, cfg.wideband, synthesis, analysis, cfg.evaluation.dft_block
        )
        rows = []
        for i, snr in enumerate(cfg.evaluation.snr_db):
            noisy = awgn(wideband, snr, noise_seed(cfg.seed, i))
            for spec, symbols in built:
                estimate = demux_reference(noisy, spec, cfg.wideband)
                nmse = nmse_db(estimate, spec.payload, max_lag)
                ber = stream_ber(estimate, spec, symbols, sps[spec.name])
                logger.debug(f"Scored stream (method={method}, snr_db={snr}, stream={spec.name}, nmse_db={nmse:.2f})")
                rows.append({"snr_db": snr, "method": method, "stream": spec.name, "nmse_db": nmse, "ber": ber})
        logger.info(f"Evaluated method (method={method}, snr_points={len(cfg.evaluation.snr_db)})")
        return rows

    results = parallel_map(score, cfg.evaluation.methods, workers)
    return pd.DataFrame([row for rows in results for row in rows], columns=COLUMNS)


def snr_at_ber(metrics, target=1e-3):
    """
    SNR at which each (method, stream) BER curve first drops to a target.

    The crossing is interpolated linearly in log10(BER) between the two
    bracketing SNR points; a zero BER is floored at target / 100.

    Args:
        metrics (pandas.DataFrame): Output of evaluate.
        target (float, optional): BER to locate. Default is 1e-3.

    Returns:
        pandas.DataFrame: Columns method, stream, snr_db. snr_db is -inf when
            the first noisy point is already at or below the target and +inf
            when the curve never reaches it.
    """
    noisy = metrics[np.isfinite(metrics["snr_db"]) & metrics["ber"].notna()]
    floor = target / 100
    rows = []
    for (method, stream), group in noisy.groupby(["method", "stream"], sort=True):
        curve = group.sort_values("snr_db")
        snr = curve["snr_db"].to_numpy(dtype=float)
        log_ber = np.log10(np.maximum(curve["ber"].to_numpy(dtype=float), floor))
        log_target = math.log10(target)
        crossing = math.inf
        if log_ber[0] <= log_target:
            crossing = -math.inf
        else:
            for i in range(1, snr.shape[0]):
                if log_ber[i] <= log_target:
                    frac = (log_ber[i - 1] - log_target) / (log_ber[i - 1] - log_ber[i])
                    crossing = float(snr[i - 1] + frac * (snr[i] - snr[i - 1]))
                    break
        rows.append({"method": method, "stream": stream, "snr_db": crossing})
    return pd.DataFrame(rows, columns=["method", "stream", "snr_db"])


def run(args):
    """
    Evaluate the configured methods and write metrics.csv and metrics.json.

    Args:
        args (argparse.Namespace): Command-line arguments including:
            - config (str): Experiment configuration with streams and an evaluation section.
            - out (str): Output directory; defaults to the config's output_dir.
            - threads (int): Worker threads.

    Returns:
        int: 0 for success, otherwise the exit code for the failure.
    """
    try:
        cfg = load_config(args.config, args.seed)
        out = args.out or cfg.output_dir
        metrics = evaluate(cfg, args.threads)
        write_csv(join_path(out, "metrics.csv"), metrics)
        write_json(join_path(out, "metrics.json"), metrics.to_dict(orient="records"))
        for row in snr_at_ber(metrics).itertuples():
            logger.info(f"SNR at BER 1e-3 (method={row.method}, stream={row.stream}, snr_db={row.snr_db:.2f})")
        logger.info(f"Wrote evaluation metrics (rows={len(metrics)}, out={out})")
        return EXIT_OK
    except Exception as e:
        logger.error(f"Error evaluating methods: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Evaluate multiplexing methods")
    parser = setup_parser(parser)
    args = parser.parse_args()

    configure_logger(logger, debug=args.debug)

    exit(run(args))
