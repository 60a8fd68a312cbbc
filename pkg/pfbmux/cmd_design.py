"""Command-line interface for designing the analysis and synthesis prototypes."""

import argparse
import logging
import pandas as pd

from .config import analysis_prototypes, load_config, plan_streams, synthesis_prototype
from .numerics import freq_response
from .utils import EXIT_OK, exit_code_for, join_path, setup_global_args, write_csv, write_json
from .logger import configure_logger

logger = logging.getLogger("pfbmux")

MIN_RESPONSE_POINTS = 4096


def setup_parser(parser):
    """
    Setup the parser for the design command.

    Args:
        parser (argparse.ArgumentParser): ArgumentParser object to add arguments to.

    Returns:
        argparse.ArgumentParser: Updated parser with added arguments.

    Arguments added:
        --points: Frequency grid size for the response CSV.
        Additional arguments from setup_global_args.
    """
    setup_global_args(parser)
    parser.add_argument(
        "--points",
        type=int,
        default=MIN_RESPONSE_POINTS,
        help=f"Frequency points in the response CSV (default: {MIN_RESPONSE_POINTS})",
    )
    return parser


def analysis_sizes(cfg):
    """Analysis subband counts an experiment needs: one per planned stream plus the training bank."""
    Ks = [route.K_ana for route in plan_streams(cfg).routes]
    if cfg.training is not None:
        Ks.append(cfg.wideband.K_syn // cfg.training.ratio)
    return sorted(set(Ks))


def filter_entry(prototype):
    entry = prototype.to_dict()
    entry["num_taps"] = len(prototype)
    entry["bandwidth_norm"] = 2 * prototype.cutoff_norm
    return entry


def response_frame(label, K, prototype, points):
    omega, magnitude_db = freq_response(prototype, max(points, len(prototype)))
    return pd.DataFrame({"filter": label, "K": K, "omega": omega, "magnitude_db": magnitude_db})


def design(cfg, points=MIN_RESPONSE_POINTS):
    """
    Design every prototype an experiment uses.

    Args:
        cfg (ExperimentConfig): Parsed configuration.
        points (int, optional): Frequency grid size.

    Returns:
        tuple: (filters document, response DataFrame)
    """
    analysis = analysis_prototypes(cfg, analysis_sizes(cfg))
    synthesis = synthesis_prototype(cfg)
    doc = {
        "name": cfg.name,
        "analysis": {str(K): filter_entry(p) for K, p in analysis.items()},
        "synthesis": dict(filter_entry(synthesis), K=cfg.wideband.K_syn, L=cfg.wideband.L, I=cfg.wideband.I),
    }
    frames = [response_frame("analysis", K, p, points) for K, p in analysis.items()]
    frames.append(response_frame("synthesis", cfg.wideband.K_syn, synthesis, points))
    for K, p in analysis.items():
        logger.info(f"Designed analysis prototype (K={K}, taps={len(p)}, cutoff_norm={p.cutoff_norm:.6g})")
    logger.info(
        f"Designed synthesis prototype (K={cfg.wideband.K_syn}, taps={len(synthesis)}, "
        f"cutoff_norm={synthesis.cutoff_norm:.6g})"
    )
    return doc, pd.concat(frames, ignore_index=True)


def run(args):
    """
    Design the prototypes and write them with their frequency responses.

    Writes filters.json and freq_response.csv under the output directory.

    Args:
        args (argparse.Namespace): Command-line arguments including:
            - config (str): Experiment configuration path.
            - out (str): Output directory; defaults to the config's output_dir.
            - points (int): Frequency grid size.

    Returns:
        int: 0 for success, otherwise the exit code for the failure.
    """
    try:
        cfg = load_config(args.config, args.seed)
        out = args.out or cfg.output_dir
        doc, response = design(cfg, args.points)
        write_json(join_path(out, "filters.json"), doc)
        write_csv(join_path(out, "freq_response.csv"), response)
        logger.info(f"Wrote filter design (out={out})")
        return EXIT_OK
    except Exception as e:
        logger.error(f"Error designing filters: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Design the prototype filters")
    parser = setup_parser(parser)
    args = parser.parse_args()

    configure_logger(logger, debug=args.debug)

    exit(run(args))
