"""Command-line interface for training the synthesis prototype."""

import argparse
import logging
import numpy as np
import pandas as pd

from .config import load_config
from .errors import ConfigError
from .filterbank import AnalysisBankConfig
from .learn import (
    first_image_db,
    heldout_nmse,
    init_model_driven,
    init_random_normal,
    make_pair_mixture,
    make_training_pairs,
    mean_loss,
    save_trained_filter,
    train,
)
from .utils import EXIT_OK, exit_code_for, join_path, setup_global_args, write_csv, write_json
from .logger import configure_logger

logger = logging.getLogger("pfbmux")


def setup_parser(parser):
    """
    Setup the parser for the train command.

    Args:
        parser (argparse.ArgumentParser): ArgumentParser object to add arguments to.

    Returns:
        argparse.ArgumentParser: Updated parser with added arguments.

    Arguments added:
        --compare-init: Also report epoch-0 losses of both initializations.
        Additional arguments from setup_global_args.
    """
    setup_global_args(parser)
    parser.add_argument(
        "--compare-init",
        action="store_true",
        help="Report the epoch-0 loss of model-driven and random-normal initialization per scheme",
    )
    return parser


def training_banks(cfg):
    """
    Analysis bank and synthesis shape for the training section.

    Returns:
        tuple: (AnalysisBankConfig, SynthesisBankConfig without prototype)

    Raises:
        ConfigError: If K_syn is not divisible by the ratio or the banks do not factor.
    """
    wb = cfg.wideband
    ratio = cfg.training.ratio
    if wb.K_syn % ratio != 0:
        raise ConfigError(
            f"K_syn must be a multiple of the training ratio (field=training.ratio, "
            f"K_syn={wb.K_syn}, ratio={ratio})"
        )
    K_ana = wb.K_syn // ratio
    if K_ana % wb.I != 0:
        raise ConfigError(f"Analysis bank does not factor (field=training.ratio, K_ana={K_ana}, I={wb.I})")
    acfg = AnalysisBankConfig(K_ana, K_ana // wb.I, wb.I, cfg.analysis.design(K_ana))
    return acfg, wb.synthesis_shape()


def initial_filter(cfg, kind=None):
    """Starting synthesis taps for the configured (or given) initialization."""
    K = cfg.wideband.K_syn
    total_len = cfg.synthesis.length(K)
    cutoff = cfg.synthesis.cutoff(K)
    kind = kind or cfg.training.init
    if kind == "model_driven":
        return init_model_driven(K, cfg.wideband.L, cutoff, total_len, cfg.training.init_window)
    return init_random_normal(total_len, cfg.seed, cutoff)


def heldout_seed(seed):
    return int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])


def compare_initializations(cfg, acfg, scfg_shape, workers=0):
    """
    Epoch-0 loss of each initialization on each scheme of the training mixture.

    Returns:
        pandas.DataFrame: Columns scheme, init, loss.
    """
    t = cfg.training
    inits = {kind: initial_filter(cfg, kind) for kind in ("model_driven", "random_normal")}
    rows = []
    for scheme, count in t.mixture.items():
        if count == 0:
            continue
        pairs = make_training_pairs(scheme, count, t.sample_rate_hz, t.ratio, cfg.seed, t.n_symbols, workers)
        for kind, syn in inits.items():
            loss = mean_loss(pairs, acfg, syn, scfg_shape, workers)
            logger.info(f"Initial loss (scheme={scheme}, init={kind}, loss={loss:.6e})")
            rows.append({"scheme": scheme, "init": kind, "loss": loss})
    return pd.DataFrame(rows, columns=["scheme", "init", "loss"])


def heldout_report(cfg, acfg_init, acfg_trained, scfg_shape, init, trained, workers=0):
    """
    Held-out NMSE per scheme before and after training.

    Returns:
        pandas.DataFrame: Columns scheme, pairs, nmse_db_init, nmse_db_trained.
    """
    t = cfg.training
    seed = heldout_seed(cfg.seed)
    rows = []
    for scheme, count in t.heldout.items():
        if count == 0:
            continue
        pairs = make_training_pairs(scheme, count, t.sample_rate_hz, t.ratio, seed, t.n_symbols, workers)
        before = heldout_nmse(pairs, acfg_init, init, scfg_shape, workers)
        after = heldout_nmse(pairs, acfg_trained, trained, scfg_shape, workers)
        logger.info(f"Held-out NMSE (scheme={scheme}, init={before:.2f} dB, trained={after:.2f} dB)")
        rows.append({"scheme": scheme, "pairs": count, "nmse_db_init": before, "nmse_db_trained": after})
    return pd.DataFrame(rows, columns=["scheme", "pairs", "nmse_db_init", "nmse_db_trained"])


def run(args):
    """
    Train the synthesis prototype and report held-out quality.

    Writes trained_filter.json, loss_curve.csv, heldout.csv and
    train_summary.json (plus compare_init.csv with --compare-init) under the
    output directory.

    Args:
        args (argparse.Namespace): Command-line arguments including:
            - config (str): Experiment configuration with a training section.
            - out (str): Output directory; defaults to the config's output_dir.
            - seed (int): Optional seed override.
            - threads (int): Worker threads for per-pair work.
            - compare_init (bool): Also compare initializations.

    Returns:
        int: 0 on convergence, 3 on divergence, 2 for configuration errors.
    """
    try:
        cfg = load_config(args.config, args.seed)
        if cfg.training is None:
            raise ConfigError("Missing required config field (field=training)")
        out = args.out or cfg.output_dir
        t = cfg.training
        acfg, scfg_shape = training_banks(cfg)
        init = initial_filter(cfg)

        pairs = make_pair_mixture(t.mixture, t.sample_rate_hz, t.ratio, cfg.seed, t.n_symbols, args.threads)
        result = train(pairs, t.optimizer, init, acfg, scfg_shape, args.threads)

        acfg_trained = AnalysisBankConfig(acfg.K, acfg.M, acfg.I, result.analysis)
        heldout = heldout_report(cfg, acfg, acfg_trained, scfg_shape, init, result.synthesis, args.threads)

        image_init = first_image_db(init.materialize(), scfg_shape.L)
        image_trained = first_image_db(result.synthesis.materialize(), scfg_shape.L)
        metadata = {
            "name": cfg.name,
            "seed": cfg.seed,
            "epochs": t.optimizer.epochs,
            "optimizer": t.optimizer.optimizer,
            "lr": t.optimizer.lr,
            "init": t.init,
            "ratio": t.ratio,
            "final_loss": result.final_loss,
            "first_image_db_init": image_init,
            "first_image_db_trained": image_trained,
        }
        if t.optimizer.train_analysis:
            metadata["analysis"] = result.analysis.to_dict()

        save_trained_filter(join_path(out, "trained_filter.json"), result.synthesis, scfg_shape, metadata)
        curve = pd.DataFrame({"epoch": np.arange(len(result.losses)), "loss": result.losses})
        write_csv(join_path(out, "loss_curve.csv"), curve)
        write_csv(join_path(out, "heldout.csv"), heldout)

        summary = dict(metadata, heldout_nmse_db=dict(zip(heldout["scheme"], heldout["nmse_db_trained"])))
        summary.pop("analysis", None)
        if args.compare_init:
            comparison = compare_initializations(cfg, acfg, scfg_shape, args.threads)
            write_csv(join_path(out, "compare_init.csv"), comparison)
            summary["initial_loss"] = {
                f"{row.scheme}/{row.init}": row.loss for row in comparison.itertuples()
            }
        write_json(join_path(out, "train_summary.json"), summary)
        logger.info(
            f"Trained synthesis filter (final_loss={result.final_loss:.6e}, "
            f"first_image_db={image_trained:.2f}, out={out})"
        )
        return EXIT_OK
    except Exception as e:
        logger.error(f"Error training synthesis filter: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Train the synthesis prototype")
    parser = setup_parser(parser)
    args = parser.parse_args()

    configure_logger(logger, debug=args.debug)

    exit(run(args))
