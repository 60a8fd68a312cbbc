"""Experiment configuration: a JSON document parsed into a tree of dataclasses."""

import math
import numpy as np
import logging
from dataclasses import dataclass, field

from .errors import ConfigError
from .numerics import WINDOWS, ComplexBuf, design_windowed_sinc
from .filterbank import DEFAULT_TAPS_PER_SUBBAND
from .learn import DEFAULT_MIXTURE, OPTIMIZERS, TrainConfig, load_trained_filter
from .mux import METHODS, StreamSpec, WidebandSpec, plan_mux
from .waveforms import SCHEMES, render
from .utils import read_cf32, read_json

logger = logging.getLogger("pfbmux")

_REQUIRED = object()
INITS = ("model_driven", "random_normal")


def _get(doc, key, path, kind, default=_REQUIRED):
    """
    Fetch and type-check one field of a config section.

    Args:
        doc (dict): Section being parsed.
        key (str): Field name.
        path (str): Dotted path of the section, used in error messages.
        kind (type or tuple): Accepted Python type(s).
        default: Value when the field is absent; omit to make it required.

    Returns:
        The field value.

    Raises:
        ConfigError: If the field is missing or has the wrong type.
    """
    where = f"{path}.{key}" if path else key
    if key not in doc or doc[key] is None:
        if default is _REQUIRED:
            raise ConfigError(f"Missing required config field (field={where})")
        return default
    value = doc[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"Config field has the wrong type (field={where}, value={value!r})")
    if not isinstance(value, kind):
        raise ConfigError(f"Config field has the wrong type (field={where}, value={value!r})")
    return value


def _section(doc, key, path=""):
    value = _get(doc, key, path, dict, {})
    return value


def _choice(value, choices, where):
    if value not in choices:
        raise ConfigError(f"Config field has an unknown value (field={where}, value={value!r}, choices={choices})")
    return value


def _cutoff(doc, path):
    cutoff = _get(doc, "cutoff_norm", path, float, None)
    bandwidth = _get(doc, "bandwidth_norm", path, float, None)
    if cutoff is not None and bandwidth is not None:
        raise ConfigError(f"Give either cutoff_norm or bandwidth_norm, not both (field={path})")
    if bandwidth is not None:
        cutoff = bandwidth / 2
    if cutoff is not None and not (0 < cutoff <= math.pi):
        raise ConfigError(f"Cutoff must be in (0, pi] (field={path}, cutoff_norm={cutoff})")
    return cutoff


def _snr(value, where):
    if isinstance(value, str) and value.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ConfigError(f"SNR must be a number or 'inf' (field={where}, value={value!r})")


@dataclass(frozen=True)
class StreamConfig:
    name: str
    scheme: str
    sample_rate_hz: float
    center_offset_hz: float
    n_symbols: int = 256
    sps: int = 2
    input: str = None
    seed: int = None


@dataclass(frozen=True)
class AnalysisFilterConfig:
    """Analysis prototypes: taps_per_subband*K + 1 taps at pi/K unless a cutoff is given."""

    taps_per_subband: int = DEFAULT_TAPS_PER_SUBBAND
    cutoff_norm: float = None
    window: str = "kaiser"
    beta: float = 8.0

    def design(self, K):
        cutoff = self.cutoff_norm if self.cutoff_norm is not None else math.pi / K
        return design_windowed_sinc(cutoff, self.taps_per_subband * K + 1, self.window, self.beta)


@dataclass(frozen=True)
class SynthesisFilterConfig:
    """Synthesis prototype: designed from these fields or loaded from trained_path."""

    num_taps: int = None
    cutoff_norm: float = None
    window: str = "kaiser"
    beta: float = 8.0
    trained_path: str = None

    def length(self, K):
        return self.num_taps if self.num_taps is not None else DEFAULT_TAPS_PER_SUBBAND * K + 1

    def cutoff(self, K):
        return self.cutoff_norm if self.cutoff_norm is not None else min(2 * math.pi / K, math.pi)

    def design(self, K):
        return design_windowed_sinc(self.cutoff(K), self.length(K), self.window, self.beta)


@dataclass(frozen=True)
class TrainingConfig:
    sample_rate_hz: float
    ratio: int
    mixture: dict = field(default_factory=lambda: dict(DEFAULT_MIXTURE))
    heldout: dict = field(default_factory=lambda: {"qpsk": 10, "zigbee_oqpsk": 10, "gmsk": 10})
    n_symbols: int = 256
    init: str = "model_driven"
    init_window: str = "rect"
    optimizer: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True)
class EvaluationConfig:
    methods: tuple = METHODS
    snr_db: tuple = (math.inf,)
    max_lag: int = None
    dft_block: int = None


@dataclass(frozen=True)
class BenchConfig:
    methods: tuple = METHODS
    sizes: tuple = (256, 512, 1024, 2048)
    repetitions: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A full experiment description.

    Attributes:
        name (str): Experiment label.
        seed (int): Top-level seed.
        output_dir (str): Default output location (local or s3://).
        wideband (WidebandSpec): Wideband rate and synthesis bank shape.
        streams (tuple): StreamConfig entries.
        analysis (AnalysisFilterConfig): Analysis prototype rule.
        synthesis (SynthesisFilterConfig): Synthesis prototype settings.
        training (TrainingConfig or None): Training section, if present.
        evaluation (EvaluationConfig): Evaluation section.
        bench (BenchConfig): Benchmark section.
    """

    name: str
    seed: int
    output_dir: str
    wideband: WidebandSpec
    streams: tuple
    analysis: AnalysisFilterConfig
    synthesis: SynthesisFilterConfig
    training: TrainingConfig
    evaluation: EvaluationConfig
    bench: BenchConfig


def _parse_wideband(doc):
    section = _get(doc, "wideband", "", dict)
    rate = _get(section, "sample_rate_hz", "wideband", float)
    K_syn = _get(section, "K_syn", "wideband", int)
    I = _get(section, "I", "wideband", int, 2)
    try:
        return WidebandSpec(rate, K_syn, I)
    except ConfigError as e:
        raise ConfigError(f"Invalid wideband section (field=wideband): {e}") from e


def _parse_streams(doc):
    entries = _get(doc, "streams", "", list, [])
    streams = []
    for i, entry in enumerate(entries):
        path = f"streams[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"Stream entry must be an object (field={path})")
        scheme = _choice(_get(entry, "scheme", path, str), SCHEMES, f"{path}.scheme")
        streams.append(
            StreamConfig(
                name=_get(entry, "name", path, str, f"stream{i}"),
                scheme=scheme,
                sample_rate_hz=_get(entry, "sample_rate_hz", path, float),
                center_offset_hz=_get(entry, "center_offset_hz", path, float, 0.0),
                n_symbols=_get(entry, "n_symbols", path, int, 256),
                sps=_get(entry, "sps", path, int, 2),
                input=_get(entry, "input", path, str, None),
                seed=_get(entry, "seed", path, int, None),
            )
        )
    names = [s.name for s in streams]
    if len(set(names)) != len(names):
        raise ConfigError(f"Stream names must be unique (field=streams, names={names})")
    return tuple(streams)


def _parse_filters(doc):
    section = _section(doc, "filters")
    ana = _get(section, "analysis", "filters", dict, {})
    syn = _get(section, "synthesis", "filters", dict, {})
    analysis = AnalysisFilterConfig(
        taps_per_subband=_get(ana, "taps_per_subband", "filters.analysis", int, DEFAULT_TAPS_PER_SUBBAND),
        cutoff_norm=_cutoff(ana, "filters.analysis"),
        window=_choice(_get(ana, "window", "filters.analysis", str, "kaiser"), WINDOWS, "filters.analysis.window"),
        beta=_get(ana, "beta", "filters.analysis", float, 8.0),
    )
    num_taps = _get(syn, "num_taps", "filters.synthesis", int, None)
    if num_taps is not None and (num_taps < 1 or num_taps % 2 == 0):
        raise ConfigError(f"Synthesis length must be odd (field=filters.synthesis.num_taps, value={num_taps})")
    synthesis = SynthesisFilterConfig(
        num_taps=num_taps,
        cutoff_norm=_cutoff(syn, "filters.synthesis"),
        window=_choice(_get(syn, "window", "filters.synthesis", str, "kaiser"), WINDOWS, "filters.synthesis.window"),
        beta=_get(syn, "beta", "filters.synthesis", float, 8.0),
        trained_path=_get(syn, "trained_path", "filters.synthesis", str, None),
    )
    return analysis, synthesis


def _parse_mixture(section, key, default):
    mixture = _get(section, key, "training", dict, default)
    for scheme, count in mixture.items():
        _choice(scheme, SCHEMES, f"training.{key}")
        if not isinstance(count, int) or isinstance(count, bool) or count < 0:
            raise ConfigError(f"Pair count must be a non-negative integer (field=training.{key}.{scheme})")
    return dict(mixture)


def _parse_training(doc, seed):
    if "training" not in doc:
        return None
    section = _get(doc, "training", "", dict)
    path = "training"
    epochs = _get(section, "epochs", path, int, 200)
    if epochs < 1:
        raise ConfigError(f"Training needs at least one epoch (field=training.epochs, value={epochs})")
    optimizer = _choice(_get(section, "optimizer", path, str, "adam"), OPTIMIZERS, "training.optimizer")
    lr = _get(section, "lr", path, float, 1e-3)
    if optimizer != "line_search" and not lr > 0:
        raise ConfigError(f"Learning rate must be positive (field=training.lr, value={lr})")
    ratio = _get(section, "ratio", path, int)
    if ratio < 2:
        raise ConfigError(f"Rate ratio must be at least 2 (field=training.ratio, value={ratio})")
    try:
        train_cfg = TrainConfig(
            epochs=epochs,
            optimizer=optimizer,
            lr=lr,
            beta1=_get(section, "beta1", path, float, 0.9),
            beta2=_get(section, "beta2", path, float, 0.999),
            eps=_get(section, "eps", path, float, 1e-8),
            batch=_get(section, "batch", path, int, 0),
            seed=seed,
            train_analysis=_get(section, "train_analysis", path, bool, False),
        )
    except ConfigError as e:
        raise ConfigError(f"Invalid training section (field=training): {e}") from e
    return TrainingConfig(
        sample_rate_hz=_get(section, "sample_rate_hz", path, float),
        ratio=ratio,
        mixture=_parse_mixture(section, "mixture", dict(DEFAULT_MIXTURE)),
        heldout=_parse_mixture(section, "heldout", {"qpsk": 10, "zigbee_oqpsk": 10, "gmsk": 10}),
        n_symbols=_get(section, "n_symbols", path, int, 256),
        init=_choice(_get(section, "init", path, str, "model_driven"), INITS, "training.init"),
        init_window=_choice(_get(section, "init_window", path, str, "rect"), WINDOWS, "training.init_window"),
        optimizer=train_cfg,
    )


def _parse_methods(section, path):
    methods = _get(section, "methods", path, list, list(METHODS))
    for m in methods:
        _choice(m, METHODS, f"{path}.methods")
    return tuple(methods)


def _parse_evaluation(doc):
    section = _section(doc, "evaluation")
    snrs = _get(section, "snr_db", "evaluation", list, ["inf"])
    return EvaluationConfig(
        methods=_parse_methods(section, "evaluation"),
        snr_db=tuple(_snr(v, f"evaluation.snr_db[{i}]") for i, v in enumerate(snrs)),
        max_lag=_get(section, "max_lag", "evaluation", int, None),
        dft_block=_get(section, "dft_block", "evaluation", int, None),
    )


def _parse_bench(doc):
    section = _section(doc, "bench")
    repetitions = _get(section, "repetitions", "bench", int, 10)
    if repetitions < 1:
        raise ConfigError(f"Bench needs at least one repetition (field=bench.repetitions, value={repetitions})")
    sizes = _get(section, "sizes", "bench", list, [256, 512, 1024, 2048])
    if not sizes or not all(isinstance(s, int) and s > 0 for s in sizes):
        raise ConfigError(f"Bench sizes must be positive integers (field=bench.sizes, value={sizes})")
    return BenchConfig(methods=_parse_methods(section, "bench"), sizes=tuple(sizes), repetitions=repetitions)


def parse_config(doc):
    """
    Validate a decoded config document.

    Args:
        doc (dict): Decoded JSON.

    Returns:
        ExperimentConfig: Parsed configuration.

    Raises:
        ConfigError: Naming the offending field path.
    """
    if not isinstance(doc, dict):
        raise ConfigError("Config document must be a JSON object")
    seed = _get(doc, "seed", "", int, 0)
    analysis, synthesis = _parse_filters(doc)
    return ExperimentConfig(
        name=_get(doc, "name", "", str, "experiment"),
        seed=seed,
        output_dir=_get(doc, "output_dir", "", str, "out"),
        wideband=_parse_wideband(doc),
        streams=_parse_streams(doc),
        analysis=analysis,
        synthesis=synthesis,
        training=_parse_training(doc, seed),
        evaluation=_parse_evaluation(doc),
        bench=_parse_bench(doc),
    )


def load_config(path, seed=None):
    """
    Read and validate an experiment config from a local path or S3 URI.

    Args:
        path (str): Config location.
        seed (int, optional): Override for the top-level seed.

    Returns:
        ExperimentConfig: Parsed configuration.
    """
    logger.debug(f"Loading config (path={path})")
    doc = read_json(path)
    if seed is not None and isinstance(doc, dict):
        doc = dict(doc, seed=seed)
    return parse_config(doc)


def analysis_prototypes(cfg, Ks):
    """Designed analysis prototypes keyed by subband count."""
    return {K: cfg.analysis.design(K) for K in sorted(set(Ks))}


def synthesis_prototype(cfg):
    """
    The synthesis prototype an experiment runs with.

    A trained filter at filters.synthesis.trained_path takes precedence over
    the designed one; it must have been trained for the config's K_syn.

    Args:
        cfg (ExperimentConfig): Parsed configuration.

    Returns:
        PrototypeFilter: Synthesis prototype.

    Raises:
        ConfigError: If the trained filter was built for another bank.
    """
    K = cfg.wideband.K_syn
    path = cfg.synthesis.trained_path
    if path is None:
        return cfg.synthesis.design(K)
    syn, doc = load_trained_filter(path)
    if doc.get("K", K) != K:
        raise ConfigError(
            f"Trained filter does not match the synthesis bank "
            f"(field=filters.synthesis.trained_path, K={doc.get('K')}, K_syn={K})"
        )
    logger.info(f"Using trained synthesis filter (path={path}, total_len={syn.total_len})")
    return syn.materialize()


def stream_seed(cfg, index, stream):
    """Per-stream seed: the stream's own seed, else one derived from the top-level seed."""
    if stream.seed is not None:
        return stream.seed
    return int(np.random.SeedSequence([cfg.seed, index]).generate_state(1)[0])


def build_streams(cfg, inputs=None, n_symbols=None):
    """
    Materialize the configured streams.

    Payloads come from inputs (one cf32 path per stream, in order), else from
    each stream's input path, else they are rendered from the stream's scheme.

    Args:
        cfg (ExperimentConfig): Parsed configuration.
        inputs (list, optional): cf32 paths overriding the configured sources.
        n_symbols (int, optional): Override for every rendered stream's length.

    Returns:
        list: (StreamSpec, SymbolStream or None) tuples; the symbols are only
            known for rendered QPSK streams.

    Raises:
        ConfigError: If inputs does not give one path per stream.
    """
    if inputs and len(inputs) != len(cfg.streams):
        raise ConfigError(
            f"Expected one input file per stream (field=streams, streams={len(cfg.streams)}, "
            f"inputs={len(inputs)})"
        )
    built = []
    for i, stream in enumerate(cfg.streams):
        path = inputs[i] if inputs else stream.input
        if path is not None:
            logger.debug(f"Reading stream payload (stream={stream.name}, path={path})")
            payload, symbols = read_cf32(path, stream.sample_rate_hz), None
        else:
            count = stream.n_symbols if n_symbols is None else n_symbols
            symbols, payload = render(
                stream.scheme, stream.sample_rate_hz, count, stream_seed(cfg, i, stream), stream.sps
            )
        spec = StreamSpec(stream.name, stream.sample_rate_hz, stream.center_offset_hz, stream.scheme, payload)
        built.append((spec, symbols))
    return built


def plan_streams(cfg, allow_overlap=False):
    """MuxPlan for the configured streams, without reading or rendering payloads."""
    specs = [
        StreamSpec(s.name, s.sample_rate_hz, s.center_offset_hz, s.scheme, ComplexBuf(np.zeros(0), s.sample_rate_hz))
        for s in cfg.streams
    ]
    return plan_mux(specs, cfg.wideband, allow_overlap)
