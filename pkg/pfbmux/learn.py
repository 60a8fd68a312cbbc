"""
Learning the synthesis prototype of an analysis-to-synthesis cascade.

The cascade output is linear in the synthesis taps (and, separately, in the
analysis taps), so the mean squared error against a reference waveform is a
convex quadratic and its gradient has a closed form. Gradients are computed
with exact adjoints of the polyphase banks.
"""

import math
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, TrainingError
from .numerics import (
    NMSE_FLOOR_DB,
    PrototypeFilter,
    aligned_error,
    design_windowed_sinc,
    magnitude_at,
    twiddle_matrix,
)
from .filterbank import (
    afb_polyphase,
    cascade,
    cascade_delay,
    rate_ratio,
    route_subbands,
    sfb_polyphase,
    subband_routes,
)
from .waveforms import SCHEMES, generate, samples_per_symbol
from .utils import parallel_map, read_json, write_json

logger = logging.getLogger("pfbmux")

OPTIMIZERS = ("sgd", "adam", "line_search")
DEFAULT_MIXTURE = {"qpsk": 90, "zigbee_oqpsk": 45, "gmsk": 45}


@dataclass(frozen=True, eq=False)
class TiedFilter:
    """
    Odd-length linear-phase filter parameterized by its first half.

    Attributes:
        half_taps (numpy.ndarray): Trainable taps 0..N/2 of an N+1 tap filter.
        cutoff_norm (float): Nominal cutoff carried into the materialized filter.
    """

    half_taps: np.ndarray
    cutoff_norm: float = math.pi

    def __post_init__(self):
        half = np.array(self.half_taps, dtype=np.float64).reshape(-1)
        if half.size < 1:
            raise ConfigError("Tied filter needs at least one trainable tap")
        half.setflags(write=False)
        object.__setattr__(self, "half_taps", half)

    @property
    def total_len(self):
        return 2 * self.half_taps.shape[0] - 1

    @property
    def num_params(self):
        return self.half_taps.shape[0]

    def materialize(self):
        """Mirror the half into a full, exactly symmetric PrototypeFilter."""
        taps = np.concatenate([self.half_taps, self.half_taps[-2::-1]])
        return PrototypeFilter(taps, self.cutoff_norm, symmetric=True)

    def with_half_taps(self, half_taps):
        return type(self)(half_taps, self.cutoff_norm)

    @classmethod
    def from_prototype(cls, prototype):
        if len(prototype) % 2 == 0 or not np.array_equal(prototype.taps, prototype.taps[::-1]):
            raise ConfigError("Only odd-length symmetric prototypes can be tied")
        return cls(prototype.taps[: (len(prototype) + 1) // 2], prototype.cutoff_norm)


class LearnableSynthesisFilter(TiedFilter):
    """Trainable synthesis prototype with symmetric tying."""


@dataclass(frozen=True, eq=False)
class TrainingPair:
    """
    The same symbols rendered at a low and an integer-multiple high rate.

    Attributes:
        x_low (ComplexBuf): Waveform at f_s.
        x_high (ComplexBuf): Waveform at r*f_s.
        scheme (str): Modulation scheme tag.
    """

    x_low: object
    x_high: object
    scheme: str

    def __post_init__(self):
        ratio = self.x_high.sample_rate_hz / self.x_low.sample_rate_hz
        if ratio < 1 or not math.isclose(ratio, round(ratio), rel_tol=1e-12):
            raise ConfigError(f"Training pair rate ratio must be a positive integer (ratio={ratio})")

    @property
    def ratio(self):
        return int(round(self.x_high.sample_rate_hz / self.x_low.sample_rate_hz))


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimizer and loop settings.

    Attributes:
        epochs (int): Number of passes over the pairs, at least 1.
        optimizer (str): 'sgd', 'adam' or 'line_search'.
        lr (float): Learning rate, non-negative. Ignored by line_search.
        beta1 (float): Adam first-moment decay.
        beta2 (float): Adam second-moment decay.
        eps (float): Adam denominator floor.
        batch (int): Pairs per step; 0 means the full set.
        seed (int): Seed for batch shuffling.
        train_analysis (bool): Also train the analysis prototype.
    """

    epochs: int = 200
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 0
    seed: int = 0
    train_analysis: bool = False

    def __post_init__(self):
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError(f"Training needs at least one epoch (epochs={self.epochs})")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(
                f"Unknown optimizer (optimizer={self.optimizer}); expected one of {OPTIMIZERS}"
            )
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise ConfigError(f"Learning rate must be non-negative (lr={self.lr})")
        if self.batch < 0:
            raise ConfigError(f"Batch size must be non-negative (batch={self.batch})")
        if self.optimizer == "line_search" and self.train_analysis:
            raise ConfigError("line_search only applies when the analysis prototype is fixed")


@dataclass
class TrainResult:
    """Outcome of train(): trained filters, per-epoch mean loss and the loss after the last step."""

    synthesis: LearnableSynthesisFilter
    analysis: PrototypeFilter
    losses: list = field(default_factory=list)
    final_loss: float = math.nan


def init_model_driven(K, L, cutoff_norm, total_len, window="rect"):
    """
    Initialize the synthesis taps from a truncated sinc.

    Args:
        K (int): Synthesis subband count.
        L (int): Synthesis upsampling factor.
        cutoff_norm (float): Cutoff in (0, pi].
        total_len (int): Odd filter length.
        window (str, optional): Window applied to the sinc. Default is 'rect'.

    Returns:
        LearnableSynthesisFilter: Half taps equal to the first half of the sinc.

    Raises:
        ConfigError: If total_len is even or K is not a multiple of L.
    """
    if L < 1 or K % L != 0:
        raise ConfigError(f"Synthesis K must be a multiple of L (K={K}, L={L})")
    prototype = design_windowed_sinc(cutoff_norm, total_len, window=window)
    return LearnableSynthesisFilter.from_prototype(prototype)


def init_random_normal(total_len, seed, cutoff_norm=math.pi):
    """Half taps drawn from N(0, 1/total_len), deterministic under seed."""
    if total_len < 1 or total_len % 2 == 0:
        raise ConfigError(f"Filter length must be odd (total_len={total_len})")
    rng = np.random.default_rng(seed)
    half = rng.normal(0.0, 1.0 / math.sqrt(total_len), (total_len + 1) // 2)
    return LearnableSynthesisFilter(half, cutoff_norm)


def forward(x_low, acfg, syn, scfg_shape):
    """
    Run the cascade with the current synthesis taps and unit interpolator gain.

    Args:
        x_low (ComplexBuf): Low-rate input.
        acfg (AnalysisBankConfig): Analysis bank.
        syn (TiedFilter): Synthesis taps.
        scfg_shape (SynthesisBankConfig): Synthesis K, L, I; its prototype is ignored.

    Returns:
        ComplexBuf: Estimate of the high-rate waveform, delayed by cascade_delay.
    """
    scfg = scfg_shape.with_prototype(syn.materialize())
    y = cascade(x_low, acfg, scfg)
    return y.with_samples(y.samples * scfg.L)


def _overlap(num_estimate, num_reference, lag):
    start = max(0, -lag)
    stop = min(num_reference, num_estimate - lag)
    if stop <= start:
        raise DimensionError(
            f"Estimate and reference do not overlap (estimate={num_estimate}, "
            f"reference={num_reference}, lag={lag})"
        )
    return start, stop


def loss_mse(x_hat, x, lag):
    """
    Mean squared error between x_hat[l + lag] and x[l] over their overlap.

    Args:
        x_hat (ComplexBuf): Estimate.
        x (ComplexBuf): Reference.
        lag (int): Delay of the estimate relative to the reference.

    Returns:
        float: Mean of |x_hat[l + lag] - x[l]|^2.

    Raises:
        DimensionError: If the overlap is empty.
    """
    start, stop = _overlap(len(x_hat), len(x), lag)
    e = x_hat.samples[start + lag : stop + lag] - x.samples[start:stop]
    return float(np.mean(np.abs(e) ** 2))


def _residual(x_hat, x, lag):
    start, stop = _overlap(len(x_hat), len(x), lag)
    r = np.zeros(len(x_hat), dtype=np.complex128)
    r[start + lag : stop + lag] = x_hat.samples[start + lag : stop + lag] - x.samples[start:stop]
    return r, stop - start


def fold_symmetric(grad):
    """Sum mirrored tap gradients into the half-tap gradient of a tied filter."""
    center = (grad.shape[0] - 1) // 2
    half = grad[: center + 1].copy()
    half[:center] += grad[::-1][:center]
    return half


def _synthesis_grad(s_hat, r, scfg, num_overlap):
    # dx_hat(n)/df(j) = L * S_hat_{n mod K}(m) for n = mL + j
    T = s_hat.shape[1]
    m = np.arange(T)[:, None]
    n = m * scfg.L + np.arange(len(scfg.prototype))[None, :]
    terms = np.conj(r[n]) * s_hat[n % scfg.K, m]
    return (2.0 * scfg.L / num_overlap) * np.real(terms.sum(axis=0))


def _analysis_grad(x_low, r, acfg, scfg, lag, num_overlap, T):
    m = np.arange(T)[:, None]
    f = scfg.prototype.taps
    n = m * scfg.L + np.arange(f.shape[0])[None, :]

    # adjoint of the synthesis bank applied to the residual
    folded = np.zeros((T, scfg.K), dtype=np.complex128)
    np.add.at(folded, (np.broadcast_to(m, n.shape), n % scfg.K), f[None, :] * r[n])
    adjoint = scfg.L * (folded @ twiddle_matrix(scfg.K, -1))

    # a row routed to two bins collects the adjoint of both
    rows, k_s, dest = subband_routes(acfg.K, scfg.K)
    phase = np.exp(-2j * np.pi * k_s * lag / scfg.K)
    collect = np.zeros((rows.shape[0], acfg.K))
    collect[np.arange(rows.shape[0]), rows] = 1.0
    gathered = (np.conj(phase)[None, :] * adjoint[:, dest]) @ collect
    a_hat = gathered @ twiddle_matrix(acfg.K, 1)

    idx = m * acfg.M - np.arange(len(acfg.prototype))[None, :]
    valid = (idx >= 0) & (idx < len(x_low))
    x_vals = np.where(valid, x_low.samples[np.clip(idx, 0, max(len(x_low) - 1, 0))], 0.0)
    terms = x_vals * np.conj(a_hat[np.broadcast_to(m, idx.shape), idx % acfg.K])
    return (2.0 / num_overlap) * np.real(terms.sum(axis=0))


def _pair_terms(pair, acfg, scfg, with_analysis):
    lag = cascade_delay(acfg, scfg)
    frame = afb_polyphase(pair.x_low, acfg)
    routed = route_subbands(frame, scfg.K, 0, lag)
    y = sfb_polyphase(routed, scfg)
    x_hat = y.with_samples(y.samples * scfg.L)

    r, num_overlap = _residual(x_hat, pair.x_high, lag)
    loss = float(np.sum(np.abs(r) ** 2) / num_overlap)
    s_hat = twiddle_matrix(scfg.K, 1) @ routed.data
    grad_f = _synthesis_grad(s_hat, r, scfg, num_overlap)
    grad_h = None
    if with_analysis:
        grad_h = _analysis_grad(pair.x_low, r, acfg, scfg, lag, num_overlap, routed.T)
    return loss, grad_f, grad_h


def _check_pair(pair, acfg, scfg):
    if acfg.I != scfg.I:
        raise ConfigError(f"Banks must share the oversampling ratio (analysis={acfg.I}, synthesis={scfg.I})")
    if not math.isclose(rate_ratio(acfg, scfg), pair.ratio, rel_tol=1e-12):
        raise ConfigError(
            f"Pair rate ratio does not match the banks (pair={pair.ratio}, "
            f"banks={rate_ratio(acfg, scfg)})"
        )


def grad_analytic(pair, acfg, syn, scfg_shape, analysis=None):
    """
    Exact gradient of loss_mse with respect to the trainable half taps.

    Args:
        pair (TrainingPair): Input and reference waveforms.
        acfg (AnalysisBankConfig): Analysis bank (fixed unless analysis is given).
        syn (TiedFilter): Synthesis half taps.
        scfg_shape (SynthesisBankConfig): Synthesis K, L, I.
        analysis (TiedFilter, optional): Tied analysis taps to differentiate as well.

    Returns:
        tuple: (loss, synthesis half-tap gradient, analysis half-tap gradient or None).
    """
    if analysis is not None:
        acfg = type(acfg)(acfg.K, acfg.M, acfg.I, analysis.materialize())
    scfg = scfg_shape.with_prototype(syn.materialize())
    _check_pair(pair, acfg, scfg)
    loss, grad_f, grad_h = _pair_terms(pair, acfg, scfg, analysis is not None)
    return loss, fold_symmetric(grad_f), None if grad_h is None else fold_symmetric(grad_h)


def _batches(num_pairs, batch, rng):
    if batch == 0 or batch >= num_pairs:
        return [np.arange(num_pairs)]
    order = rng.permutation(num_pairs)
    return [order[i : i + batch] for i in range(0, num_pairs, batch)]


def _line_search_step(pairs, acfg, syn, scfg_shape, direction, workers):
    stepped = syn.with_half_taps(direction)

    def terms(pair):
        scfg = scfg_shape.with_prototype(syn.materialize())
        lag = cascade_delay(acfg, scfg)
        r, num_overlap = _residual(forward(pair.x_low, acfg, syn, scfg_shape), pair.x_high, lag)
        start, stop = _overlap(len(r), len(pair.x_high), lag)
        d = np.zeros_like(r)
        d[start + lag : stop + lag] = forward(pair.x_low, acfg, stepped, scfg_shape).samples[
            start + lag : stop + lag
        ]
        return (
            float(np.real(np.vdot(r, d))) / num_overlap,
            float(np.sum(np.abs(d) ** 2)) / num_overlap,
        )

    parts = parallel_map(terms, pairs, workers)
    num = sum(p[0] for p in parts)
    den = sum(p[1] for p in parts)
    return 0.0 if den <= 0 else -num / den


def mean_loss(pairs, acfg, syn, scfg_shape, workers=0):
    """Mean loss_mse over pairs at the cascade delay."""
    scfg = scfg_shape.with_prototype(syn.materialize())
    lag = cascade_delay(acfg, scfg)
    losses = parallel_map(
        lambda p: loss_mse(forward(p.x_low, acfg, syn, scfg_shape), p.x_high, lag), pairs, workers
    )
    return float(np.mean(losses))


def train(pairs, cfg, init, acfg, scfg_shape, workers=0):
    """
    Train the synthesis prototype by gradient descent on the pairs.

    Per-pair forward and gradient work may run on a thread pool; batch means
    are always reduced in pair order, so a run is reproducible under cfg.seed.

    Args:
        pairs (list): TrainingPair objects.
        cfg (TrainConfig): Optimizer settings.
        init (LearnableSynthesisFilter): Starting synthesis taps.
        acfg (AnalysisBankConfig): Analysis bank; its prototype must be tied
            symmetric when cfg.train_analysis is set.
        scfg_shape (SynthesisBankConfig): Synthesis K, L, I.
        workers (int, optional): Worker threads for per-pair work.

    Returns:
        TrainResult: Trained filters and the per-epoch mean loss before each step.

    Raises:
        TrainingError: If the loss becomes NaN or infinite.
    """
    pairs = list(pairs)
    if not pairs:
        raise ConfigError("Training needs at least one pair")
    full_batch = cfg.batch == 0 or cfg.batch >= len(pairs)
    if cfg.optimizer == "line_search" and not full_batch:
        raise ConfigError("line_search needs full-batch training (batch=0)")

    rng = np.random.default_rng(cfg.seed)
    syn = LearnableSynthesisFilter(init.half_taps, init.cutoff_norm)
    ana = TiedFilter.from_prototype(acfg.prototype) if cfg.train_analysis else None

    def params():
        return syn.half_taps if ana is None else np.concatenate([syn.half_taps, ana.half_taps])

    moment1 = np.zeros_like(params())
    moment2 = np.zeros_like(params())
    step = 0
    losses = []
    report_every = max(1, cfg.epochs // 10)
    logger.info(
        f"Training synthesis filter (epochs={cfg.epochs}, pairs={len(pairs)}, "
        f"optimizer={cfg.optimizer}, params={params().shape[0]})"
    )

    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for idx in _batches(len(pairs), cfg.batch, rng):
            batch = [pairs[i] for i in idx]
            results = parallel_map(
                lambda p: grad_analytic(p, acfg, syn, scfg_shape, ana), batch, workers
            )
            loss = float(np.mean([r[0] for r in results]))
            grad = np.mean([r[1] for r in results], axis=0)
            if ana is not None:
                grad = np.concatenate([grad, np.mean([r[2] for r in results], axis=0)])
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                logger.error(f"Training diverged (epoch={epoch}, loss={loss})")
                raise TrainingError(f"Training diverged at epoch {epoch} (loss={loss})", epoch)
            epoch_loss += loss * len(batch)

            step += 1
            if cfg.optimizer == "sgd":
                update = -cfg.lr * grad
            elif cfg.optimizer == "adam":
                moment1 = cfg.beta1 * moment1 + (1 - cfg.beta1) * grad
                moment2 = cfg.beta2 * moment2 + (1 - cfg.beta2) * grad**2
                m_hat = moment1 / (1 - cfg.beta1**step)
                v_hat = moment2 / (1 - cfg.beta2**step)
                update = -cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
            else:
                alpha = _line_search_step(batch, acfg, syn, scfg_shape, -grad, workers)
                update = -alpha * grad

            theta = params() + update
            syn = syn.with_half_taps(theta[: syn.num_params])
            if ana is not None:
                ana = ana.with_half_taps(theta[syn.num_params :])
                acfg = type(acfg)(acfg.K, acfg.M, acfg.I, ana.materialize())

        losses.append(epoch_loss / len(pairs))
        if (epoch + 1) % report_every == 0 or epoch == 0:
            logger.info(f"Epoch {epoch + 1}/{cfg.epochs} (loss={losses[-1]:.6e})")
        else:
            logger.debug(f"Epoch {epoch + 1}/{cfg.epochs} (loss={losses[-1]:.6e})")

    final_loss = mean_loss(pairs, acfg, syn, scfg_shape, workers)
    if not math.isfinite(final_loss):
        raise TrainingError(f"Training diverged after the last epoch (loss={final_loss})", cfg.epochs)
    logger.info(f"Training finished (final_loss={final_loss:.6e})")
    return TrainResult(syn, acfg.prototype, losses, final_loss)


def make_training_pairs(scheme, count, sample_rate_hz, ratio, seed, n_symbols=256, workers=0):
    """
    Render count waveforms of one scheme at f_s and ratio*f_s.

    Each pair uses its own seed drawn from SeedSequence([seed, scheme index]),
    and both rates use that seed, so the pair carries identical symbols and
    is time-aligned at sample 0.

    Args:
        scheme (str): 'qpsk', 'zigbee_oqpsk' or 'gmsk'.
        count (int): Number of pairs.
        sample_rate_hz (float): Low rate f_s.
        ratio (int): Integer rate ratio, at least 2.
        seed (int): Base seed.
        n_symbols (int, optional): QPSK symbols, O-QPSK bits or GMSK bits per pair.
        workers (int, optional): Worker threads.

    Returns:
        list: TrainingPair objects.

    Raises:
        ConfigError: For an unsupported scheme, a non-integer ratio or rate.
    """
    if not isinstance(ratio, (int, np.integer)) or ratio < 2:
        raise ConfigError(f"Rate ratio must be an integer of at least 2 (ratio={ratio})")
    sps = samples_per_symbol(scheme, sample_rate_hz)
    seeds = np.random.SeedSequence([seed, SCHEMES.index(scheme)]).generate_state(count)

    def render(pair_seed):
        _, x_low = generate(scheme, n_symbols, sps, int(pair_seed))
        _, x_high = generate(scheme, n_symbols, sps * ratio, int(pair_seed))
        return TrainingPair(x_low, x_high, scheme)

    return parallel_map(render, seeds, workers)


def make_pair_mixture(mixture, sample_rate_hz, ratio, seed, n_symbols=256, workers=0):
    """Pairs for every scheme in a {scheme: count} mixture, in scheme order."""
    pairs = []
    for scheme, count in mixture.items():
        pairs += make_training_pairs(scheme, count, sample_rate_hz, ratio, seed, n_symbols, workers)
    return pairs


def heldout_nmse(pairs, acfg, syn, scfg_shape, workers=0):
    """
    Pooled NMSE in dB of the cascade over pairs, aligned at the cascade delay.

    Returns:
        float: 10*log10(sum of error energy / sum of reference energy), floored at -120 dB.
    """
    scfg = scfg_shape.with_prototype(syn.materialize())
    lag = cascade_delay(acfg, scfg)

    def energies(pair):
        err = aligned_error(forward(pair.x_low, acfg, syn, scfg_shape), pair.x_high, lag)
        return float(np.sum(np.abs(err) ** 2)), float(np.sum(np.abs(pair.x_high.samples) ** 2))

    parts = parallel_map(energies, pairs, workers)
    err = sum(p[0] for p in parts)
    ref = sum(p[1] for p in parts)
    if err <= 0:
        return NMSE_FLOOR_DB
    return max(NMSE_FLOOR_DB, 10 * math.log10(err / ref))


def first_image_db(prototype, L):
    """Magnitude of a synthesis prototype at the first image centre 2*pi/L, in dB re DC."""
    dc, image = magnitude_at(prototype, [0.0, 2 * math.pi / L])
    tiny = np.finfo(np.float64).tiny
    return float(20 * math.log10(max(image, tiny) / max(dc, tiny)))


def filter_to_dict(syn, scfg_shape, metadata):
    return {
        "total_len": syn.total_len,
        "half_taps": syn.half_taps.tolist(),
        "cutoff_norm": syn.cutoff_norm,
        "K": scfg_shape.K,
        "L": scfg_shape.L,
        "I": scfg_shape.I,
        "metadata": metadata,
    }


def save_trained_filter(path, syn, scfg_shape, metadata):
    """
    Write a trained synthesis filter as JSON.

    Args:
        path (str): Local path or S3 URI.
        syn (LearnableSynthesisFilter): Trained taps.
        scfg_shape (SynthesisBankConfig): Bank the filter was trained for.
        metadata (dict): Run details, e.g. seed, epochs and final_loss.
    """
    write_json(path, filter_to_dict(syn, scfg_shape, metadata))
    logger.info(f"Saved trained filter (path={path}, total_len={syn.total_len})")


def load_trained_filter(path):
    """
    Read a trained synthesis filter written by save_trained_filter.

    Returns:
        tuple: (LearnableSynthesisFilter, document dict)

    Raises:
        ConfigError: If the document is inconsistent.
    """
    doc = read_json(path)
    try:
        syn = LearnableSynthesisFilter(doc["half_taps"], float(doc["cutoff_norm"]))
        total_len = int(doc["total_len"])
    except KeyError as e:
        raise ConfigError(f"Trained filter is missing a field (path={path}, field={e})") from e
    if syn.total_len != total_len:
        raise ConfigError(
            f"Trained filter length mismatch (path={path}, total_len={total_len}, "
            f"half_taps={syn.num_params})"
        )
    return syn, doc
