"""
Oversampled analysis and synthesis filter banks.

Each bank comes in two forms: a direct evaluation (modulate, filter, resample)
used as the reference, and a stateless polyphase evaluation that only
rearranges indices, runs one short filter per branch and applies a K-point
DFT pattern across the branches.
"""

import math
import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import ComplexBuf, PrototypeFilter, design_windowed_sinc, twiddle_matrix
from .multirate import (
    decimate,
    interleave,
    interpolate,
    polyphase_decompose_analysis,
    polyphase_decompose_synthesis,
    signal_decompose,
)

logger = logging.getLogger("pfbmux")

DEFAULT_TAPS_PER_SUBBAND = 8


def _check_factorization(K, rate_factor, I, label):
    for name, value in (("K", K), (label, rate_factor), ("I", I)):
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise ConfigError(f"Bank parameter must be a positive integer ({name}={value})")
    if K != rate_factor * I:
        raise ConfigError(f"Bank needs K == {label}*I (K={K}, {label}={rate_factor}, I={I})")


@dataclass(frozen=True)
class AnalysisBankConfig:
    """
    Analysis bank parameters: K subbands, downsampling by M, oversampling I = K/M.

    Attributes:
        K (int): Number of subbands.
        M (int): Downsampling factor.
        I (int): Oversampling ratio.
        prototype (PrototypeFilter): Analysis prototype h.
    """

    K: int
    M: int
    I: int
    prototype: PrototypeFilter

    def __post_init__(self):
        _check_factorization(self.K, self.M, self.I, "M")
        if self.prototype is None:
            raise ConfigError("Analysis bank needs a prototype filter")


@dataclass(frozen=True)
class SynthesisBankConfig:
    """
    Synthesis bank parameters: K subbands, upsampling by L, oversampling I = K/L.

    The prototype may be left empty to describe only the bank's shape, as the
    training loop does while the synthesis taps are still being learned.

    Attributes:
        K (int): Number of subbands.
        L (int): Upsampling factor.
        I (int): Oversampling ratio.
        prototype (PrototypeFilter, optional): Synthesis prototype f.
    """

    K: int
    L: int
    I: int
    prototype: PrototypeFilter = None

    def __post_init__(self):
        _check_factorization(self.K, self.L, self.I, "L")

    def with_prototype(self, prototype):
        return replace(self, prototype=prototype)


@dataclass(frozen=True, eq=False)
class SubbandFrame:
    """
    K x T matrix of subband samples, indexed data[k, m].

    Attributes:
        data (numpy.ndarray): Complex matrix, one row per subband.
        subband_rate_hz (float): Sample rate of every row.
        subband_interval_hz (float): Frequency spacing between adjacent subbands.
    """

    data: np.ndarray
    subband_rate_hz: float
    subband_interval_hz: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise DimensionError(f"Subband frame must be 2-D (ndim={data.ndim})")
        ratio = self.subband_rate_hz / self.subband_interval_hz
        if ratio < 1 or not math.isclose(ratio, round(ratio), rel_tol=1e-9):
            raise ConfigError(
                f"Subband rate must be an integer multiple of the interval "
                f"(rate={self.subband_rate_hz}, interval={self.subband_interval_hz})"
            )
        object.__setattr__(self, "data", data)

    @property
    def K(self):
        return self.data.shape[0]

    @property
    def T(self):
        return self.data.shape[1]

    @property
    def I(self):
        return int(round(self.subband_rate_hz / self.subband_interval_hz))


def default_analysis_prototype(K, taps_per_subband=DEFAULT_TAPS_PER_SUBBAND):
    """Kaiser(8) windowed sinc with 8K+1 taps and cutoff pi/K."""
    return design_windowed_sinc(math.pi / K, taps_per_subband * K + 1)


def default_synthesis_prototype(K, taps_per_subband=DEFAULT_TAPS_PER_SUBBAND):
    """Kaiser(8) windowed sinc with 8K+1 taps and cutoff 2*pi/K (capped at pi)."""
    return design_windowed_sinc(min(2 * math.pi / K, math.pi), taps_per_subband * K + 1)


def analysis_frame_length(num_samples, cfg):
    """Number of subband samples produced for an input of num_samples samples."""
    if num_samples == 0:
        return 0
    return -(-(num_samples + len(cfg.prototype) - 1) // cfg.M)


def synthesis_output_length(T, cfg):
    """Number of wideband samples produced from T subband samples."""
    if T == 0:
        return 0
    return (T - 1) * cfg.L + len(cfg.prototype)


def _frame_for(data, x, cfg):
    return SubbandFrame(data, x.sample_rate_hz / cfg.M, x.sample_rate_hz / cfg.K)


def afb_direct(x, cfg):
    """
    Analysis bank by literal evaluation of X(m,k) = sum_n h(mM - n) x(n) W_K^{-kn}.

    Every subband is modulated down, low-pass filtered and downsampled in turn.

    Args:
        x (ComplexBuf): Input signal.
        cfg (AnalysisBankConfig): Bank parameters.

    Returns:
        SubbandFrame: K x T frame, T = ceil((len(x) + len(h) - 1) / M).
    """
    T = analysis_frame_length(len(x), cfg)
    data = np.zeros((cfg.K, T), dtype=np.complex128)
    n = np.arange(len(x))
    for k in range(cfg.K):
        modulated = x.with_samples(x.samples * np.exp(-2j * np.pi * k * n / cfg.K))
        data[k] = decimate(modulated, cfg.M, cfg.prototype).samples
    return _frame_for(data, x, cfg)


def afb_polyphase(x, cfg):
    """
    Analysis bank by stateless polyphase decomposition.

    The input is split into K branches x_rho(r) = x(rK + rho); each branch is
    interpolated by I with its subfilter p_rho(m) = h(mM - rho), and a K-point
    DFT across the branches yields every subband at once.

    Args:
        x (ComplexBuf): Input signal.
        cfg (AnalysisBankConfig): Bank parameters.

    Returns:
        SubbandFrame: Same frame as afb_direct.
    """
    T = analysis_frame_length(len(x), cfg)
    if T == 0:
        return _frame_for(np.zeros((cfg.K, 0)), x, cfg)

    branches = polyphase_decompose_analysis(cfg.prototype, cfg.K, cfg.M).branches
    x_rho = signal_decompose(x, cfg.K)
    filtered = np.zeros((cfg.K, T), dtype=np.complex128)
    for rho in range(cfg.K):
        y = interpolate(ComplexBuf(x_rho[rho], x.sample_rate_hz / cfg.K), cfg.I, branches[rho])
        filtered[rho] = y.samples[:T]
    return _frame_for(twiddle_matrix(cfg.K, -1) @ filtered, x, cfg)


def _check_frame(S, cfg):
    if S.K != cfg.K:
        raise DimensionError(f"Frame has {S.K} subbands, synthesis bank expects {cfg.K}")
    if cfg.prototype is None:
        raise ConfigError("Synthesis bank has no prototype filter")
    if S.I != cfg.I:
        raise ConfigError(f"Frame oversampling does not match the bank (frame={S.I}, bank={cfg.I})")


def sfb_direct(S, cfg):
    """
    Synthesis bank by literal evaluation of s(n) = sum_k W_K^{kn} sum_m S(m,k) f(n - Lm).

    Args:
        S (SubbandFrame): K x T subband frame.
        cfg (SynthesisBankConfig): Bank parameters with a prototype.

    Returns:
        ComplexBuf: (T - 1)*L + len(f) samples at L times the subband rate.

    Raises:
        DimensionError: If the frame does not have K rows.
    """
    _check_frame(S, cfg)
    rate = S.subband_rate_hz * cfg.L
    N = synthesis_output_length(S.T, cfg)
    out = np.zeros(N, dtype=np.complex128)
    n = np.arange(N)
    for k in range(cfg.K):
        up = interpolate(ComplexBuf(S.data[k], S.subband_rate_hz), cfg.L, cfg.prototype)
        out += up.samples * np.exp(2j * np.pi * k * n / cfg.K)
    return ComplexBuf(out, rate)


def sfb_polyphase(S, cfg):
    """
    Synthesis bank by stateless polyphase decomposition.

    For every subband time m the unnormalized IDFT pattern
    S_hat_rho(m) = sum_k S(m,k) W_K^{k rho} is formed; branch rho is then
    decimated by I with q_rho(j) = f(jL + rho), sampled at the branch offset
    so rows rho >= L see their negative-j taps, and the branches interleaved.

    Args:
        S (SubbandFrame): K x T subband frame.
        cfg (SynthesisBankConfig): Bank parameters with a prototype.

    Returns:
        ComplexBuf: Same signal as sfb_direct.

    Raises:
        DimensionError: If the frame does not have K rows.
    """
    _check_frame(S, cfg)
    rate = S.subband_rate_hz * cfg.L
    N = synthesis_output_length(S.T, cfg)
    if N == 0:
        return ComplexBuf(np.zeros(0), rate)

    poly = polyphase_decompose_synthesis(cfg.prototype, cfg.K, cfg.L)
    s_hat = twiddle_matrix(cfg.K, 1) @ S.data
    outputs = [
        decimate(ComplexBuf(s_hat[rho], S.subband_rate_hz), cfg.I, poly.branches[rho], poly.offset).samples
        for rho in range(cfg.K)
    ]
    s = interleave(outputs, cfg.K, rate)
    return s.with_samples(s.samples[:N])


def signed_bins(K):
    """Signed subband indices in [-K/2, K/2) for rows 0..K-1."""
    k = np.arange(K)
    return (k + K // 2) % K - K // 2


def subband_routes(K_ana, K_syn, shift=0):
    """
    Source row, signed bin and destination bin of every routed analysis subband.

    Row k carries signed bin k_s in [-K_ana/2, K_ana/2) and lands in bin
    (k_s + shift) mod K_syn. For even K_ana inside a wider synthesis bank the
    row at -K_ana/2 holds both band edges of the stream, so it is routed a
    second time as +K_ana/2.

    Args:
        K_ana (int): Analysis subband count.
        K_syn (int): Synthesis subband count.
        shift (int, optional): Bin offset of the stream inside the wideband.

    Returns:
        tuple: (rows, signed bins, destination bins), equal-length int arrays.
    """
    rows = np.arange(K_ana)
    k_s = signed_bins(K_ana)
    if K_ana % 2 == 0 and K_ana < K_syn:
        rows = np.append(rows, K_ana // 2)
        k_s = np.append(k_s, K_ana // 2)
    return rows, k_s, (k_s + shift) % K_syn


def route_subbands(frame, K_syn, shift=0, lag=0):
    """
    Map analysis subbands onto synthesis-bank input bins.

    Every route from subband_routes copies source row k to its destination
    bin and multiplies it by W_{K_syn}^{-k_s * lag}, which keeps the cascade
    a pure delay of lag wideband samples even when lag is not a multiple of
    K_syn.

    Args:
        frame (SubbandFrame): Output of an analysis bank.
        K_syn (int): Synthesis subband count.
        shift (int, optional): Bin offset of the stream inside the wideband.
        lag (int, optional): Cascade delay in wideband samples.

    Returns:
        SubbandFrame: K_syn x T frame with unassigned bins zero.

    Raises:
        DimensionError: If the frame has more subbands than the synthesis bank.
    """
    if frame.K > K_syn:
        raise DimensionError(
            f"Cannot route {frame.K} subbands into a {K_syn}-bin synthesis bank"
        )
    rows, k_s, dest = subband_routes(frame.K, K_syn, shift)
    phase = np.exp(-2j * np.pi * k_s * lag / K_syn)
    routed = np.zeros((K_syn, frame.T), dtype=np.complex128)
    routed[dest] = frame.data[rows] * phase[:, None]
    return SubbandFrame(routed, frame.subband_rate_hz, frame.subband_interval_hz)


def rate_ratio(acfg, scfg):
    """Wideband-to-stream rate ratio K_syn / K_ana of a cascade."""
    return scfg.K / acfg.K


def cascade_delay(acfg, scfg):
    """
    Group delay of the analysis-to-synthesis cascade in wideband samples.

    Both prototypes are linear phase, so the delay is D_f + D_h * R with
    D = (len - 1) / 2 and R = K_syn / K_ana. A fractional result is rounded.

    Args:
        acfg (AnalysisBankConfig): Analysis bank.
        scfg (SynthesisBankConfig): Synthesis bank with a prototype.

    Returns:
        int: Delay in wideband samples.
    """
    exact = scfg.prototype.half_length + acfg.prototype.half_length * rate_ratio(acfg, scfg)
    lag = int(round(exact))
    if not math.isclose(exact, lag, abs_tol=1e-9):
        logger.warning(f"Cascade delay is not an integer; rounding (delay={exact}, lag={lag})")
    return lag


def _check_cascade(acfg, scfg):
    if acfg.I != scfg.I:
        raise ConfigError(
            f"Analysis and synthesis oversampling differ (analysis I={acfg.I}, synthesis I={scfg.I})"
        )
    if acfg.K > scfg.K:
        raise ConfigError(
            f"Analysis bank is wider than the synthesis bank (K_ana={acfg.K}, K_syn={scfg.K})"
        )


def cascade(x, acfg, scfg, shift=0):
    """
    Run afb_polyphase, phase-aligned routing and sfb_polyphase on one signal.

    Args:
        x (ComplexBuf): Stream at the analysis input rate.
        acfg (AnalysisBankConfig): Analysis bank.
        scfg (SynthesisBankConfig): Synthesis bank with a prototype.
        shift (int, optional): Bin offset inside the synthesis bank.

    Returns:
        ComplexBuf: Cascade output at K_syn/K_ana times the input rate.
    """
    _check_cascade(acfg, scfg)
    frame = afb_polyphase(x, acfg)
    routed = route_subbands(frame, scfg.K, shift, cascade_delay(acfg, scfg))
    return sfb_polyphase(routed, scfg)


def cascade_gain(acfg, scfg, tone_cycles=0.1):
    """
    Passband gain of the analysis-to-synthesis cascade.

    A unit complex tone at tone_cycles subband intervals above DC is passed
    through the cascade and the median output magnitude over the fully
    overlapped region is returned.

    Args:
        acfg (AnalysisBankConfig): Analysis bank.
        scfg (SynthesisBankConfig): Synthesis bank with a prototype.
        tone_cycles (float, optional): Tone frequency in subband intervals.

    Returns:
        float: Gain to divide the cascade output by for unity passband gain.

    Raises:
        ConfigError: If the banks do not share an oversampling ratio.
    """
    _check_cascade(acfg, scfg)
    R = rate_ratio(acfg, scfg)
    N_h, N_f = len(acfg.prototype), len(scfg.prototype)
    num_samples = 4 * N_h + 4 * math.ceil(N_f / R) + 64
    n = np.arange(num_samples)
    tone = ComplexBuf(np.exp(2j * np.pi * tone_cycles * n / acfg.K), 1.0)
    y = cascade(tone, acfg, scfg)
    start = int(math.ceil(N_h * R + N_f))
    stop = int(math.floor((num_samples - 1) * R))
    gain = float(np.median(np.abs(y.samples[start:stop])))
    logger.debug(f"Measured cascade gain (gain={gain}, K_ana={acfg.K}, K_syn={scfg.K})")
    return gain
