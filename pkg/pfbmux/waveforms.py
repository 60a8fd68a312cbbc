"""
Baseband waveform generators, an AWGN channel and simple loopback receivers.

All generators are deterministic under their seed; the symbol content depends
only on the seed, never on the samples-per-symbol, so one seed rendered at two
rates gives a time-aligned pair of the same waveform.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal, special
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigError, MetricError, TimingError
from .numerics import ComplexBuf
from .multirate import interpolate

logger = logging.getLogger("pfbmux")

SCHEMES = ("qpsk", "zigbee_oqpsk", "gmsk")

QPSK_SYMBOL_RATE_HZ = 1e6
ZIGBEE_CHIP_RATE_HZ = 2e6
GMSK_BIT_RATE_HZ = 1e6

RRC_SPAN = 8
RRC_ROLLOFF = 0.35
GMSK_BT = 0.5
GMSK_SPAN = 4
GMSK_INDEX = 0.5

MIN_TIMING_PEAK = 0.3

ZIGBEE_CHIPS_PER_SYMBOL = 32
ZIGBEE_BITS_PER_SYMBOL = 4
_ZIGBEE_SYMBOL0 = "11011001110000110101001000101110"


def _zigbee_chip_table():
    base = np.array([int(c) for c in _ZIGBEE_SYMBOL0], dtype=np.int8)
    rows = [np.roll(base, 4 * k) for k in range(8)]
    odd = np.zeros(ZIGBEE_CHIPS_PER_SYMBOL, dtype=np.int8)
    odd[1::2] = 1
    rows += [row ^ odd for row in rows[:8]]
    return np.vstack(rows)


ZIGBEE_CHIPS = _zigbee_chip_table()


@dataclass(frozen=True, eq=False)
class SymbolStream:
    """
    Transmitted symbols together with how they were drawn.

    Attributes:
        symbols (numpy.ndarray): Complex constellation points.
        scheme (str): Modulation scheme tag.
        seed (int): Seed the symbols were drawn with.
    """

    symbols: np.ndarray
    scheme: str
    seed: int

    def __len__(self):
        return self.symbols.shape[0]


def random_bits(n_bits, seed):
    """Uniform random bits drawn from numpy's default generator."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=n_bits, dtype=np.int8)


def _check_sps(sps):
    if not isinstance(sps, (int, np.integer)) or sps < 1:
        raise ConfigError(f"Samples per symbol must be a positive integer (sps={sps})")


def rrc_taps(rolloff, span, sps):
    """
    Root-raised-cosine pulse, span*sps + 1 taps, scaled so sum(taps**2) == sps.

    With this scaling a train of unit-energy symbols has unit average power.

    Args:
        rolloff (float): Excess bandwidth in (0, 1].
        span (int): Pulse length in symbols.
        sps (int): Samples per symbol.

    Returns:
        numpy.ndarray: Symmetric real taps.
    """
    if not (0 < rolloff <= 1):
        raise ConfigError(f"RRC rolloff must be in (0, 1] (rolloff={rolloff})")
    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    b = rolloff
    taps = np.empty_like(t)
    singular = np.isclose(np.abs(4 * b * t), 1.0)
    center = np.isclose(t, 0.0)
    regular = ~(singular | center)

    tr = t[regular]
    taps[regular] = (
        np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))
    ) / (np.pi * tr * (1 - (4 * b * tr) ** 2))
    taps[center] = 1 - b + 4 * b / np.pi
    taps[singular] = (b / math.sqrt(2)) * (
        (1 + 2 / np.pi) * math.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * math.cos(np.pi / (4 * b))
    )
    return taps * math.sqrt(sps / np.sum(taps**2))


def qpsk_bits_to_symbols(bits):
    """Gray-mapped QPSK: bit pair (b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)."""
    bits = np.asarray(bits).reshape(-1, 2)
    return ((1 - 2 * bits[:, 0]) + 1j * (1 - 2 * bits[:, 1])) / math.sqrt(2)


def qpsk_symbols_to_bits(symbols):
    """Hard Gray-mapped QPSK decisions, two bits per symbol."""
    symbols = np.asarray(symbols)
    bits = np.empty((symbols.shape[0], 2), dtype=np.int8)
    bits[:, 0] = symbols.real < 0
    bits[:, 1] = symbols.imag < 0
    return bits.reshape(-1)


def gen_qpsk(n_symbols, sps=2, rrc_rolloff=RRC_ROLLOFF, seed=0, symbol_rate_hz=QPSK_SYMBOL_RATE_HZ):
    """
    Random Gray-mapped QPSK shaped by a root-raised-cosine pulse (span 8).

    Args:
        n_symbols (int): Number of symbols.
        sps (int, optional): Samples per symbol, at least 2.
        rrc_rolloff (float, optional): Pulse rolloff. Default is 0.35.
        seed (int, optional): Random seed.
        symbol_rate_hz (float, optional): Symbol rate; the sample rate is sps times this.

    Returns:
        tuple: (SymbolStream, ComplexBuf) with (n_symbols - 1)*sps + 8*sps + 1 samples.
    """
    _check_sps(sps)
    if sps < 2:
        raise ConfigError(f"QPSK needs at least 2 samples per symbol (sps={sps})")
    symbols = qpsk_bits_to_symbols(random_bits(2 * n_symbols, seed))
    stream = SymbolStream(symbols, "qpsk", seed)
    taps = rrc_taps(rrc_rolloff, RRC_SPAN, sps)
    x = interpolate(ComplexBuf(symbols, symbol_rate_hz), sps, taps)
    return stream, x


def zigbee_bits_to_chips(bits):
    """Spread 4-bit symbols (LSB first) into 32-chip sequences of 0/1."""
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, ZIGBEE_BITS_PER_SYMBOL)
    symbols = bits @ (1 << np.arange(ZIGBEE_BITS_PER_SYMBOL))
    return ZIGBEE_CHIPS[symbols].reshape(-1)


def gen_zigbee_oqpsk(n_bits, sps=2, seed=0):
    """
    IEEE 802.15.4 O-QPSK waveform with half-sine chip shaping.

    Even chips ride on I, odd chips on Q delayed by one chip period; every
    chip uses a half-sine pulse two chip periods long, which gives a constant
    envelope once both rails are active.

    Args:
        n_bits (int): Number of payload bits, a multiple of 4.
        sps (int, optional): Samples per chip. Default 2 gives a 4 MHz rate.
        seed (int, optional): Random seed.

    Returns:
        ComplexBuf: (32*n_bits/4 + 1)*sps samples at 2e6*sps Hz.
    """
    _check_sps(sps)
    if n_bits % ZIGBEE_BITS_PER_SYMBOL != 0:
        raise ConfigError(f"O-QPSK payload must be a multiple of 4 bits (n_bits={n_bits})")
    chips = 2.0 * zigbee_bits_to_chips(random_bits(n_bits, seed)) - 1.0
    pulse = np.sin(np.pi * np.arange(2 * sps) / (2 * sps))
    i_rail = signal.upfirdn(pulse, chips[0::2], up=2 * sps) if chips.size else np.zeros(0)
    q_rail = signal.upfirdn(pulse, chips[1::2], up=2 * sps) if chips.size else np.zeros(0)

    out = np.zeros(chips.size * sps + sps, dtype=np.complex128) if chips.size else np.zeros(0)
    out[: i_rail.size] += i_rail
    out[sps : sps + q_rail.size] += 1j * q_rail
    return ComplexBuf(out, ZIGBEE_CHIP_RATE_HZ * sps)


def demod_zigbee_oqpsk(rx, sps=2):
    """
    Chip-correlation O-QPSK receiver for a time-aligned waveform.

    Args:
        rx (ComplexBuf): Received waveform starting at the first chip.
        sps (int, optional): Samples per chip.

    Returns:
        numpy.ndarray: Decoded bits, 4 per complete 32-chip symbol, LSB first.
    """
    _check_sps(sps)
    n_symbols = max(0, (len(rx) - sps) // (ZIGBEE_CHIPS_PER_SYMBOL * sps))
    n_pairs = n_symbols * ZIGBEE_CHIPS_PER_SYMBOL // 2
    i_idx = (2 * np.arange(n_pairs) + 1) * sps
    q_idx = (2 * np.arange(n_pairs) + 2) * sps
    chips = np.empty(2 * n_pairs)
    chips[0::2] = np.sign(rx.samples.real[i_idx])
    chips[1::2] = np.sign(rx.samples.imag[q_idx])

    reference = 2.0 * ZIGBEE_CHIPS - 1.0
    scores = chips.reshape(n_symbols, ZIGBEE_CHIPS_PER_SYMBOL) @ reference.T
    symbols = np.argmax(scores, axis=1)
    bits = (symbols[:, None] >> np.arange(ZIGBEE_BITS_PER_SYMBOL)) & 1
    return bits.reshape(-1).astype(np.int8)


def gmsk_frequency_pulse(bt, span, sps):
    """
    Gaussian-filtered rectangular frequency pulse sampled on span*sps + 1 points.

    Normalized to unit area so each bit advances the phase by pi*h.
    """
    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    k = 2 * np.pi * bt / math.sqrt(math.log(2))
    g = special.erfc(k * (t - 0.5) / math.sqrt(2)) - special.erfc(k * (t + 0.5) / math.sqrt(2))
    return g / np.sum(g)


def gen_gmsk(n_bits, sps=2, bt=GMSK_BT, seed=0, bit_rate_hz=GMSK_BIT_RATE_HZ):
    """
    GMSK waveform with modulation index 0.5 and unit envelope.

    Args:
        n_bits (int): Number of bits.
        sps (int, optional): Samples per bit.
        bt (float, optional): Bandwidth-time product in (0, 1]. Default is 0.5.
        seed (int, optional): Random seed.
        bit_rate_hz (float, optional): Bit rate; the sample rate is sps times this.

    Returns:
        ComplexBuf: (n_bits - 1)*sps + 4*sps + 1 samples.
    """
    _check_sps(sps)
    if not (0 < bt <= 1):
        raise ConfigError(f"GMSK BT must be in (0, 1] (bt={bt})")
    rate = bit_rate_hz * sps
    if n_bits == 0:
        return ComplexBuf(np.zeros(0), rate)
    nrz = 2.0 * random_bits(n_bits, seed) - 1.0
    freq = signal.upfirdn(gmsk_frequency_pulse(bt, GMSK_SPAN, sps), nrz, up=sps)
    phase = np.pi * GMSK_INDEX * cumulative_trapezoid(freq, initial=0.0)
    return ComplexBuf(np.exp(1j * phase), rate)


def awgn(x, snr_db, seed=0):
    """
    Add circular complex white Gaussian noise at a target per-sample SNR.

    Args:
        x (ComplexBuf): Clean signal.
        snr_db (float): Signal-to-noise ratio in dB; math.inf leaves x unchanged.
        seed (int, optional): Random seed.

    Returns:
        ComplexBuf: Noisy signal.

    Raises:
        MetricError: If x has zero power.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return x
    if not math.isfinite(snr_db):
        raise ConfigError(f"SNR must be finite or +inf (snr_db={snr_db})")
    power = x.power()
    if power <= 0:
        raise MetricError("Cannot set an SNR for a zero-power signal")
    sigma = math.sqrt(power / 10 ** (snr_db / 10) / 2)
    rng = np.random.default_rng(seed)
    noise = sigma * (rng.standard_normal(len(x)) + 1j * rng.standard_normal(len(x)))
    return x.with_samples(x.samples + noise)


def qpsk_ber(rx, tx, sps=2, rolloff=RRC_ROLLOFF):
    """
    Bit error rate of a received QPSK waveform against the transmitted symbols.

    The receiver matched-filters, finds the symbol timing from the
    correlation peak against the known symbols and takes hard decisions.
    Carrier phase is not corrected.

    Args:
        rx (ComplexBuf): Received waveform, roughly aligned to the transmission.
        tx (SymbolStream): Transmitted symbols.
        sps (int, optional): Samples per symbol.
        rolloff (float, optional): RRC rolloff used at the transmitter.

    Returns:
        float: Fraction of bits in error.

    Raises:
        TimingError: If no clear correlation peak is found.
    """
    n = len(tx)
    taps = rrc_taps(rolloff, RRC_SPAN, sps) / sps
    z = signal.upfirdn(taps, rx.samples)
    reference = np.zeros(n * sps, dtype=np.complex128)
    reference[::sps] = tx.symbols
    if z.size < reference.size:
        raise TimingError(f"Received waveform too short for {n} symbols (samples={len(rx)})")

    corr = signal.correlate(z, reference, mode="valid")
    offset = int(np.argmax(np.abs(corr)))
    samples = z[offset : offset + n * sps : sps]
    rms = math.sqrt(float(np.mean(np.abs(samples) ** 2))) if n else 0.0
    peak = abs(corr[offset]) / (n * rms) if rms > 0 else 0.0
    if peak < MIN_TIMING_PEAK:
        logger.error(f"QPSK timing recovery failed (peak={peak:.3f}, offset={offset})")
        raise TimingError(f"QPSK timing recovery failed (peak={peak:.3f})")
    logger.debug(f"QPSK timing recovered (offset={offset}, peak={peak:.3f})")

    errors = np.count_nonzero(qpsk_symbols_to_bits(samples) != qpsk_symbols_to_bits(tx.symbols))
    return errors / (2 * n)


def generate(scheme, n_symbols, sps, seed):
    """
    Render one waveform of the given scheme.

    n_symbols counts QPSK symbols, O-QPSK payload bits or GMSK bits.

    Returns:
        tuple: (SymbolStream or None, ComplexBuf)
    """
    if scheme == "qpsk":
        return gen_qpsk(n_symbols, sps, seed=seed)
    if scheme == "zigbee_oqpsk":
        return None, gen_zigbee_oqpsk(n_symbols, sps, seed=seed)
    if scheme == "gmsk":
        return None, gen_gmsk(n_symbols, sps, seed=seed)
    raise ConfigError(f"Unsupported scheme (scheme={scheme}); expected one of {SCHEMES}")


NATIVE_RATES_HZ = {
    "qpsk": QPSK_SYMBOL_RATE_HZ,
    "zigbee_oqpsk": ZIGBEE_CHIP_RATE_HZ,
    "gmsk": GMSK_BIT_RATE_HZ,
}


def samples_per_symbol(scheme, sample_rate_hz):
    """Integer samples per symbol (chip for O-QPSK, bit for GMSK) at a sample rate."""
    if scheme not in NATIVE_RATES_HZ:
        raise ConfigError(f"Unsupported scheme (scheme={scheme}); expected one of {SCHEMES}")
    sps = sample_rate_hz / NATIVE_RATES_HZ[scheme]
    if sps < 1 or not math.isclose(sps, round(sps), rel_tol=1e-12):
        raise ConfigError(
            f"Sample rate is not an integer multiple of the {scheme} rate "
            f"(sample_rate_hz={sample_rate_hz}, native={NATIVE_RATES_HZ[scheme]})"
        )
    return int(round(sps))


def render(scheme, sample_rate_hz, n_symbols, seed, sps=None):
    """
    Render a stream payload at a given sample rate.

    QPSK keeps sps samples per symbol (default 2) and scales its symbol rate
    to fit the sample rate; O-QPSK and GMSK keep their native chip and bit
    rates and derive sps from the sample rate.

    Returns:
        tuple: (SymbolStream or None, ComplexBuf)
    """
    if scheme == "qpsk":
        sps = 2 if sps is None else sps
        return gen_qpsk(n_symbols, sps, seed=seed, symbol_rate_hz=sample_rate_hz / sps)
    return generate(scheme, n_symbols, samples_per_symbol(scheme, sample_rate_hz), seed)
