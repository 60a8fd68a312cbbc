"""Complex buffers, DFT kernels, prototype filter design and quality metrics."""

import math
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal

from .errors import ConfigError, DimensionError, MetricError

logger = logging.getLogger("pfbmux")

NMSE_FLOOR_DB = -120.0
WINDOWS = ("kaiser", "rect")


@dataclass(frozen=True, eq=False)
class ComplexBuf:
    """
    Contiguous complex baseband samples tagged with a sample rate.

    Samples are held as complex128; cf32 files are the float32 on-disk form.

    Attributes:
        samples (numpy.ndarray): 1-D complex samples, all finite.
        sample_rate_hz (float): Sample rate, strictly positive.
    """

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128).reshape(-1)
        if not np.all(np.isfinite(samples)):
            raise ConfigError("ComplexBuf samples must be finite")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ConfigError(
                f"ComplexBuf sample rate must be positive (sample_rate_hz={self.sample_rate_hz})"
            )
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    def with_samples(self, samples):
        """Return a buffer with new samples at the same rate."""
        return ComplexBuf(samples, self.sample_rate_hz)

    def power(self):
        """Mean power of the samples (0 for an empty buffer)."""
        if len(self) == 0:
            return 0.0
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True, eq=False)
class PrototypeFilter:
    """
    Real-valued FIR prototype filter.

    Attributes:
        taps (numpy.ndarray): Real float64 taps, at least one.
        cutoff_norm (float): Normalized cutoff in (0, pi].
        symmetric (bool): Whether taps[i] == taps[N - i] holds exactly.
    """

    taps: np.ndarray
    cutoff_norm: float = math.pi
    symmetric: bool = False

    def __post_init__(self):
        if np.iscomplexobj(self.taps):
            raise ConfigError("Prototype filters must be real-valued")
        taps = np.asarray(self.taps, dtype=np.float64).reshape(-1)
        if taps.size < 1:
            raise ConfigError("Prototype filter needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ConfigError("Prototype filter taps must be finite")
        if not (0 < self.cutoff_norm <= math.pi):
            raise ConfigError(
                f"Cutoff must be in (0, pi] (cutoff_norm={self.cutoff_norm})"
            )
        if self.symmetric and not np.array_equal(taps, taps[::-1]):
            raise ConfigError("Filter declared symmetric but taps are not mirrored")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    def __len__(self):
        return self.taps.shape[0]

    @property
    def half_length(self):
        """Group delay of a linear-phase filter, (len - 1) / 2 samples."""
        return (len(self) - 1) / 2

    def scaled(self, factor):
        """Return the filter with taps multiplied by a real factor."""
        return PrototypeFilter(self.taps * factor, self.cutoff_norm, self.symmetric)

    def to_dict(self):
        return {
            "taps": self.taps.tolist(),
            "cutoff_norm": self.cutoff_norm,
            "symmetric": self.symmetric,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            np.array(data["taps"], dtype=np.float64),
            float(data["cutoff_norm"]),
            bool(data["symmetric"]),
        )


@dataclass(frozen=True, eq=False)
class Spectrum:
    """K DFT bins X[k]."""

    bins: np.ndarray
    K: int = field(init=False)

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128).reshape(-1)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "K", bins.shape[0])


@lru_cache(maxsize=64)
def twiddle_matrix(K, sign):
    """
    K x K matrix of W_K^{sign * k * n} with W_K = exp(j*2*pi/K).

    Args:
        K (int): Transform size.
        sign (int): +1 for the inverse pattern, -1 for the forward pattern.

    Returns:
        numpy.ndarray: Read-only complex matrix indexed [k, n].
    """
    kn = np.outer(np.arange(K), np.arange(K)) % K
    w = np.exp(sign * 2j * np.pi * kn / K)
    w.setflags(write=False)
    return w


def dft(x, K):
    """
    Unnormalized forward DFT, X[k] = sum_n x[n] W_K^{-kn}, as a matrix product.

    Args:
        x (array-like): K complex samples.
        K (int): Transform size.

    Returns:
        Spectrum: The K bins.

    Raises:
        DimensionError: If len(x) != K.
    """
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    if K < 1 or x.shape[0] != K:
        raise DimensionError(f"DFT length mismatch (len={x.shape[0]}, K={K})")
    return Spectrum(twiddle_matrix(K, -1) @ x)


def idft(X):
    """
    Inverse DFT, x[n] = (1/K) sum_k X[k] W_K^{kn}; exact inverse of dft.

    Args:
        X (Spectrum or array-like): K bins.

    Returns:
        numpy.ndarray: K complex samples.

    Raises:
        DimensionError: If X is empty.
    """
    bins = X.bins if isinstance(X, Spectrum) else np.asarray(X, dtype=np.complex128)
    bins = bins.reshape(-1)
    K = bins.shape[0]
    if K < 1:
        raise DimensionError("IDFT of an empty spectrum")
    return (twiddle_matrix(K, 1) @ bins) / K


def make_window(name, num_taps, beta=8.0):
    """
    Symmetric window of the given length.

    Args:
        name (str): 'kaiser' or 'rect'.
        num_taps (int): Window length.
        beta (float, optional): Kaiser shape parameter.

    Returns:
        numpy.ndarray: Window samples.
    """
    if name == "kaiser":
        return signal.windows.kaiser(num_taps, beta, sym=True)
    if name == "rect":
        return signal.windows.boxcar(num_taps, sym=True)
    raise ConfigError(f"Unknown window (window={name}); expected one of {WINDOWS}")


def design_windowed_sinc(cutoff_norm, num_taps, window="kaiser", beta=8.0):
    """
    Design a linear-phase low-pass prototype as a windowed sinc.

    The taps are exactly symmetric about the centre tap and scaled so the DC
    gain (sum of taps) is 1.

    Args:
        cutoff_norm (float): Cutoff in radians/sample, 0 < cutoff_norm <= pi.
        num_taps (int): Odd filter length.
        window (str, optional): 'kaiser' (default) or 'rect'.
        beta (float, optional): Kaiser shape parameter. Default is 8.

    Returns:
        PrototypeFilter: Symmetric prototype.

    Raises:
        ConfigError: If num_taps is even or the cutoff is out of range.
    """
    if num_taps < 1 or num_taps % 2 == 0:
        raise ConfigError(f"Prototype length must be odd (num_taps={num_taps})")
    if not (0 < cutoff_norm <= math.pi):
        raise ConfigError(f"Cutoff must be in (0, pi] (cutoff_norm={cutoff_norm})")

    center = (num_taps - 1) // 2
    fc = cutoff_norm / math.pi
    n = np.arange(num_taps) - center
    taps = fc * np.sinc(fc * n) * make_window(window, num_taps, beta)
    # mirror the first half so symmetry holds bit-for-bit
    taps[center + 1 :] = taps[:center][::-1]
    taps = taps / np.sum(taps)
    return PrototypeFilter(taps, cutoff_norm, symmetric=True)


def freq_response(filt, n_points):
    """
    Magnitude response of a prototype on a uniform grid over [-pi, pi).

    Args:
        filt (PrototypeFilter): Filter to evaluate.
        n_points (int): Number of frequency points, at least len(taps).

    Returns:
        tuple: (omega, magnitude_db) arrays; dB relative to the peak.

    Raises:
        DimensionError: If n_points < len(taps).
    """
    if n_points < len(filt):
        raise DimensionError(
            f"Too few frequency points (n_points={n_points}, taps={len(filt)})"
        )
    omega, h = signal.freqz(filt.taps, worN=n_points, whole=True)
    omega = np.where(omega >= np.pi, omega - 2 * np.pi, omega)
    order = np.argsort(omega)
    mag = np.abs(h[order])
    peak = np.max(mag)
    tiny = np.finfo(np.float64).tiny
    magnitude_db = 20 * np.log10(np.maximum(mag, tiny) / max(peak, tiny))
    return omega[order], magnitude_db


def magnitude_at(filt, omega):
    """Linear magnitude |H(e^{j omega})| of a filter at the given frequencies."""
    omega = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    _, h = signal.freqz(filt.taps, worN=omega)
    return np.abs(h)


def estimate_lag(estimate, reference, max_lag):
    """
    Integer lag aligning estimate to reference by the cross-correlation peak.

    A positive lag means the estimate is delayed: estimate[l + lag] ~ reference[l].

    Args:
        estimate (ComplexBuf): Signal to align.
        reference (ComplexBuf): Reference signal.
        max_lag (int): Largest |lag| searched.

    Returns:
        int: Lag in samples within [-max_lag, max_lag].
    """
    if len(estimate) == 0 or len(reference) == 0:
        return 0
    corr = signal.correlate(estimate.samples, reference.samples, mode="full")
    lags = signal.correlation_lags(len(estimate), len(reference), mode="full")
    window = np.abs(lags) <= max_lag
    if not np.any(window):
        return 0
    candidates = np.abs(corr[window])
    return int(lags[window][np.argmax(candidates)])


def aligned_error(estimate, reference, lag):
    """
    Residual estimate[l + lag] - reference[l] over the reference's support.

    Samples of the estimate outside its support count as zero.
    """
    n = np.arange(len(reference)) + lag
    valid = (n >= 0) & (n < len(estimate))
    shifted = np.zeros(len(reference), dtype=np.complex128)
    shifted[valid] = estimate.samples[n[valid]]
    return shifted - reference.samples


def nmse_db(estimate, reference, max_lag=0):
    """
    Normalized mean squared error in dB after integer-lag alignment.

    Args:
        estimate (ComplexBuf): Reconstructed signal.
        reference (ComplexBuf): Reference signal.
        max_lag (int, optional): Largest |lag| searched by cross-correlation.

    Returns:
        float: 10*log10(sum|e|^2 / sum|ref|^2), clamped below at -120 dB.

    Raises:
        MetricError: If the reference has zero energy or the sample rates differ.
    """
    if not math.isclose(estimate.sample_rate_hz, reference.sample_rate_hz, rel_tol=1e-12):
        raise MetricError(
            f"NMSE needs equal sample rates (estimate={estimate.sample_rate_hz}, "
            f"reference={reference.sample_rate_hz})"
        )
    ref_energy = float(np.sum(np.abs(reference.samples) ** 2))
    if ref_energy <= 0:
        raise MetricError("NMSE is undefined for a zero-energy reference")

    lag = estimate_lag(estimate, reference, max_lag) if max_lag > 0 else 0
    err_energy = float(np.sum(np.abs(aligned_error(estimate, reference, lag)) ** 2))
    logger.debug(f"NMSE alignment (lag={lag}, max_lag={max_lag})")
    if err_energy <= 0:
        return NMSE_FLOOR_DB
    return max(NMSE_FLOOR_DB, 10 * math.log10(err_energy / ref_energy))
