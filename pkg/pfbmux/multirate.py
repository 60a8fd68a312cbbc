"""Interpolation, decimation and the stateless polyphase decomposition."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import ConfigError, DimensionError
from .numerics import ComplexBuf, PrototypeFilter

logger = logging.getLogger("pfbmux")

ANALYSIS = "analysis"
SYNTHESIS = "synthesis"


@dataclass(frozen=True, eq=False)
class PolyphaseSet:
    """
    The K per-branch subfilters of a prototype, stored as a dense K x T matrix.

    Analysis branches hold p_rho(m) = h(m*M - rho); synthesis branches hold
    q_rho(j) = f(j*L + rho) for j from -offset, so column c stores
    j = c - offset. Indices outside the prototype's support are zero.

    Attributes:
        branches (numpy.ndarray): Real matrix of shape (K, T).
        role (str): 'analysis' or 'synthesis'.
        stride (int): M for analysis, L for synthesis.
        prototype_length (int): Length of the decomposed prototype.
        offset (int): Leading columns holding negative branch indices.
    """

    branches: np.ndarray
    role: str
    stride: int
    prototype_length: int
    offset: int = 0

    @property
    def K(self):
        return self.branches.shape[0]

    def tap_index(self):
        """Prototype index addressed by every (rho, column) branch position."""
        rho = np.arange(self.K)[:, None]
        m = np.arange(self.branches.shape[1])[None, :] - self.offset
        if self.role == ANALYSIS:
            return m * self.stride - rho
        return m * self.stride + rho

    def reconstruct(self):
        """
        Re-interleave the branches into the original prototype taps.

        Every tap sits in K/stride branch positions across all K rows; all of
        them are read back and must agree.

        Returns:
            numpy.ndarray: The prototype, exactly.

        Raises:
            DimensionError: If a tap is missing, duplicated unevenly, the copies
                disagree or a position outside the support is nonzero.
        """
        N = self.prototype_length
        idx = self.tap_index()
        valid = (idx >= 0) & (idx < N)
        copies = np.bincount(idx[valid], minlength=N)
        expected = self.K // self.stride
        if np.any(copies != expected):
            raise DimensionError(
                f"Branches do not cover the prototype evenly (expected={expected}, "
                f"min={copies.min()}, max={copies.max()})"
            )
        taps = np.zeros(N)
        taps[idx[valid]] = self.branches[valid]
        if not np.array_equal(taps[idx[valid]], self.branches[valid]):
            raise DimensionError("Branch copies of the same prototype tap disagree")
        if np.any(self.branches[~valid] != 0):
            raise DimensionError("Branch positions outside the prototype support are nonzero")
        return taps


def interpolate(x, L, g):
    """
    Upsample by L and filter: x'(m) = sum_r g(m - r*L) x(r).

    Same semantics as a transposed convolution with kernel g and stride L.

    Args:
        x (ComplexBuf): Input at rate f_s.
        L (int): Upsampling factor, at least 1.
        g (PrototypeFilter or array-like): Anti-imaging filter taps.

    Returns:
        ComplexBuf: (len(x) - 1)*L + len(g) samples at rate L*f_s.
    """
    if L < 1:
        raise ConfigError(f"Upsampling factor must be positive (L={L})")
    taps = g.taps if isinstance(g, PrototypeFilter) else np.asarray(g, dtype=np.float64)
    rate = x.sample_rate_hz * L
    if len(x) == 0:
        return ComplexBuf(np.zeros(0), rate)
    return ComplexBuf(signal.upfirdn(taps, x.samples, up=L), rate)


def decimate(x, M, h, phase=0):
    """
    Filter and downsample by M: x'(m) = sum_n h(M*m + phase - n) x(n).

    The output is the full convolution sampled from index phase onwards, i.e.
    ceil((len(x) + len(h) - 1 - phase) / M) samples at rate f_s / M.

    Args:
        x (ComplexBuf): Input at rate f_s.
        M (int): Downsampling factor, at least 1.
        h (PrototypeFilter or array-like): Anti-aliasing filter taps.
        phase (int, optional): Sampling phase in [0, M). Default is 0.

    Returns:
        ComplexBuf: Decimated signal.
    """
    if M < 1:
        raise ConfigError(f"Downsampling factor must be positive (M={M})")
    if not 0 <= phase < M:
        raise ConfigError(f"Decimation phase must lie in [0, M) (phase={phase}, M={M})")
    taps = h.taps if isinstance(h, PrototypeFilter) else np.asarray(h, dtype=np.float64)
    rate = x.sample_rate_hz / M
    if len(x) == 0:
        return ComplexBuf(np.zeros(0), rate)
    if phase == 0:
        return ComplexBuf(signal.upfirdn(taps, x.samples, down=M), rate)
    return ComplexBuf(signal.upfirdn(taps, x.samples)[phase::M], rate)


def polyphase_decompose_analysis(h, K, M):
    """
    Decompose an analysis prototype into K branches p_rho(m) = h(m*M - rho).

    Args:
        h (PrototypeFilter): Analysis prototype.
        K (int): Number of branches (subbands).
        M (int): Downsampling factor; K must equal M*I for an integer I.

    Returns:
        PolyphaseSet: Branch matrix with uniform, zero-padded length.

    Raises:
        ConfigError: If K is not a positive multiple of M.
    """
    if M < 1 or K < M or K % M != 0:
        raise ConfigError(f"K must be a multiple of M (K={K}, M={M})")
    N = len(h)
    T = (N + K - 2) // M + 1
    rho = np.arange(K)[:, None]
    m = np.arange(T)[None, :]
    idx = m * M - rho
    valid = (idx >= 0) & (idx < N)
    branches = np.where(valid, h.taps[np.clip(idx, 0, N - 1)], 0.0)
    return PolyphaseSet(branches, ANALYSIS, M, N)


def polyphase_decompose_synthesis(f, K, L):
    """
    Decompose a synthesis prototype into K branches q_rho(j) = f(j*L + rho).

    Rows rho >= L reach back to j = -floor(rho/L), so the set carries
    offset = K/L - 1 leading columns.

    Args:
        f (PrototypeFilter): Synthesis prototype.
        K (int): Number of branches (subbands).
        L (int): Upsampling factor; K must equal L*I for an integer I.

    Returns:
        PolyphaseSet: Branch matrix with uniform, zero-padded length.

    Raises:
        ConfigError: If K is not a positive multiple of L.
    """
    if L < 1 or K < L or K % L != 0:
        raise ConfigError(f"K must be a multiple of L (K={K}, L={L})")
    N = len(f)
    offset = K // L - 1
    T = (N - 1) // L + 1 + offset
    rho = np.arange(K)[:, None]
    j = np.arange(T)[None, :] - offset
    idx = j * L + rho
    valid = (idx >= 0) & (idx < N)
    branches = np.where(valid, f.taps[np.clip(idx, 0, N - 1)], 0.0)
    return PolyphaseSet(branches, SYNTHESIS, L, N, offset)


def signal_decompose(x, K):
    """
    Split a signal into K branches x_rho(r) = x(r*K + rho).

    A trailing partial frame is zero-padded.

    Args:
        x (ComplexBuf or array-like): Input samples.
        K (int): Number of branches.

    Returns:
        numpy.ndarray: Complex matrix of shape (K, ceil(len(x)/K)).
    """
    if K < 1:
        raise ConfigError(f"Branch count must be positive (K={K})")
    samples = x.samples if isinstance(x, ComplexBuf) else np.asarray(x, dtype=np.complex128)
    R = -(-samples.shape[0] // K)
    padded = np.zeros(R * K, dtype=np.complex128)
    padded[: samples.shape[0]] = samples
    return padded.reshape(R, K).T.copy()


def interleave(branches, K, sample_rate_hz=1.0):
    """
    Interleave K equal-length branches: s(r*K + rho) = branch_rho(r).

    Args:
        branches (sequence or numpy.ndarray): K branches of equal length.
        K (int): Number of branches.
        sample_rate_hz (float, optional): Rate of the interleaved output.

    Returns:
        ComplexBuf: The interleaved signal.

    Raises:
        DimensionError: If the branch count or lengths disagree.
    """
    rows = [np.asarray(b, dtype=np.complex128).reshape(-1) for b in branches]
    if len(rows) != K:
        raise DimensionError(f"Expected {K} branches, got {len(rows)}")
    lengths = {row.shape[0] for row in rows}
    if len(lengths) > 1:
        raise DimensionError(f"Branches have unequal lengths (lengths={sorted(lengths)})")
    matrix = np.vstack(rows) if rows else np.zeros((0, 0), dtype=np.complex128)
    return ComplexBuf(matrix.T.reshape(-1), sample_rate_hz)
