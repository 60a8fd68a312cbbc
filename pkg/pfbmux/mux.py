"""
Spectrum multiplexing: place baseband streams at offsets inside one wideband stream.

Three methods share one interface: the filter-bank multiplexer (one analysis
bank per stream, a shared synthesis bank), the direct interpolate-and-modulate
baseline, and the block DFT/IDFT baseline.
"""

import math
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PlanError
from .numerics import ComplexBuf, design_windowed_sinc, dft, idft
from .multirate import decimate, interpolate
from .filterbank import (
    AnalysisBankConfig,
    SubbandFrame,
    SynthesisBankConfig,
    afb_polyphase,
    cascade_delay,
    cascade_gain,
    default_analysis_prototype,
    route_subbands,
    sfb_polyphase,
    signed_bins,
    subband_routes,
)
from .utils import parallel_map

logger = logging.getLogger("pfbmux")

METHODS = ("nnpfb", "direct", "dft")

DIRECT_TAPS_PER_RATIO = 32
DEMUX_HALF_SPAN = 127


def _is_integer(value, tol=1e-9):
    return math.isclose(value, round(value), rel_tol=0, abs_tol=tol)


@dataclass(frozen=True, eq=False)
class StreamSpec:
    """
    One baseband stream to be multiplexed.

    Attributes:
        name (str): Stream label used in plans and reports.
        sample_rate_hz (float): Native sample rate.
        center_offset_hz (float): Offset from the wideband centre.
        scheme (str): Modulation scheme tag.
        payload (ComplexBuf): Samples at sample_rate_hz.
    """

    name: str
    sample_rate_hz: float
    center_offset_hz: float
    scheme: str
    payload: ComplexBuf

    def __post_init__(self):
        if not math.isclose(self.payload.sample_rate_hz, self.sample_rate_hz, rel_tol=1e-12):
            raise ConfigError(
                f"Stream payload rate does not match its spec (stream={self.name}, "
                f"payload={self.payload.sample_rate_hz}, spec={self.sample_rate_hz})"
            )

    def with_payload(self, payload):
        return StreamSpec(self.name, self.sample_rate_hz, self.center_offset_hz, self.scheme, payload)


@dataclass(frozen=True)
class WidebandSpec:
    """
    The wideband output and its synthesis bank shape.

    Attributes:
        sample_rate_hz (float): Wideband sample rate.
        K_syn (int): Synthesis subband count.
        I (int): Oversampling ratio shared by every bank.
    """

    sample_rate_hz: float
    K_syn: int
    I: int = 2

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ConfigError(f"Wideband rate must be positive (sample_rate_hz={self.sample_rate_hz})")
        if self.I < 1 or self.K_syn < 1 or self.K_syn % self.I != 0:
            raise ConfigError(f"K_syn must be a multiple of I (K_syn={self.K_syn}, I={self.I})")

    @property
    def L(self):
        return self.K_syn // self.I

    @property
    def subband_interval_hz(self):
        return self.sample_rate_hz / self.K_syn

    def synthesis_shape(self, prototype=None):
        return SynthesisBankConfig(self.K_syn, self.L, self.I, prototype)


@dataclass(frozen=True, eq=False)
class StreamRoute:
    """Where one stream's analysis subbands land in the synthesis bank."""

    name: str
    K_ana: int
    M_ana: int
    shift: int
    bins: np.ndarray

    def to_dict(self):
        return {
            "name": self.name,
            "K_ana": self.K_ana,
            "M_ana": self.M_ana,
            "shift": self.shift,
            "bins": [int(b) for b in self.bins],
        }


@dataclass(frozen=True, eq=False)
class MuxPlan:
    """Validated subband mapping for a set of streams."""

    wideband: WidebandSpec
    routes: list = field(default_factory=list)

    def route(self, name):
        for route in self.routes:
            if route.name == name:
                return route
        raise PlanError(f"Stream is not part of the plan (stream={name})")

    def to_dict(self):
        return {
            "wideband": {
                "sample_rate_hz": self.wideband.sample_rate_hz,
                "K_syn": self.wideband.K_syn,
                "I": self.wideband.I,
                "subband_interval_hz": self.wideband.subband_interval_hz,
            },
            "streams": [route.to_dict() for route in self.routes],
        }


def _check_fits(stream, wb):
    half_band = wb.sample_rate_hz / 2
    edge = abs(stream.center_offset_hz) + stream.sample_rate_hz / 2
    if edge > half_band * (1 + 1e-12):
        raise PlanError(
            f"Stream does not fit inside the wideband (stream={stream.name}, "
            f"edge={edge}, half_band={half_band})"
        )


def plan_mux(streams, wb, allow_overlap=False):
    """
    Derive each stream's analysis bank and bin mapping.

    Args:
        streams (list): StreamSpec objects.
        wb (WidebandSpec): Wideband output.
        allow_overlap (bool, optional): Permit two streams on one synthesis bin.

    Returns:
        MuxPlan: Per-stream K_ana = rate/interval, M_ana = K_ana/I and
            shift = offset/interval, with signed bins wrapped modulo K_syn and
            the band-edge bin listed last when it is routed to both edges.

    Raises:
        PlanError: If a rate or offset is off the subband grid, a stream
            does not fit, or two streams collide.
    """
    interval = wb.subband_interval_hz
    routes = []
    owners = {}
    for stream in streams:
        _check_fits(stream, wb)
        k_ana = stream.sample_rate_hz / interval
        if not _is_integer(k_ana) or round(k_ana) < 1:
            raise PlanError(
                f"Stream rate is not a multiple of the subband interval "
                f"(stream={stream.name}, rate={stream.sample_rate_hz}, interval={interval})"
            )
        k_ana = int(round(k_ana))
        if k_ana % wb.I != 0 or k_ana > wb.K_syn:
            raise PlanError(
                f"Stream needs an analysis bank of K={k_ana}, which does not fit I={wb.I} "
                f"and K_syn={wb.K_syn} (stream={stream.name})"
            )
        shift = stream.center_offset_hz / interval
        if not _is_integer(shift):
            raise PlanError(
                f"Stream offset not grid-aligned (stream={stream.name}, "
                f"offset={stream.center_offset_hz}, interval={interval})"
            )
        shift = int(round(shift))
        _, _, bins = subband_routes(k_ana, wb.K_syn, shift)
        for b in bins:
            owners.setdefault(int(b), []).append(stream.name)
        routes.append(StreamRoute(stream.name, k_ana, k_ana // wb.I, shift, bins))

    collisions = {b: names for b, names in owners.items() if len(names) > 1}
    if collisions and not allow_overlap:
        names = sorted({name for group in collisions.values() for name in group})
        raise PlanError(
            f"Streams share synthesis bins (streams={names}, bins={sorted(collisions)})"
        )
    logger.debug(f"Planned multiplex (streams={len(routes)}, interval={interval})")
    return MuxPlan(wb, routes)


def pad_to_common_duration(streams):
    """
    Zero-pad every stream to the duration of the longest one.

    Returns:
        list: StreamSpec objects with padded payloads.
    """
    if not streams:
        return []
    duration = max(len(s.payload) / s.sample_rate_hz for s in streams)
    padded = []
    for s in streams:
        target = int(math.ceil(duration * s.sample_rate_hz - 1e-9))
        extra = max(0, target - len(s.payload))
        samples = np.concatenate([s.payload.samples, np.zeros(extra, dtype=np.complex128)])
        padded.append(s.with_payload(s.payload.with_samples(samples)))
    return padded


def _sum_padded(arrays, length=None):
    length = max((a.shape[-1] for a in arrays), default=0) if length is None else length
    shape = arrays[0].shape[:-1] + (length,) if arrays else (length,)
    out = np.zeros(shape, dtype=np.complex128)
    for a in arrays:
        out[..., : a.shape[-1]] += a
    return out


def analysis_bank_for(route, wb, prototypes=None):
    """AnalysisBankConfig for a planned stream, using prototypes[K_ana] if given."""
    prototypes = prototypes or {}
    prototype = prototypes.get(route.K_ana)
    if prototype is None:
        prototype = default_analysis_prototype(route.K_ana)
    return AnalysisBankConfig(route.K_ana, route.M_ana, wb.I, prototype)


def stream_gains(plan, synthesis_prototype, analysis_prototypes=None):
    """Cascade gain each planned stream is divided by in mux_nnpfb, keyed by stream name."""
    scfg = plan.wideband.synthesis_shape(synthesis_prototype)
    return {
        route.name: cascade_gain(analysis_bank_for(route, plan.wideband, analysis_prototypes), scfg)
        for route in plan.routes
    }


def mux_nnpfb(streams, plan, synthesis_prototype, analysis_prototypes=None, workers=0):
    """
    Filter-bank multiplexer.

    Every stream is split by its own polyphase analysis bank, scaled to unit
    cascade gain and routed into the shared synthesis bank; one synthesis
    pass then produces the wideband signal.

    Args:
        streams (list): StreamSpec objects matching the plan.
        plan (MuxPlan): Output of plan_mux.
        synthesis_prototype (PrototypeFilter): Shared synthesis prototype.
        analysis_prototypes (dict, optional): {K_ana: PrototypeFilter}; defaults
            to default_analysis_prototype(K_ana).
        workers (int, optional): Worker threads for per-stream analysis.

    Returns:
        ComplexBuf: Wideband signal at the plan's wideband rate.

    Raises:
        PlanError: If a stream is missing from the plan.
    """
    wb = plan.wideband
    scfg = wb.synthesis_shape(synthesis_prototype)
    streams = pad_to_common_duration(streams)
    if all(len(s.payload) == 0 for s in streams):
        return ComplexBuf(np.zeros(0), wb.sample_rate_hz)

    def analyze(stream):
        route = plan.route(stream.name)
        acfg = analysis_bank_for(route, wb, analysis_prototypes)
        lag = cascade_delay(acfg, scfg)
        gain = cascade_gain(acfg, scfg)
        frame = afb_polyphase(stream.payload, acfg)
        routed = route_subbands(frame, wb.K_syn, route.shift, lag)
        logger.debug(f"Analyzed stream (stream={stream.name}, K_ana={acfg.K}, gain={gain:.6g})")
        return routed.data / gain, routed.subband_rate_hz, routed.subband_interval_hz

    parts = parallel_map(analyze, streams, workers)
    data = _sum_padded([p[0] for p in parts])
    return sfb_polyphase(SubbandFrame(data, parts[0][1], parts[0][2]), scfg)


def _rate_ratio(stream, wb):
    ratio = wb.sample_rate_hz / stream.sample_rate_hz
    if ratio < 1 or not _is_integer(ratio):
        raise PlanError(
            f"Wideband rate is not an integer multiple of the stream rate "
            f"(stream={stream.name}, ratio={ratio})"
        )
    return int(round(ratio))


def default_direct_filter(ratio):
    """Anti-imaging filter for the direct method: 32R+1 taps, cutoff pi/R, DC gain R."""
    taps = DIRECT_TAPS_PER_RATIO * ratio + 1
    return design_windowed_sinc(math.pi / ratio, taps).scaled(ratio)


def default_demux_filter(ratio):
    """Receiver low-pass: 2R*ceil(127/R)+1 taps at cutoff pi/R, unit DC gain."""
    taps = 2 * ratio * int(math.ceil(DEMUX_HALF_SPAN / ratio)) + 1
    return design_windowed_sinc(math.pi / ratio, taps)


def mux_direct(streams, wb, filters=None):
    """
    Direct multiplexer: interpolate each stream, modulate to its offset, sum.

    Args:
        streams (list): StreamSpec objects.
        wb (WidebandSpec): Wideband output.
        filters (dict, optional): {ratio: PrototypeFilter} anti-imaging filters
            with DC gain equal to the ratio; defaults to default_direct_filter.

    Returns:
        ComplexBuf: Wideband signal.

    Raises:
        PlanError: If a stream rate does not divide the wideband rate.
    """
    filters = filters or {}
    streams = pad_to_common_duration(streams)
    parts = []
    for stream in streams:
        _check_fits(stream, wb)
        ratio = _rate_ratio(stream, wb)
        g = filters.get(ratio)
        if g is None:
            g = default_direct_filter(ratio)
        up = interpolate(stream.payload, ratio, g).samples
        n = np.arange(up.shape[0])
        parts.append(up * np.exp(2j * np.pi * stream.center_offset_hz * n / wb.sample_rate_hz))
    return ComplexBuf(_sum_padded(parts), wb.sample_rate_hz)


def mux_dft(streams, wb, dft_block=None):
    """
    Block DFT multiplexer.

    Each stream is cut into non-overlapping blocks whose DFT bins are shifted
    to the stream's offset and placed into one wideband IDFT per block; the
    remaining bins are zero. The resolution is the wideband subband interval
    unless dft_block is given, in which case it is the first stream's rate
    divided by dft_block.

    Args:
        streams (list): StreamSpec objects.
        wb (WidebandSpec): Wideband output.
        dft_block (int, optional): DFT size of the first stream.

    Returns:
        ComplexBuf: Wideband signal, one wideband block per stream block.

    Raises:
        PlanError: If a stream rate or offset is off the DFT grid.
    """
    if dft_block is not None and streams:
        resolution = streams[0].sample_rate_hz / dft_block
    else:
        resolution = wb.subband_interval_hz
    n_idft = wb.sample_rate_hz / resolution
    if not _is_integer(n_idft):
        raise PlanError(
            f"Wideband rate is not a multiple of the DFT resolution "
            f"(rate={wb.sample_rate_hz}, resolution={resolution})"
        )
    n_idft = int(round(n_idft))

    streams = pad_to_common_duration(streams)
    layouts = []
    for stream in streams:
        _check_fits(stream, wb)
        block = stream.sample_rate_hz / resolution
        shift = stream.center_offset_hz / resolution
        if not (_is_integer(block) and _is_integer(shift)):
            raise PlanError(
                f"Stream offset not grid-aligned for the DFT method (stream={stream.name}, "
                f"rate={stream.sample_rate_hz}, offset={stream.center_offset_hz}, "
                f"resolution={resolution})"
            )
        block = int(round(block))
        bins = (signed_bins(block) + int(round(shift))) % n_idft
        layouts.append((stream, block, bins))

    n_blocks = max((-(-len(s.payload) // block) for s, block, _ in layouts), default=0)
    out = np.zeros(n_blocks * n_idft, dtype=np.complex128)
    for b in range(n_blocks):
        spectrum = np.zeros(n_idft, dtype=np.complex128)
        for stream, block, bins in layouts:
            chunk = np.zeros(block, dtype=np.complex128)
            piece = stream.payload.samples[b * block : (b + 1) * block]
            chunk[: piece.shape[0]] = piece
            spectrum[bins] += dft(chunk, block).bins * (n_idft / block)
        out[b * n_idft : (b + 1) * n_idft] = idft(spectrum)
    return ComplexBuf(out, wb.sample_rate_hz)


def demux_reference(wideband, spec, wb, filt=None):
    """
    Reference receiver: shift by -offset, low-pass and decimate to the stream rate.

    Args:
        wideband (ComplexBuf): Multiplexed signal.
        spec (StreamSpec): Stream to recover.
        wb (WidebandSpec): Wideband description.
        filt (PrototypeFilter, optional): Low-pass; defaults to default_demux_filter.

    Returns:
        ComplexBuf: Baseband estimate at the stream's native rate, delayed by
            (len(filt) - 1) / 2 wideband samples.
    """
    ratio = _rate_ratio(spec, wb)
    if filt is None:
        filt = default_demux_filter(ratio)
    n = np.arange(len(wideband))
    mixed = wideband.with_samples(
        wideband.samples * np.exp(-2j * np.pi * spec.center_offset_hz * n / wb.sample_rate_hz)
    )
    return decimate(mixed, ratio, filt)


def multiplex(method, streams, wb, synthesis_prototype=None, analysis_prototypes=None,
              dft_block=None, allow_overlap=False, workers=0, direct_filters=None):
    """
    Run one multiplexing method.

    Args:
        method (str): One of METHODS.
        streams (list): StreamSpec objects.
        wb (WidebandSpec): Wideband output.
        synthesis_prototype (PrototypeFilter, optional): Required for nnpfb.
        analysis_prototypes (dict, optional): {K_ana: PrototypeFilter} for nnpfb.
        dft_block (int, optional): Block length override for dft.
        allow_overlap (bool, optional): Permit two streams on one synthesis bin.
        workers (int, optional): Worker threads for per-stream work.
        direct_filters (dict, optional): {ratio: PrototypeFilter} for direct.

    Returns:
        tuple: (ComplexBuf, MuxPlan)
    """
    if method not in METHODS:
        raise ConfigError(f"Unknown method (method={method}); expected one of {METHODS}")
    plan = plan_mux(streams, wb, allow_overlap)
    if method == "nnpfb":
        if synthesis_prototype is None:
            raise ConfigError("The nnpfb method needs a synthesis prototype")
        return mux_nnpfb(streams, plan, synthesis_prototype, analysis_prototypes, workers), plan
    if method == "direct":
        return mux_direct(streams, wb, direct_filters), plan
    return mux_dft(streams, wb, dft_block), plan
