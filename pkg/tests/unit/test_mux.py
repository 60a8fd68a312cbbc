import unittest
import numpy as np

from pfbmux.errors import ConfigError, PlanError
from pfbmux.numerics import ComplexBuf, nmse_db
from pfbmux.filterbank import default_synthesis_prototype
from pfbmux.mux import (
    METHODS,
    StreamSpec,
    WidebandSpec,
    default_demux_filter,
    default_direct_filter,
    demux_reference,
    multiplex,
    mux_dft,
    pad_to_common_duration,
    plan_mux,
    stream_gains,
)
from pfbmux.waveforms import gen_qpsk

WB = WidebandSpec(16e6, 32, 2)
SYNTHESIS = default_synthesis_prototype(32)


def stream(name, offset_hz, samples, rate_hz=4e6, scheme="qpsk"):
    return StreamSpec(name, rate_hz, offset_hz, scheme, ComplexBuf(samples, rate_hz))


def run(method, streams, **kwargs):
    out, _ = multiplex(method, streams, WB, SYNTHESIS, **kwargs)
    return out


def peak_frequency(buf):
    spectrum = np.abs(np.fft.fft(buf.samples))
    freqs = np.fft.fftfreq(len(buf), 1 / buf.sample_rate_hz)
    return freqs[np.argmax(spectrum)]


class TestWideband(unittest.TestCase):
    def test_derived_values(self):
        self.assertEqual(WB.L, 16)
        self.assertEqual(WB.subband_interval_hz, 0.5e6)
        self.assertEqual(WB.synthesis_shape().K, 32)

    def test_invalid(self):
        with self.assertRaises(ConfigError):
            WidebandSpec(16e6, 31, 2)
        with self.assertRaises(ConfigError):
            WidebandSpec(0.0, 32, 2)

    def test_payload_rate_must_match(self):
        with self.assertRaises(ConfigError):
            StreamSpec("a", 4e6, 0.0, "qpsk", ComplexBuf(np.ones(4), 2e6))


class TestPlan(unittest.TestCase):
    def test_three_streams(self):
        streams = [stream(f"s{i}", off, np.zeros(0)) for i, off in enumerate((-5e6, 0.0, 5e6))]
        plan = plan_mux(streams, WB)
        self.assertEqual([r.K_ana for r in plan.routes], [8, 8, 8])
        self.assertEqual([r.M_ana for r in plan.routes], [4, 4, 4])
        self.assertEqual([r.shift for r in plan.routes], [-10, 0, 10])
        np.testing.assert_array_equal(plan.route("s2").bins, [10, 11, 12, 13, 6, 7, 8, 9, 14])
        self.assertEqual(plan.to_dict()["wideband"]["subband_interval_hz"], 0.5e6)

    def test_wrapped_bins(self):
        plan = plan_mux([stream("a", -5e6, np.zeros(0))], WB)
        np.testing.assert_array_equal(plan.routes[0].bins, [22, 23, 24, 25, 18, 19, 20, 21, 26])

    def test_collision(self):
        streams = [stream("a", 0.0, np.zeros(0)), stream("b", 1e6, np.zeros(0))]
        with self.assertRaises(PlanError):
            plan_mux(streams, WB)
        plan = plan_mux(streams, WB, allow_overlap=True)
        self.assertEqual(len(plan.routes), 2)

    def test_band_edge_bin_is_claimed(self):
        # the band-edge row of a stream at 0 Hz also lands on bin +4
        streams = [stream("a", 0.0, np.zeros(0)), stream("b", 4e6, np.zeros(0), rate_hz=4e6)]
        with self.assertRaises(PlanError):
            plan_mux(streams, WB)

    def test_off_grid_offset(self):
        with self.assertRaises(PlanError):
            plan_mux([stream("a", 0.3e6, np.zeros(0))], WB)

    def test_off_grid_rate(self):
        with self.assertRaises(PlanError):
            plan_mux([stream("a", 0.0, np.zeros(0), rate_hz=1.5e6)], WB)

    def test_stream_must_fit(self):
        with self.assertRaises(PlanError):
            plan_mux([stream("a", 7e6, np.zeros(0))], WB)

    def test_unknown_route(self):
        plan = plan_mux([stream("a", 0.0, np.zeros(0))], WB)
        with self.assertRaises(PlanError):
            plan.route("b")

    def test_gains(self):
        plan = plan_mux([stream("a", 0.0, np.zeros(0))], WB)
        gains = stream_gains(plan, SYNTHESIS)
        self.assertAlmostEqual(gains["a"] * WB.L, 1.0, delta=0.05)


class TestPadding(unittest.TestCase):
    def test_common_duration(self):
        a = stream("a", 0.0, np.ones(100), rate_hz=4e6)
        b = stream("b", 4e6, np.ones(100), rate_hz=8e6)
        padded = pad_to_common_duration([a, b])
        self.assertEqual(len(padded[0].payload), 100)
        self.assertEqual(len(padded[1].payload), 200)
        np.testing.assert_array_equal(padded[1].payload.samples[100:], 0)


class TestMultiplex(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(12)

    def test_unknown_method(self):
        with self.assertRaises(ConfigError):
            multiplex("ofdm", [], WB)

    def test_nnpfb_needs_synthesis(self):
        with self.assertRaises(ConfigError):
            multiplex("nnpfb", [stream("a", 0.0, np.ones(8))], WB)

    def test_output_lengths_are_comparable(self):
        n = 400
        streams = [stream("a", 0.0, self.rng.standard_normal(n) + 0j)]
        for method in METHODS:
            out = run(method, streams)
            self.assertEqual(out.sample_rate_hz, 16e6)
            self.assertLessEqual(abs(len(out) - 4 * n), 600, method)

    def test_empty_payloads(self):
        streams = [stream("a", -5e6, np.zeros(0)), stream("b", 5e6, np.zeros(0))]
        for method in METHODS:
            self.assertEqual(len(run(method, streams)), 0, method)

    def test_tone_placement(self):
        for method in METHODS:
            for offset in (-5e6, 0.0, 5e6):
                out = run(method, [stream("a", offset, np.ones(1024))])
                self.assertLessEqual(abs(peak_frequency(out) - offset), 16e6 / len(out), f"{method} {offset}")

    def test_linearity(self):
        x = self.rng.standard_normal(200) + 1j * self.rng.standard_normal(200)
        y = self.rng.standard_normal(200) + 1j * self.rng.standard_normal(200)
        for method in METHODS:
            both = run(method, [stream("a", 5e6, 2.0 * x - 0.5j * y)]).samples
            parts = 2.0 * run(method, [stream("a", 5e6, x)]).samples - 0.5j * run(method, [stream("a", 5e6, y)]).samples
            np.testing.assert_allclose(both, parts, atol=1e-9, err_msg=method)

    def test_streams_superpose(self):
        x = self.rng.standard_normal(200) + 0j
        y = self.rng.standard_normal(200) + 0j
        for method in METHODS:
            together = run(method, [stream("a", -5e6, x), stream("b", 5e6, y)]).samples
            apart = run(method, [stream("a", -5e6, x)]).samples + run(method, [stream("b", 5e6, y)]).samples
            np.testing.assert_allclose(together, apart, atol=1e-9, err_msg=method)

    def test_direct_filters_forwarded(self):
        x = self.rng.standard_normal(200) + 0j
        streams = [stream("a", 0.0, x)]
        default = run("direct", streams).samples
        held = run("direct", streams, direct_filters={4: default_direct_filter(4).scaled(2.0)}).samples
        np.testing.assert_allclose(held, 2.0 * default, atol=1e-9)
        other_ratio = run("direct", streams, direct_filters={2: default_direct_filter(2)}).samples
        np.testing.assert_allclose(other_ratio, default, atol=1e-12)

    def test_dft_block_override(self):
        out = mux_dft([stream("a", 0.0, np.ones(64))], WB, dft_block=16)
        self.assertEqual(len(out), 64 * 4)
        with self.assertRaises(PlanError):
            mux_dft([stream("a", 0.5e6, np.ones(64))], WB, dft_block=4)


class TestDemux(unittest.TestCase):
    def setUp(self):
        _, self.x = gen_qpsk(600, sps=4, seed=5, symbol_rate_hz=1e6)
        self.spec = stream("q", 5e6, self.x.samples)

    def recovered_nmse(self, method):
        out = run(method, [self.spec])
        return nmse_db(demux_reference(out, self.spec, WB), self.x, max_lag=200)

    def test_filters(self):
        self.assertEqual(len(default_direct_filter(4)), 129)
        self.assertAlmostEqual(float(np.sum(default_direct_filter(4).taps)), 4.0, places=9)
        self.assertEqual(len(default_demux_filter(4)), 2 * 4 * 32 + 1)

    def test_filter_bank_and_direct_recover_the_stream(self):
        for method in ("nnpfb", "direct"):
            self.assertLessEqual(self.recovered_nmse(method), -30, method)

    def test_dft_is_worse(self):
        self.assertGreater(self.recovered_nmse("dft"), self.recovered_nmse("nnpfb"))

    def test_band_edge_tone_recovered(self):
        """A tone 0.4625 stream rates above centre straddles the band-edge row."""
        n = np.arange(4096)
        tone = np.exp(2j * np.pi * 1.85e6 * n / 4e6) * np.hanning(n.shape[0])
        spec = stream("edge", 5e6, tone)
        out = run("nnpfb", [spec])
        self.assertLessEqual(nmse_db(demux_reference(out, spec, WB), spec.payload, max_lag=200), -30)

    def test_rate_must_divide(self):
        spec = stream("q", 0.0, np.ones(8), rate_hz=3e6)
        with self.assertRaises(PlanError):
            demux_reference(ComplexBuf(np.ones(16), 16e6), spec, WB)


if __name__ == "__main__":
    unittest.main()
