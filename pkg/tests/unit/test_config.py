import os
import json
import math
import shutil
import tempfile
import unittest
import numpy as np

from pfbmux.errors import ConfigError, PlanError, SampleIOError
from pfbmux.numerics import ComplexBuf
from pfbmux.mux import WidebandSpec
from pfbmux.learn import LearnableSynthesisFilter, save_trained_filter
from pfbmux.utils import write_cf32
from pfbmux.config import (
    build_streams,
    load_config,
    parse_config,
    plan_streams,
    stream_seed,
    synthesis_prototype,
)

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "..", "configs")


def minimal_doc(**overrides):
    doc = {
        "seed": 1,
        "wideband": {"sample_rate_hz": 16e6, "K_syn": 32, "I": 2},
        "streams": [{"name": "a", "scheme": "qpsk", "sample_rate_hz": 4e6, "center_offset_hz": -5e6, "n_symbols": 32}],
    }
    doc.update(overrides)
    return doc


class TestParse(unittest.TestCase):
    def test_defaults(self):
        cfg = parse_config(minimal_doc())
        self.assertEqual(cfg.wideband, WidebandSpec(16e6, 32, 2))
        self.assertIsNone(cfg.training)
        self.assertEqual(cfg.evaluation.snr_db, (math.inf,))
        self.assertEqual(cfg.bench.repetitions, 10)
        self.assertEqual(cfg.synthesis.length(32), 257)
        self.assertEqual(cfg.synthesis.cutoff(32), 2 * math.pi / 32)

    def test_missing_field_names_its_path(self):
        doc = minimal_doc()
        del doc["streams"][0]["sample_rate_hz"]
        with self.assertRaisesRegex(ConfigError, r"streams\[0\]\.sample_rate_hz"):
            parse_config(doc)
        with self.assertRaisesRegex(ConfigError, "field=wideband"):
            parse_config({"streams": []})

    def test_wrong_type(self):
        with self.assertRaisesRegex(ConfigError, "wideband.K_syn"):
            parse_config(minimal_doc(wideband={"sample_rate_hz": 16e6, "K_syn": "32"}))

    def test_not_an_object(self):
        with self.assertRaises(ConfigError):
            parse_config([1, 2])

    def test_unknown_scheme(self):
        doc = minimal_doc()
        doc["streams"][0]["scheme"] = "ofdm"
        with self.assertRaisesRegex(ConfigError, "scheme"):
            parse_config(doc)

    def test_duplicate_stream_names(self):
        doc = minimal_doc()
        doc["streams"].append(dict(doc["streams"][0], center_offset_hz=5e6))
        with self.assertRaises(ConfigError):
            parse_config(doc)

    def test_bandwidth_is_twice_the_cutoff(self):
        cfg = parse_config(minimal_doc(filters={"synthesis": {"bandwidth_norm": math.pi / 8}}))
        self.assertEqual(cfg.synthesis.cutoff_norm, math.pi / 16)

    def test_cutoff_and_bandwidth_conflict(self):
        doc = minimal_doc(filters={"analysis": {"bandwidth_norm": 0.2, "cutoff_norm": 0.1}})
        with self.assertRaisesRegex(ConfigError, "filters.analysis"):
            parse_config(doc)

    def test_cutoff_range(self):
        with self.assertRaises(ConfigError):
            parse_config(minimal_doc(filters={"synthesis": {"cutoff_norm": 4.0}}))

    def test_even_synthesis_length(self):
        with self.assertRaisesRegex(ConfigError, "num_taps"):
            parse_config(minimal_doc(filters={"synthesis": {"num_taps": 256}}))

    def test_snr_values(self):
        cfg = parse_config(minimal_doc(evaluation={"snr_db": ["inf", 0, 7.5]}))
        self.assertEqual(cfg.evaluation.snr_db, (math.inf, 0.0, 7.5))
        with self.assertRaisesRegex(ConfigError, r"snr_db\[1\]"):
            parse_config(minimal_doc(evaluation={"snr_db": [0, "loud"]}))

    def test_unknown_method(self):
        with self.assertRaises(ConfigError):
            parse_config(minimal_doc(bench={"methods": ["fft"]}))

    def test_bench_limits(self):
        with self.assertRaises(ConfigError):
            parse_config(minimal_doc(bench={"repetitions": 0}))
        with self.assertRaises(ConfigError):
            parse_config(minimal_doc(bench={"sizes": [128, -1]}))


class TestTrainingSection(unittest.TestCase):
    def training(self, **fields):
        section = {"sample_rate_hz": 4e6, "ratio": 4}
        section.update(fields)
        return minimal_doc(training=section)

    def test_defaults(self):
        cfg = parse_config(self.training())
        self.assertEqual(cfg.training.ratio, 4)
        self.assertEqual(cfg.training.mixture, {"qpsk": 90, "zigbee_oqpsk": 45, "gmsk": 45})
        self.assertEqual(cfg.training.optimizer.epochs, 200)
        self.assertEqual(cfg.training.optimizer.seed, 1)

    def test_zero_epochs(self):
        with self.assertRaisesRegex(ConfigError, "training.epochs"):
            parse_config(self.training(epochs=0))

    def test_learning_rate(self):
        with self.assertRaisesRegex(ConfigError, "training.lr"):
            parse_config(self.training(lr=0))
        cfg = parse_config(self.training(lr=0, optimizer="line_search"))
        self.assertEqual(cfg.training.optimizer.optimizer, "line_search")

    def test_ratio(self):
        with self.assertRaises(ConfigError):
            parse_config(self.training(ratio=1))

    def test_mixture_counts(self):
        with self.assertRaises(ConfigError):
            parse_config(self.training(mixture={"qpsk": -1}))
        with self.assertRaises(ConfigError):
            parse_config(self.training(mixture={"ofdm": 3}))

    def test_joint_training_needs_gradient_optimizer(self):
        with self.assertRaises(ConfigError):
            parse_config(self.training(optimizer="line_search", train_analysis=True))


class TestBundledConfigs(unittest.TestCase):
    def load(self, name):
        return load_config(os.path.join(CONFIG_DIR, name))

    def test_all_parse(self):
        for name in ("interp2x.json", "interp4x.json", "zigbee3.json", "hetero.json"):
            cfg = self.load(name)
            self.assertTrue(cfg.streams, name)

    def test_interpolation_configs(self):
        cfg = self.load("interp2x.json")
        self.assertEqual(cfg.synthesis.length(32), 253)
        self.assertAlmostEqual(cfg.synthesis.cutoff(32), math.pi / 16, places=12)
        self.assertEqual(cfg.training.ratio, 2)
        self.assertEqual(self.load("interp4x.json").training.ratio, 4)

    def test_zigbee_plan(self):
        plan = plan_streams(self.load("zigbee3.json"))
        self.assertEqual([r.shift for r in plan.routes], [-10, 0, 10])
        self.assertEqual({r.K_ana for r in plan.routes}, {8})

    def test_heterogeneous_plan(self):
        plan = plan_streams(self.load("hetero.json"))
        self.assertEqual([r.K_ana for r in plan.routes], [8, 40])
        self.assertEqual([r.shift for r in plan.routes], [30, 4])

    def test_seed_override(self):
        self.assertEqual(load_config(os.path.join(CONFIG_DIR, "zigbee3.json"), seed=99).seed, 99)

    def test_off_grid_plan(self):
        doc = minimal_doc()
        doc["streams"][0]["center_offset_hz"] = 0.3e6
        with self.assertRaises(PlanError):
            plan_streams(parse_config(doc))


class TestMaterialize(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_malformed_json(self):
        path = os.path.join(self.tmp, "bad.json")
        with open(path, "w") as f:
            f.write("{not json")
        with self.assertRaises(SampleIOError):
            load_config(path)

    def test_rendered_streams(self):
        cfg = parse_config(minimal_doc())
        (spec, symbols), = build_streams(cfg)
        self.assertEqual(len(symbols), 32)
        self.assertEqual(len(spec.payload), 31 * 2 + 16 + 1)
        self.assertEqual(spec.payload.sample_rate_hz, 4e6)
        (again, _), = build_streams(cfg)
        np.testing.assert_array_equal(spec.payload.samples, again.payload.samples)
        (longer, _), = build_streams(cfg, n_symbols=64)
        self.assertEqual(len(longer.payload), 63 * 2 + 16 + 1)

    def test_stream_seeds(self):
        doc = minimal_doc()
        doc["streams"].append({"name": "b", "scheme": "qpsk", "sample_rate_hz": 4e6, "center_offset_hz": 5e6, "seed": 42})
        cfg = parse_config(doc)
        self.assertEqual(stream_seed(cfg, 1, cfg.streams[1]), 42)
        self.assertNotEqual(stream_seed(cfg, 0, cfg.streams[0]), stream_seed(cfg, 1, cfg.streams[0]))

    def test_inputs_from_files(self):
        path = os.path.join(self.tmp, "a.cf32")
        write_cf32(path, ComplexBuf(np.arange(8) * (1 + 1j), 4e6))
        (spec, symbols), = build_streams(parse_config(minimal_doc()), inputs=[path])
        self.assertIsNone(symbols)
        np.testing.assert_array_equal(spec.payload.samples, np.arange(8) * (1 + 1j))
        with self.assertRaises(ConfigError):
            build_streams(parse_config(minimal_doc()), inputs=[path, path])

    def test_missing_input_file(self):
        with self.assertRaises(SampleIOError):
            build_streams(parse_config(minimal_doc()), inputs=[os.path.join(self.tmp, "nope.cf32")])

    def test_designed_synthesis(self):
        h = synthesis_prototype(parse_config(minimal_doc()))
        self.assertEqual(len(h), 257)
        self.assertAlmostEqual(float(np.sum(h.taps)), 1.0, places=12)

    def test_trained_synthesis(self):
        syn = LearnableSynthesisFilter(np.linspace(0.0, 0.1, 65), math.pi / 16)
        path = os.path.join(self.tmp, "trained.json")
        save_trained_filter(path, syn, WidebandSpec(16e6, 32, 2).synthesis_shape(), {})
        cfg = parse_config(minimal_doc(filters={"synthesis": {"trained_path": path}}))
        np.testing.assert_array_equal(synthesis_prototype(cfg).taps, syn.materialize().taps)

        wrong = os.path.join(self.tmp, "wrong.json")
        save_trained_filter(wrong, syn, WidebandSpec(16e6, 64, 2).synthesis_shape(), {})
        cfg = parse_config(minimal_doc(filters={"synthesis": {"trained_path": wrong}}))
        with self.assertRaises(ConfigError):
            synthesis_prototype(cfg)

    def test_config_file_roundtrip(self):
        path = os.path.join(self.tmp, "cfg.json")
        with open(path, "w") as f:
            json.dump(minimal_doc(), f)
        self.assertEqual(load_config(path).streams[0].name, "a")


if __name__ == "__main__":
    unittest.main()
