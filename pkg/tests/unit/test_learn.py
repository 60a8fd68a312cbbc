import os
import math
import shutil
import tempfile
import unittest
import numpy as np

from pfbmux.errors import ConfigError, TrainingError
from pfbmux.numerics import ComplexBuf, PrototypeFilter, design_windowed_sinc, nmse_db
from pfbmux.filterbank import (
    AnalysisBankConfig,
    SynthesisBankConfig,
    afb_polyphase,
    cascade_delay,
    default_analysis_prototype,
    route_subbands,
    sfb_direct,
)
from pfbmux.learn import (
    LearnableSynthesisFilter,
    TiedFilter,
    TrainConfig,
    TrainingPair,
    first_image_db,
    forward,
    grad_analytic,
    heldout_nmse,
    init_model_driven,
    init_random_normal,
    load_trained_filter,
    loss_mse,
    make_pair_mixture,
    make_training_pairs,
    mean_loss,
    save_trained_filter,
    train,
)

LOW_RATE_HZ = 4e6
RATIO = 2


def small_setup():
    """Analysis K=8 at the low rate, synthesis K=16 at twice the rate."""
    acfg = AnalysisBankConfig(8, 4, 2, default_analysis_prototype(8))
    shape = SynthesisBankConfig(16, 8, 2)
    init = init_model_driven(16, 8, 2 * math.pi / 16, 129)
    return acfg, shape, init


def synthesis_loss(pair, acfg, syn, shape):
    lag = cascade_delay(acfg, shape.with_prototype(syn.materialize()))
    return loss_mse(forward(pair.x_low, acfg, syn, shape), pair.x_high, lag)


class TestTiedFilter(unittest.TestCase):
    def test_materialize_is_symmetric(self):
        f = TiedFilter([1.0, 2.0, 3.0])
        self.assertEqual(f.total_len, 5)
        self.assertEqual(f.num_params, 3)
        np.testing.assert_array_equal(f.materialize().taps, [1, 2, 3, 2, 1])
        self.assertTrue(f.materialize().symmetric)

    def test_from_prototype_roundtrip(self):
        h = design_windowed_sinc(math.pi / 8, 65)
        np.testing.assert_array_equal(TiedFilter.from_prototype(h).materialize().taps, h.taps)

    def test_from_asymmetric_rejected(self):
        with self.assertRaises(ConfigError):
            TiedFilter.from_prototype(PrototypeFilter([1.0, 2.0, 3.0]))

    def test_model_driven_init_is_rect_sinc(self):
        init = init_model_driven(32, 16, math.pi / 16, 253)
        self.assertEqual(init.num_params, 127)
        expected = design_windowed_sinc(math.pi / 16, 253, window="rect")
        np.testing.assert_array_equal(init.materialize().taps, expected.taps)

    def test_model_driven_needs_factorable_bank(self):
        with self.assertRaises(ConfigError):
            init_model_driven(30, 16, math.pi / 16, 253)

    def test_random_init_deterministic(self):
        a = init_random_normal(129, seed=4)
        b = init_random_normal(129, seed=4)
        np.testing.assert_array_equal(a.half_taps, b.half_taps)
        self.assertEqual(a.total_len, 129)
        with self.assertRaises(ConfigError):
            init_random_normal(128, seed=4)


class TestTrainingPairs(unittest.TestCase):
    def test_pair_rates(self):
        pairs = make_training_pairs("qpsk", 3, LOW_RATE_HZ, RATIO, seed=1, n_symbols=32)
        self.assertEqual(len(pairs), 3)
        for pair in pairs:
            self.assertEqual(pair.ratio, RATIO)
            self.assertEqual(pair.x_low.sample_rate_hz, LOW_RATE_HZ)
            self.assertEqual(pair.x_high.sample_rate_hz, RATIO * LOW_RATE_HZ)

    def test_pairs_are_time_aligned(self):
        """Every r-th high-rate sample lands on the low-rate waveform."""
        for scheme, floor in (("qpsk", -40), ("zigbee_oqpsk", -100)):
            pair = make_training_pairs(scheme, 1, LOW_RATE_HZ, RATIO, seed=3, n_symbols=64)[0]
            picked = ComplexBuf(pair.x_high.samples[::RATIO][: len(pair.x_low)], LOW_RATE_HZ)
            self.assertLessEqual(nmse_db(picked, pair.x_low), floor, scheme)

    def test_seeds_differ_between_pairs(self):
        a, b = make_training_pairs("gmsk", 2, LOW_RATE_HZ, RATIO, seed=1, n_symbols=32)
        self.assertFalse(np.array_equal(a.x_low.samples, b.x_low.samples))

    def test_pair_generation_deterministic(self):
        a = make_training_pairs("qpsk", 2, LOW_RATE_HZ, RATIO, seed=5, n_symbols=16)
        b = make_training_pairs("qpsk", 2, LOW_RATE_HZ, RATIO, seed=5, n_symbols=16, workers=2)
        for p, q in zip(a, b):
            np.testing.assert_array_equal(p.x_high.samples, q.x_high.samples)

    def test_mixture(self):
        pairs = make_pair_mixture({"qpsk": 2, "zigbee_oqpsk": 1, "gmsk": 0}, LOW_RATE_HZ, RATIO, 0, n_symbols=16)
        self.assertEqual([p.scheme for p in pairs], ["qpsk", "qpsk", "zigbee_oqpsk"])

    def test_bad_ratio(self):
        with self.assertRaises(ConfigError):
            make_training_pairs("qpsk", 1, LOW_RATE_HZ, 1, seed=0)
        with self.assertRaises(ConfigError):
            TrainingPair(ComplexBuf([1], 2.0), ComplexBuf([1], 3.0), "qpsk")


class TestGradient(unittest.TestCase):
    """Analytic gradients against central differences."""

    def setUp(self):
        self.acfg, self.shape, self.init = small_setup()
        self.pair = make_training_pairs("qpsk", 1, LOW_RATE_HZ, RATIO, seed=2, n_symbols=16)[0]
        self.rng = np.random.default_rng(0)

    def assert_gradient_matches(self, loss_at, theta, grad, eps=1e-5):
        idx = self.rng.choice(theta.shape[0], size=20, replace=False)
        scale = np.max(np.abs(grad))
        for i in idx:
            step = np.zeros_like(theta)
            step[i] = eps
            numeric = (loss_at(theta + step) - loss_at(theta - step)) / (2 * eps)
            self.assertLess(abs(numeric - grad[i]) / scale, 1e-6, f"tap {i}")

    def test_synthesis_gradient(self):
        for _ in range(2):
            theta = self.init.half_taps + 0.01 * self.rng.standard_normal(self.init.num_params)
            syn = self.init.with_half_taps(theta)
            loss, grad, grad_h = grad_analytic(self.pair, self.acfg, syn, self.shape)
            self.assertIsNone(grad_h)
            self.assertAlmostEqual(loss, synthesis_loss(self.pair, self.acfg, syn, self.shape), places=12)
            self.assert_gradient_matches(
                lambda t: synthesis_loss(self.pair, self.acfg, syn.with_half_taps(t), self.shape), theta, grad
            )

    def test_analysis_gradient(self):
        ana = TiedFilter.from_prototype(self.acfg.prototype)
        theta = ana.half_taps + 0.005 * self.rng.standard_normal(ana.num_params)

        def loss_at(t):
            acfg = AnalysisBankConfig(8, 4, 2, ana.with_half_taps(t).materialize())
            return synthesis_loss(self.pair, acfg, self.init, self.shape)

        _, _, grad_h = grad_analytic(self.pair, self.acfg, self.init, self.shape, ana.with_half_taps(theta))
        self.assertEqual(grad_h.shape, (ana.num_params,))
        self.assert_gradient_matches(loss_at, theta, grad_h)

    def test_forward_matches_direct_synthesis(self):
        """Forward pass equals the direct-form synthesis the gradient is derived from."""
        scfg = self.shape.with_prototype(self.init.materialize())
        frame = afb_polyphase(self.pair.x_low, self.acfg)
        routed = route_subbands(frame, scfg.K, 0, cascade_delay(self.acfg, scfg))
        expected = sfb_direct(routed, scfg).samples * scfg.L
        actual = forward(self.pair.x_low, self.acfg, self.init, self.shape).samples
        np.testing.assert_allclose(actual, expected, atol=1e-10)

    def test_ratio_mismatch(self):
        pair = make_training_pairs("qpsk", 1, LOW_RATE_HZ, 4, seed=2, n_symbols=16)[0]
        with self.assertRaises(ConfigError):
            grad_analytic(pair, self.acfg, self.init, self.shape)


class TestTrain(unittest.TestCase):
    def setUp(self):
        self.acfg, self.shape, self.init = small_setup()
        self.pairs = make_pair_mixture({"qpsk": 2, "zigbee_oqpsk": 1, "gmsk": 1}, LOW_RATE_HZ, RATIO, 7, n_symbols=32)

    def test_config_validation(self):
        with self.assertRaises(ConfigError):
            TrainConfig(epochs=0)
        with self.assertRaises(ConfigError):
            TrainConfig(lr=-1.0)
        with self.assertRaises(ConfigError):
            TrainConfig(optimizer="rmsprop")
        with self.assertRaises(ConfigError):
            TrainConfig(optimizer="line_search", train_analysis=True)

    def test_zero_learning_rate_is_a_no_op(self):
        result = train(self.pairs, TrainConfig(epochs=3, lr=0.0), self.init, self.acfg, self.shape)
        np.testing.assert_array_equal(result.synthesis.half_taps, self.init.half_taps)
        self.assertEqual(len(set(result.losses)), 1)
        self.assertAlmostEqual(result.final_loss, result.losses[0], delta=1e-12 * result.losses[0])

    def test_line_search_is_monotone(self):
        result = train(self.pairs, TrainConfig(epochs=6, optimizer="line_search"), self.init, self.acfg, self.shape)
        for before, after in zip(result.losses, result.losses[1:]):
            self.assertLessEqual(after, before * (1 + 1e-9))
        self.assertLess(result.final_loss, result.losses[0])

    def test_adam_reduces_loss(self):
        result = train(self.pairs[:1], TrainConfig(epochs=10, lr=1e-4), self.init, self.acfg, self.shape)
        self.assertLess(result.losses[-1], result.losses[0])
        self.assertLess(result.final_loss, result.losses[0])
        np.testing.assert_array_equal(result.synthesis.materialize().taps, result.synthesis.materialize().taps[::-1])

    def test_deterministic_under_seed(self):
        cfg = TrainConfig(epochs=4, lr=1e-4, batch=2, seed=3)
        a = train(self.pairs, cfg, self.init, self.acfg, self.shape)
        b = train(self.pairs, cfg, self.init, self.acfg, self.shape, workers=3)
        self.assertEqual(a.losses, b.losses)
        np.testing.assert_array_equal(a.synthesis.half_taps, b.synthesis.half_taps)

    def test_joint_training_updates_analysis(self):
        result = train(self.pairs, TrainConfig(epochs=2, lr=1e-4, train_analysis=True), self.init, self.acfg, self.shape)
        self.assertFalse(np.array_equal(result.analysis.taps, self.acfg.prototype.taps))
        np.testing.assert_array_equal(result.analysis.taps, result.analysis.taps[::-1])

    def test_divergence_raises(self):
        with self.assertRaises(TrainingError) as ctx:
            train(self.pairs[:1], TrainConfig(epochs=100, optimizer="sgd", lr=1e12), self.init, self.acfg, self.shape)
        self.assertIsNotNone(ctx.exception.epoch)

    def test_trained_model_has_127_parameters(self):
        acfg = AnalysisBankConfig(16, 8, 2, default_analysis_prototype(16))
        shape = SynthesisBankConfig(32, 16, 2)
        init = init_model_driven(32, 16, math.pi / 16, 253)
        pairs = make_training_pairs("qpsk", 1, 8e6, RATIO, seed=3, n_symbols=128)
        result = train(pairs, TrainConfig(epochs=1, lr=1e-5), init, acfg, shape)
        self.assertEqual(result.synthesis.num_params, 127)
        self.assertEqual(result.synthesis.total_len, 253)
        taps = result.synthesis.materialize().taps
        self.assertEqual(taps.shape, (253,))
        np.testing.assert_array_equal(taps, taps[::-1])

    def test_empty_pairs(self):
        with self.assertRaises(ConfigError):
            train([], TrainConfig(), self.init, self.acfg, self.shape)


class TestEvaluation(unittest.TestCase):
    def setUp(self):
        self.acfg, self.shape, self.init = small_setup()
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_model_driven_beats_random_init(self):
        for scheme in ("qpsk", "zigbee_oqpsk", "gmsk"):
            pairs = make_training_pairs(scheme, 2, LOW_RATE_HZ, RATIO, seed=1, n_symbols=32)
            model = mean_loss(pairs, self.acfg, self.init, self.shape)
            random = mean_loss(pairs, self.acfg, init_random_normal(129, seed=1), self.shape)
            self.assertLess(model, random, scheme)

    def test_heldout_nmse_of_sinc_init(self):
        pairs = make_training_pairs("qpsk", 2, LOW_RATE_HZ, RATIO, seed=9, n_symbols=64)
        self.assertLess(heldout_nmse(pairs, self.acfg, self.init, self.shape), -10)

    def test_first_image_of_designed_filter(self):
        f = design_windowed_sinc(2 * math.pi / 32, 257)
        self.assertLess(first_image_db(f, 16), -60)

    def test_save_and_load_bit_identical(self):
        syn = LearnableSynthesisFilter(np.random.default_rng(2).standard_normal(65), math.pi / 8)
        path = os.path.join(self.tmp, "trained.json")
        save_trained_filter(path, syn, self.shape, {"seed": 1, "epochs": 3})
        loaded, doc = load_trained_filter(path)
        np.testing.assert_array_equal(loaded.half_taps, syn.half_taps)
        self.assertEqual(doc["K"], 16)
        self.assertEqual(doc["total_len"], 129)
        self.assertEqual(doc["metadata"]["epochs"], 3)

    def test_load_inconsistent_length(self):
        path = os.path.join(self.tmp, "bad.json")
        from pfbmux.utils import write_json

        write_json(path, {"total_len": 7, "half_taps": [1.0, 2.0], "cutoff_norm": 1.0})
        with self.assertRaises(ConfigError):
            load_trained_filter(path)


if __name__ == "__main__":
    unittest.main()
