import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from pathology.exceptions import NetworkError
from pathology.Network.checkpoint import load_checkpoint, save_checkpoint
from pathology.Network.nnet import (AdamState, CompactResNet, adam_step, cross_entropy, cross_entropy_grad,
                                    gradient_check, loss_and_gradients, one_hot, softmax)

SMALL_SHAPE = (1, 16, 12)
SMALL_WIDTHS = (2, 4, 4, 8, 8)


def small_model(activation='silu', seed=0, num_classes=3):
    return CompactResNet(num_classes, input_shape=SMALL_SHAPE, widths=SMALL_WIDTHS, activation=activation, seed=seed)


def batch(n=4, seed=1):
    return np.random.default_rng(seed).random((n,) + SMALL_SHAPE)


class ForwardTests(SimpleTestCase):
    def test_tap_shapes_match_forward(self):
        model = small_model()
        logits, taps = model.forward(batch(), taps=True)
        self.assertEqual(logits.shape, (4, 3))
        for name, shape in model.tap_shapes().items():
            self.assertEqual(taps[name].shape, (4,) + shape, name)

    def test_default_tap_shapes(self):
        shapes = CompactResNet(7).tap_shapes()
        self.assertEqual(shapes['stem'], (8, 64, 49))
        self.assertEqual(shapes['block1'], (16, 32, 25))
        self.assertEqual(shapes['block3'], (64, 8, 7))
        self.assertEqual(shapes['block4'], (64, 8, 7))
        self.assertEqual(shapes['fc'], (7,))

    def test_taps_only_on_request(self):
        self.assertEqual(small_model().forward(batch())[1], {})

    def test_wrong_input_shape(self):
        with self.assertRaises(NetworkError):
            small_model().forward(np.zeros((2, 1, 12, 16)))

    def test_identical_inputs_give_identical_rows(self):
        x = np.repeat(batch(1), 3, axis=0)
        logits, _ = small_model().forward(x)
        np.testing.assert_array_equal(logits[0], logits[1])
        np.testing.assert_array_equal(logits[0], logits[2])

    def test_same_seed_same_model(self):
        x = batch()
        np.testing.assert_array_equal(small_model(seed=5).forward(x)[0], small_model(seed=5).forward(x)[0])
        self.assertFalse(np.array_equal(small_model(seed=5).forward(x)[0], small_model(seed=6).forward(x)[0]))

    def test_zero_head_gives_uniform_output(self):
        model = small_model()
        model.fc.params['weight'][:] = 0.0
        model.fc.params['bias'][:] = 0.0
        np.testing.assert_allclose(softmax(model.forward(batch())[0]), 1 / 3)

    def test_unknown_activation(self):
        with self.assertRaises(NetworkError):
            small_model(activation='tanh')


class LossTests(SimpleTestCase):
    def test_perfect_prediction(self):
        onehot = one_hot([0, 2], 3)
        self.assertAlmostEqual(cross_entropy(onehot, onehot), 0.0)

    def test_uniform_prediction(self):
        probs = np.full((5, 4), 0.25)
        self.assertAlmostEqual(cross_entropy(probs, one_hot([0, 1, 2, 3, 0], 4)), math.log(4))

    def test_gradient_is_batch_mean(self):
        probs = softmax(np.random.default_rng(0).normal(size=(6, 3)))
        onehot = one_hot([0, 1, 2, 0, 1, 2], 3)
        np.testing.assert_allclose(cross_entropy_grad(probs, onehot) * 6, probs - onehot)

    def test_softmax_is_shift_invariant(self):
        logits = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(softmax(logits), softmax(logits + 1000.0))

    def test_one_hot_range(self):
        with self.assertRaises(NetworkError):
            one_hot([3], 3)


class GradientTests(SimpleTestCase):
    def test_backward_matches_finite_differences(self):
        model = small_model(activation='silu')
        error = gradient_check(model, batch(), one_hot([0, 1, 2, 1], 3))
        self.assertLess(error, 1e-4)

    def test_relu_backward_matches_finite_differences(self):
        model = small_model(activation='relu')
        # narrow step so no pre-activation crosses the kink at zero
        error = gradient_check(model, batch(), one_hot([0, 1, 2, 1], 3), h=3e-6)
        self.assertLess(error, 1e-4)

    def test_zero_head_blocks_earlier_gradients(self):
        model = small_model()
        model.fc.params['weight'][:] = 0.0
        _, grads = loss_and_gradients(model, batch(), one_hot([0, 1, 2, 1], 3))
        for name, grad in grads.items():
            if not name.startswith('fc.'):
                self.assertFalse(grad.any(), name)
        self.assertTrue(grads['fc.bias'].any())


class AdamTests(SimpleTestCase):
    def test_zero_gradient_leaves_parameters(self):
        params = {'w': np.array([1.0, -2.0])}
        adam_step(AdamState(learning_rate=0.1), params, {'w': np.zeros(2)})
        np.testing.assert_array_equal(params['w'], [1.0, -2.0])

    def test_first_step(self):
        params = {'w': np.array([0.0])}
        adam_step(AdamState(learning_rate=0.1), params, {'w': np.array([1.0])})
        self.assertAlmostEqual(params['w'][0], -0.1 / (1 + 1e-8), places=15)

    def test_two_steps_follow_the_recurrence(self):
        params = {'w': np.array([0.5])}
        state = AdamState(learning_rate=0.01)
        adam_step(state, params, {'w': np.array([2.0])})
        adam_step(state, params, {'w': np.array([-1.0])})

        m1, v1 = 0.1 * 2.0, 0.001 * 4.0
        theta = 0.5 - 0.01 * (m1 / 0.1) / (math.sqrt(v1 / 0.001) + 1e-8)
        m2, v2 = 0.9 * m1 + 0.1 * -1.0, 0.999 * v1 + 0.001 * 1.0
        theta -= 0.01 * (m2 / (1 - 0.9 ** 2)) / (math.sqrt(v2 / (1 - 0.999 ** 2)) + 1e-8)
        self.assertAlmostEqual(params['w'][0], theta, delta=1e-12)

    def test_zero_learning_rate_changes_nothing(self):
        model = small_model()
        before = {name: value.copy() for name, value in model.parameters().items()}
        _, grads = loss_and_gradients(model, batch(), one_hot([0, 1, 2, 1], 3))
        adam_step(AdamState(learning_rate=0.0), model.parameters(), grads)
        for name, value in model.parameters().items():
            np.testing.assert_array_equal(value, before[name])


class CheckpointTests(SimpleTestCase):
    def test_round_trip_is_bit_exact(self):
        model = small_model(seed=3)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'pd.ckpt'
            save_checkpoint(path, model, {'learning_rate': 1e-3})
            loaded, config = load_checkpoint(path)
        self.assertEqual(loaded.architecture(), model.architecture())
        self.assertEqual(config, {'learning_rate': 1e-3})
        for name, value in model.parameters().items():
            self.assertEqual(loaded.parameters()[name].tobytes(), value.tobytes())
        x = batch()
        np.testing.assert_array_equal(loaded.forward(x)[0], model.forward(x)[0])

    def test_missing_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaisesMessage(NetworkError, 'run the train stage first'):
                load_checkpoint(Path(tmp) / 'absent.ckpt')

    def test_corrupt_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bad.ckpt'
            path.write_bytes(b'\xc1\xc1 not msgpack')
            with self.assertRaises(NetworkError):
                load_checkpoint(path)

    def test_missing_parameters(self):
        with self.assertRaises(NetworkError):
            small_model().load_parameters({})
