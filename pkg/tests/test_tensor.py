# Standard library imports
import threading
import unittest

# Third-party imports
import numpy as np
import pytest

# Local imports
from fruit_quality import tensor as T
from fruit_quality.exceptions import GradientError, ShapeError, TensorError
from fruit_quality.optim.losses import bce_loss
from fruit_quality.tensor import Tape, Tensor, active_tape, backward
from fruit_quality.tensor.gradcheck import check_directional_gradients, check_gradients
from fruit_quality.tensor.oracle import (
    naive_bilinear_resize,
    naive_conv2d,
    naive_conv2d_transpose,
    naive_dense,
)


def _double(rng, *shape, requires_grad=False):
    return Tensor(rng.normal(size=shape), dtype=np.float64, requires_grad=requires_grad)


@pytest.mark.unit
class TensorTestCase(unittest.TestCase):
    def test_values_are_read_only(self):
        t = Tensor([1.0, 2.0])
        with self.assertRaises(ValueError):
            t.data[0] = 5.0

    def test_source_array_is_copied(self):
        source = np.array([1.0, 2.0])
        t = Tensor(source)
        source[0] = 9.0
        self.assertEqual(t.data[0], 1.0)

    def test_integer_input_defaults_to_float32(self):
        self.assertEqual(Tensor([1, 2, 3]).dtype, np.float32)

    def test_float64_is_preserved(self):
        self.assertEqual(Tensor(np.zeros(3)).dtype, np.float64)

    def test_unsupported_dtype_rejected(self):
        with self.assertRaises(TensorError):
            Tensor([1, 2], dtype=np.int32)

    def test_rank_above_four_rejected(self):
        with self.assertRaises(TensorError):
            Tensor(np.zeros((1, 1, 1, 1, 1)))

    def test_item_needs_single_element(self):
        self.assertEqual(Tensor([3.5]).item(), 3.5)
        with self.assertRaises(TensorError):
            Tensor([1.0, 2.0]).item()


@pytest.mark.unit
class TapeTestCase(unittest.TestCase):
    def test_untracked_without_tape(self):
        a = Tensor([1.0, 2.0], requires_grad=True)
        out = T.mul(a, a)
        self.assertFalse(out.requires_grad)

    def test_product_gradient(self):
        a = Tensor([1.0, 2.0, 3.0], dtype=np.float64, requires_grad=True)
        b = Tensor([4.0, 5.0, 6.0], dtype=np.float64, requires_grad=True)
        with Tape() as tape:
            loss = T.reduce_sum(T.mul(a, b))
        grads = backward(tape, loss, wrt=[a, b])
        np.testing.assert_array_equal(grads[a], b.data)
        np.testing.assert_array_equal(grads[b], a.data)

    def test_reused_input_accumulates(self):
        a = Tensor([3.0], dtype=np.float64, requires_grad=True)
        with Tape() as tape:
            loss = T.reduce_sum(T.add(a, a))
        self.assertEqual(backward(tape, loss, wrt=[a])[a][0], 2.0)

    def test_unused_leaf_gets_zero_gradient(self):
        a = Tensor([1.0], dtype=np.float64, requires_grad=True)
        unused = Tensor([[1.0, 2.0]], dtype=np.float64, requires_grad=True)
        with Tape() as tape:
            loss = T.reduce_sum(T.scale(a, 2.0))
        grads = backward(tape, loss, wrt=[a, unused])
        np.testing.assert_array_equal(grads[unused], np.zeros((1, 2)))

    def test_non_scalar_loss_rejected(self):
        a = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            out = T.scale(a, 2.0)
        with self.assertRaises(GradientError):
            backward(tape, out)

    def test_loss_from_other_tape_rejected(self):
        a = Tensor([1.0], requires_grad=True)
        with Tape():
            loss = T.reduce_sum(a)
        with Tape() as other:
            T.reduce_sum(a)
        with self.assertRaises(GradientError):
            backward(other, loss)

    def test_tapes_are_thread_local(self):
        seen = []
        with Tape():
            worker = threading.Thread(target=lambda: seen.append(active_tape()))
            worker.start()
            worker.join()
        self.assertEqual(seen, [None])
        self.assertIsNone(active_tape())


@pytest.mark.unit
class ActivationTestCase(unittest.TestCase):
    def test_sigmoid_stays_strictly_inside_unit_interval(self):
        for dtype in (np.float32, np.float64):
            out = T.sigmoid(Tensor([-200.0, 0.0, 200.0], dtype=dtype)).data
            self.assertTrue(np.all(out > 0.0))
            self.assertTrue(np.all(out < 1.0))
            self.assertEqual(out[1], 0.5)

    def test_tanh_stays_strictly_inside(self):
        out = T.tanh(Tensor([-50.0, 50.0], dtype=np.float32)).data
        self.assertTrue(np.all(np.abs(out) < 1.0))

    def test_leaky_relu_slope(self):
        out = T.leaky_relu(Tensor([-1.0, 2.0], dtype=np.float64), 0.2).data
        np.testing.assert_allclose(out, [-0.2, 2.0])
        with self.assertRaises(TensorError):
            T.leaky_relu(Tensor([1.0]), 1.5)

    def test_unknown_activation(self):
        with self.assertRaises(TensorError):
            T.activation(Tensor([1.0]), "softplus")

    def test_clip_blocks_gradient_outside_range(self):
        x = Tensor([-2.0, 0.5, 2.0], dtype=np.float64, requires_grad=True)
        with Tape() as tape:
            loss = T.reduce_sum(T.clip(x, -1.0, 1.0))
        np.testing.assert_array_equal(backward(tape, loss, wrt=[x])[x], [0.0, 1.0, 0.0])


@pytest.mark.unit
class KernelOracleTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_conv2d_matches_oracle_in_double(self):
        for stride, padding, k in [(1, 0, 3), (2, 1, 3), (1, 1, 1), (2, 0, 2)]:
            x = self.rng.normal(size=(2, 3, 7, 6))
            w = self.rng.normal(size=(4, 3, k, k))
            b = self.rng.normal(size=4)
            out = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, padding).data
            np.testing.assert_allclose(out, naive_conv2d(x, w, b, stride, padding), rtol=0, atol=1e-12)

    def test_conv2d_matches_oracle_in_single(self):
        x = self.rng.normal(size=(1, 2, 6, 6)).astype(np.float32)
        w = self.rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        b = self.rng.normal(size=3).astype(np.float32)
        out = T.conv2d(Tensor(x), Tensor(w), Tensor(b), 1, 1).data
        self.assertEqual(out.dtype, np.float32)
        expected = naive_conv2d(x.astype(np.float64), w.astype(np.float64), b.astype(np.float64), 1, 1)
        np.testing.assert_allclose(out, expected, rtol=1e-5, atol=1e-5)

    def test_conv2d_transpose_matches_oracle(self):
        for stride, padding in [(1, 0), (2, 1), (2, 0)]:
            x = self.rng.normal(size=(2, 3, 4, 5))
            w = self.rng.normal(size=(3, 2, 4, 4))
            b = self.rng.normal(size=2)
            out = T.conv2d_transpose(Tensor(x), Tensor(w), Tensor(b), stride, padding).data
            expected = naive_conv2d_transpose(x, w, b, stride, padding)
            np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    def test_transpose_is_adjoint_of_conv(self):
        x = self.rng.normal(size=(2, 3, 7, 7))
        w = self.rng.normal(size=(4, 3, 3, 3))
        y = self.rng.normal(size=(2, 4, 4, 4))
        forward = T.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(4)), 2, 1).data
        adjoint = T.conv2d_transpose(Tensor(y), Tensor(w), Tensor(np.zeros(3)), 2, 1).data
        self.assertEqual(adjoint.shape, x.shape)
        self.assertAlmostEqual(float(np.sum(forward * y)), float(np.sum(x * adjoint)), delta=1e-10)

    def test_dense_matches_oracle(self):
        x = self.rng.normal(size=(5, 4))
        w = self.rng.normal(size=(4, 3))
        b = self.rng.normal(size=3)
        out = T.dense(Tensor(x), Tensor(w), Tensor(b)).data
        np.testing.assert_allclose(out, naive_dense(x, w, b), rtol=0, atol=1e-12)

    def test_bilinear_resize_matches_oracle(self):
        x = self.rng.normal(size=(1, 2, 4, 5))
        out = T.bilinear_resize(Tensor(x), 9, 7).data
        np.testing.assert_allclose(out, naive_bilinear_resize(x, 9, 7), rtol=0, atol=1e-12)

    def test_bilinear_resize_identity(self):
        x = self.rng.normal(size=(1, 1, 5, 5))
        np.testing.assert_allclose(T.bilinear_resize(Tensor(x), 5, 5).data, x, atol=1e-12)

    def test_conv_output_shapes(self):
        x = Tensor(np.zeros((1, 3, 32, 32)))
        out = T.conv2d(x, Tensor(np.zeros((8, 3, 3, 3))), Tensor(np.zeros(8)), 2, 1)
        self.assertEqual(out.shape, (1, 8, 16, 16))
        up = T.conv2d_transpose(out, Tensor(np.zeros((8, 4, 4, 4))), Tensor(np.zeros(4)), 2, 1)
        self.assertEqual(up.shape, (1, 4, 32, 32))


@pytest.mark.unit
class ShapeErrorTestCase(unittest.TestCase):
    def test_conv_channel_mismatch(self):
        with self.assertRaises(ShapeError):
            T.conv2d(Tensor(np.zeros((1, 3, 5, 5))), Tensor(np.zeros((2, 4, 3, 3))), Tensor(np.zeros(2)))

    def test_conv_kernel_larger_than_input(self):
        with self.assertRaises(ShapeError):
            T.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros(1)))

    def test_dense_inner_mismatch(self):
        with self.assertRaises(ShapeError):
            T.dense(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))), Tensor(np.zeros(2)))

    def test_embedding_out_of_range(self):
        with self.assertRaises(ShapeError):
            T.embedding(Tensor(np.zeros((2, 3))), [0, 2])

    def test_maxpool_window_too_large(self):
        with self.assertRaises(ShapeError):
            T.maxpool2d(Tensor(np.zeros((1, 1, 2, 2))), 3)

    def test_shape_error_is_value_error(self):
        self.assertTrue(issubclass(ShapeError, ValueError))


@pytest.mark.unit
class GradientTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_maxpool_routes_ties_to_first_maximum(self):
        x = Tensor(np.ones((1, 1, 2, 2)), dtype=np.float64, requires_grad=True)
        with Tape() as tape:
            loss = T.reduce_sum(T.maxpool2d(x, 2))
        grad = backward(tape, loss, wrt=[x])[x]
        np.testing.assert_array_equal(grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_embedding_gradient_only_on_gathered_rows(self):
        table = _double(self.rng, 3, 2, requires_grad=True)
        with Tape() as tape:
            loss = T.reduce_sum(T.embedding(table, [0, 0, 2]))
        grad = backward(tape, loss, wrt=[table])[table]
        np.testing.assert_array_equal(grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])

    def test_dense_gradcheck(self):
        inputs = [_double(self.rng, 3, 4), _double(self.rng, 4, 2), _double(self.rng, 2)]
        result = check_gradients(lambda t: T.mean(T.tanh(T.dense(*t))), inputs)
        self.assertTrue(result.passed, result.max_relative_error)

    def test_conv2d_gradcheck(self):
        inputs = [_double(self.rng, 1, 2, 5, 5), _double(self.rng, 3, 2, 3, 3), _double(self.rng, 3)]
        result = check_gradients(lambda t: T.mean(T.tanh(T.conv2d(t[0], t[1], t[2], 2, 1))), inputs)
        self.assertTrue(result.passed, result.max_relative_error)

    def test_conv2d_transpose_gradcheck(self):
        inputs = [_double(self.rng, 1, 2, 3, 3), _double(self.rng, 2, 3, 4, 4), _double(self.rng, 3)]
        result = check_gradients(
            lambda t: T.mean(T.sigmoid(T.conv2d_transpose(t[0], t[1], t[2], 2, 1))), inputs
        )
        self.assertTrue(result.passed, result.max_relative_error)

    def test_bilinear_resize_gradcheck(self):
        inputs = [_double(self.rng, 1, 2, 3, 4)]
        result = check_gradients(lambda t: T.mean(T.tanh(T.bilinear_resize(t[0], 6, 5))), inputs)
        self.assertTrue(result.passed, result.max_relative_error)

    def test_concat_and_flatten_gradcheck(self):
        inputs = [_double(self.rng, 2, 3, 2, 2), _double(self.rng, 2, 1, 2, 2)]
        result = check_gradients(lambda t: T.mean(T.tanh(T.flatten(T.concat(t, axis=1)))), inputs)
        self.assertTrue(result.passed, result.max_relative_error)

    def test_wrong_gradient_is_detected(self):
        def broken(t):
            return T.reduce_sum(T.mul(t[0], Tensor(t[0].data)))

        result = check_gradients(broken, [_double(self.rng, 4)])
        self.assertFalse(result.passed)

    def test_directional_gradcheck_covers_every_input(self):
        inputs = [_double(self.rng, 2, 2, 5, 5), _double(self.rng, 3, 2, 3, 3), _double(self.rng, 3)]
        result = check_directional_gradients(
            lambda t: T.mean(T.tanh(T.conv2d(t[0], t[1], t[2], 1, 1))), inputs, np.random.default_rng(1)
        )
        self.assertTrue(result.passed, result.max_relative_error)
        self.assertEqual(len(result.per_input), len(inputs) + 1)

    def test_directional_gradcheck_detects_wrong_gradient(self):
        def broken(t):
            return T.add(T.reduce_sum(T.tanh(t[0])), T.reduce_sum(T.mul(t[1], Tensor(t[1].data))))

        result = check_directional_gradients(
            broken, [_double(self.rng, 3), _double(self.rng, 4)], np.random.default_rng(2)
        )
        self.assertFalse(result.passed)
        self.assertLess(result.per_input[0], 1e-5)

    def test_composite_graph_gradcheck_over_every_parameter(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.uniform(-2, 2, size=(3, 2, 5, 5)), dtype=np.float64)
        y = np.array([[0.0], [1.0], [1.0]])
        inputs = [
            Tensor(rng.uniform(-0.5, 0.5, size=(3, 2, 3, 3)), dtype=np.float64),
            Tensor(rng.uniform(-0.5, 0.5, size=(3,)), dtype=np.float64),
            Tensor(rng.uniform(-0.3, 0.3, size=(27, 1)), dtype=np.float64),
            Tensor(rng.uniform(-0.5, 0.5, size=(1,)), dtype=np.float64),
        ]

        def fn(t):
            h = T.leaky_relu(T.conv2d(x, t[0], t[1], 2, 1))
            return bce_loss(T.sigmoid(T.dense(T.flatten(h), t[2], t[3])), y)

        result = check_gradients(fn, inputs, epsilon=1e-6)
        self.assertTrue(result.passed, result.max_relative_error)
