"""
Unit tests for redvit.autodiff.tensor and redvit.autodiff.gradcheck.
"""
import numpy as np
import pytest

from redvit.autodiff import tensor as T
from redvit.autodiff.gradcheck import check_primitives, finite_diff_check, relative_error
from redvit.autodiff.tensor import Tape
from redvit.errors import ContractError, DimensionError, TapeStateError


class TestMatmul:
    """Tests for the matmul primitive."""

    def test_identity(self):
        """Multiplying by the identity returns the input."""
        a = np.array([[1.5, -2.0], [0.25, 3.0]])
        out = T.matmul(T.constant(a), T.constant(np.eye(2)))
        np.testing.assert_array_equal(out.numpy(), a)

    def test_zero_matrix(self):
        """A zero left operand gives zeros."""
        out = T.matmul(T.constant(np.zeros((3, 3))), T.constant(np.arange(9.0).reshape(3, 3)))
        np.testing.assert_array_equal(out.numpy(), np.zeros((3, 3)))

    def test_hand_example(self):
        """[[1,2],[3,4]] x [[5],[6]] = [[17],[39]]."""
        out = T.matmul(T.constant([[1.0, 2.0], [3.0, 4.0]]), T.constant([[5.0], [6.0]]))
        np.testing.assert_array_equal(out.numpy(), [[17.0], [39.0]])

    def test_inner_dimension_mismatch(self):
        """Mismatched inner dimensions raise DimensionError carrying both shapes."""
        with pytest.raises(DimensionError) as info:
            T.matmul(T.constant(np.ones((2, 3))), T.constant(np.ones((2, 3))))
        assert info.value.shapes == ((2, 3), (2, 3))

    def test_batched_gradient_shapes(self):
        """A shared weight matrix receives the gradient summed over the batch."""
        tape = Tape()
        x = tape.leaf(np.ones((4, 2, 3)), "x")
        w = tape.leaf(np.ones((3, 5)), "w")
        grads = tape.backward(T.sum(T.matmul(x, w)))
        assert grads["x"].shape == (4, 2, 3)
        np.testing.assert_array_equal(grads["w"], np.full((3, 5), 8.0))


class TestSoftmax:
    """Tests for softmax and log_softmax."""

    def test_equal_values_are_uniform(self):
        out = T.softmax(T.constant(np.full((2, 4), 3.0)))
        np.testing.assert_allclose(out.numpy(), np.full((2, 4), 0.25), atol=1e-15)

    def test_single_entry(self):
        np.testing.assert_array_equal(T.softmax(T.constant([7.0])).numpy(), [1.0])

    def test_hand_example(self):
        """softmax([2, 0]) = [0.880797, 0.119203]."""
        out = T.softmax(T.constant([2.0, 0.0])).numpy()
        np.testing.assert_allclose(out, [0.880797, 0.119203], atol=1e-6)

    def test_large_logits_stay_finite(self):
        out = T.softmax(T.constant([1000.0, 0.0])).numpy()
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1.0)

    def test_log_softmax_matches_log_of_softmax(self):
        x = np.random.default_rng(0).normal(size=(3, 6))
        np.testing.assert_allclose(T.log_softmax(T.constant(x)).numpy(), np.log(T.softmax(T.constant(x)).numpy()),
                                   atol=1e-12)


class TestBackward:
    """Tests for the tape and reverse-mode backward."""

    def test_sum_of_squares(self):
        """d/dx sum(x^2) at [1, 2] is [2, 4]."""
        tape = Tape()
        x = tape.leaf([1.0, 2.0], "x")
        grads = tape.backward(T.sum(T.mul(x, x)))
        np.testing.assert_array_equal(grads["x"], [2.0, 4.0])

    def test_constant_output_gives_zero_gradient(self):
        """A leaf the output does not depend on gets zeros of its own shape."""
        tape = Tape()
        x = tape.leaf(np.ones((2, 3)), "x")
        y = tape.leaf([4.0], "y")
        grads = tape.backward(T.sum(y))
        np.testing.assert_array_equal(grads["x"], np.zeros((2, 3)))
        np.testing.assert_array_equal(grads["y"], [1.0])

    def test_shared_subexpression_accumulates(self):
        tape = Tape()
        x = tape.leaf([3.0], "x")
        y = T.add(x, x)
        grads = tape.backward(T.sum(T.mul(y, x)))
        np.testing.assert_array_equal(grads["x"], [12.0])

    def test_backward_is_linear(self):
        """grad(a*f + b*g) equals a*grad(f) + b*grad(g)."""
        x0 = np.random.default_rng(5).normal(size=(2, 3))
        w = np.random.default_rng(6).normal(size=(2, 3))

        def f(x):
            return T.sum(T.mask_multiply(T.softmax(x), w))

        def g(x):
            return T.sum(T.gelu(x))

        def grad(fn):
            tape = Tape()
            return tape.backward(fn(tape.leaf(x0, "x")))["x"]

        combined = grad(lambda x: T.add(T.scale(f(x), 2.5), T.scale(g(x), -0.75)))
        np.testing.assert_allclose(combined, 2.5 * grad(f) - 0.75 * grad(g), rtol=0, atol=1e-14)

    def test_non_scalar_output_rejected(self):
        tape = Tape()
        x = tape.leaf([1.0, 2.0], "x")
        with pytest.raises(ContractError):
            tape.backward(T.scale(x, 2.0))

    def test_tape_is_consumed(self):
        """A second backward on the same tape is a state error."""
        tape = Tape()
        x = tape.leaf([1.0], "x")
        out = T.sum(x)
        tape.backward(out)
        with pytest.raises(TapeStateError):
            tape.backward(out)
        with pytest.raises(TapeStateError):
            tape.leaf([2.0], "z")

    def test_untaped_output_rejected(self):
        with pytest.raises(TapeStateError):
            T.backward(T.sum(T.constant([1.0, 2.0])))

    def test_duplicate_leaf_names_rejected(self):
        tape = Tape()
        tape.leaf([1.0], "x")
        with pytest.raises(ContractError):
            tape.leaf([2.0], "x")

    def test_mixing_tapes_rejected(self):
        a = Tape().leaf([1.0], "a")
        b = Tape().leaf([1.0], "b")
        with pytest.raises(ContractError):
            T.add(a, b)

    def test_constants_record_nothing(self):
        tape = Tape()
        T.add(T.constant([1.0]), T.constant([2.0]))
        assert len(tape) == 0


class TestGather:
    """Tests for the gather primitive used by patch and convolution windows."""

    def test_negative_index_reads_zero(self):
        out = T.gather(T.constant([[1.0, 2.0, 3.0]]), np.array([[2, -1], [0, 1]]))
        np.testing.assert_array_equal(out.numpy(), [[[3.0, 0.0], [1.0, 2.0]]])

    def test_repeated_index_accumulates_gradient(self):
        tape = Tape()
        x = tape.leaf([1.0, 2.0, 3.0], "x")
        grads = tape.backward(T.sum(T.gather(x, np.array([0, 0, 2, -1]))))
        np.testing.assert_array_equal(grads["x"], [2.0, 0.0, 1.0])

    def test_out_of_range_index(self):
        with pytest.raises(DimensionError):
            T.gather(T.constant([1.0, 2.0]), np.array([2]))


class TestGradcheck:
    """Tests for the finite-difference checker."""

    def test_polynomial_is_exact(self):
        x = np.random.default_rng(1).normal(size=(3, 4))
        assert finite_diff_check(lambda t: T.sum(T.mul(t, t)), x, h=1e-3) < 1e-9

    def test_softmax_pick_first(self):
        def f(t):
            return T.sum(T.mask_multiply(T.softmax(t), np.array([1.0, 0.0])))

        assert finite_diff_check(f, np.array([0.3, -0.7])) < 1e-6

    def test_relative_error_floor(self):
        assert relative_error(np.array(0.0), np.array(0.0)) == 0.0
        assert relative_error(np.array(1.0), np.array(1.1)) == pytest.approx(0.1 / 1.1)

    def test_nondeterministic_function_rejected(self):
        rng = np.random.default_rng(0)

        def f(t):
            return T.sum(T.mask_multiply(t, rng.random(t.shape)))

        with pytest.raises(ContractError):
            finite_diff_check(f, np.ones(3))

    def test_nonpositive_step_rejected(self):
        with pytest.raises(ContractError):
            finite_diff_check(lambda t: T.sum(t), np.ones(2), h=0.0)

    def test_every_primitive_passes(self):
        results = check_primitives(seed=0, points=3)
        assert {"matmul", "softmax", "layer_norm", "gelu", "gather"} <= set(results)
        assert max(results.values()) < 1e-6
