"""
Tests for the tensor engine: gradients, softmax family, MMD and Adam.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import math

import numpy as np
import pytest
from helpers import GRADIENT_SETTINGS, analytic_gradient, numeric_gradient
from hypothesis import given
from hypothesis import strategies as st

from shiftgauge.exceptions import InvalidInputError, ShapeError, TrainingError
from shiftgauge.models import Hypothesis, MlpSpec
from shiftgauge.tensor import (
    Adam,
    AdamState,
    Tensor,
    adam_step,
    add,
    backward,
    cross_entropy,
    disagreement_loss,
    dropout,
    gradient_reversal,
    log_softmax,
    matmul,
    rbf_mmd2,
    relu,
    scale,
    softmax,
    softmax_values,
    total,
)


class TestTensorBasics:
    """Tests for Tensor construction and simple operators."""

    def test_data_is_float64(self):
        """Test integer input is stored as float64."""
        t = Tensor([[1, 2], [3, 4]])
        assert t.data.dtype == np.float64
        assert t.shape == (2, 2)
        assert t.grad is None

    def test_item_requires_single_element(self):
        """Test item() on a matrix raises ShapeError."""
        assert Tensor(2.5).item() == 2.5
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()

    def test_matmul_shape_mismatch(self):
        """Test inner-dimension mismatch is rejected."""
        with pytest.raises(ShapeError, match="matmul shape mismatch"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.ones(2)), Tensor(np.ones(3)))

    def test_total_of_empty_list(self):
        with pytest.raises(InvalidInputError):
            total([])

    def test_backward_needs_scalar(self):
        """Test backward from a non-scalar tensor raises."""
        with pytest.raises(ShapeError):
            backward(Tensor(np.ones((2, 2))))

    def test_shared_subexpression_accumulates(self):
        """Test a tensor used twice receives the sum of both gradients."""
        x = Tensor(3.0)
        loss = add(x, scale(x, 2.0))
        backward(loss)
        assert x.grad == pytest.approx(3.0)

    def test_operators_build_the_same_graph(self):
        """Test +, -, unary minus and scalar * match the named operations."""
        a, b = Tensor([1.0, 2.0]), Tensor([0.5, 0.5])
        np.testing.assert_allclose((a + b).data, [1.5, 2.5])
        np.testing.assert_allclose((a - b).data, [0.5, 1.5])
        np.testing.assert_allclose((-a).data, [-1.0, -2.0])
        np.testing.assert_allclose((2.0 * a).data, [2.0, 4.0])


class TestActivations:
    """Tests for relu, dropout and the softmax family."""

    def test_relu_forward(self):
        out = relu(Tensor([[-1.0, 0.0, 2.0]]))
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 2.0]])

    def test_relu_gradient_is_masked(self):
        """Test relu passes gradient only where the input is positive."""
        x = Tensor([[-1.0, 2.0]])
        backward(cross_entropy(relu(x), np.array([0])))
        assert x.grad[0, 0] == 0.0
        assert x.grad[0, 1] > 0.0

    def test_dropout_rate_zero_is_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert dropout(x, 0.0, np.random.default_rng(0)) is x

    def test_dropout_rejects_rate_one(self):
        with pytest.raises(InvalidInputError):
            dropout(Tensor(np.ones(2)), 1.0, np.random.default_rng(0))

    def test_dropout_keeps_expectation(self):
        """Test inverted dropout rescales kept entries by 1 / (1 - rate)."""
        out = dropout(Tensor(np.ones((200, 50))), 0.5, np.random.default_rng(1))
        assert set(np.unique(out.data)) <= {0.0, 2.0}
        assert out.data.mean() == pytest.approx(1.0, abs=0.05)

    def test_softmax_rows_sum_to_one(self):
        z = np.array([[1000.0, 1000.0], [-5.0, 5.0]])
        s = softmax_values(z)
        np.testing.assert_allclose(s.sum(axis=1), [1.0, 1.0])
        np.testing.assert_allclose(s[0], [0.5, 0.5])

    def test_log_softmax_matches_softmax(self):
        z = Tensor([[0.3, -1.2, 2.0]])
        np.testing.assert_allclose(np.exp(log_softmax(z).data), softmax(z).data)


class TestCrossEntropy:
    """Tests for cross_entropy."""

    def test_uniform_logits_give_log_k(self):
        """Test all-zero logits give mean NLL ln K."""
        loss = cross_entropy(Tensor(np.zeros((4, 3))), np.array([0, 1, 2, 0]))
        assert loss.item() == pytest.approx(math.log(3))

    def test_label_out_of_range(self):
        with pytest.raises(InvalidInputError, match="label index out of range"):
            cross_entropy(Tensor(np.zeros((2, 2))), np.array([0, 2]))

    def test_batch_mismatch(self):
        with pytest.raises(ShapeError):
            cross_entropy(Tensor(np.zeros((3, 2))), np.array([0, 1]))

    def test_gradient_matches_finite_differences(self):
        """Test d loss / d W of cross_entropy(X W) against central differences."""
        rng = np.random.default_rng(0)
        X = Tensor(rng.normal(size=(5, 3)))
        W = Tensor(rng.normal(size=(3, 4)))
        labels = np.array([0, 3, 1, 2, 1])

        def build():
            return cross_entropy(matmul(X, W), labels)

        analytic = analytic_gradient(build, W)
        numeric = numeric_gradient(lambda: build().item(), W.data)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)

    def test_matmul_left_operand_gradient(self):
        """Test the gradient flowing into the left matmul operand."""
        rng = np.random.default_rng(1)
        X = Tensor(rng.normal(size=(4, 2)))
        W = Tensor(rng.normal(size=(2, 3)))
        labels = np.array([2, 0, 1, 1])

        def build():
            return cross_entropy(matmul(X, W), labels)

        analytic = analytic_gradient(build, X)
        numeric = numeric_gradient(lambda: build().item(), X.data)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


class TestDisagreementLoss:
    """Tests for disagreement_loss."""

    def test_uniform_binary_logits_give_log_two(self):
        loss = disagreement_loss(Tensor(np.zeros((3, 2))), np.array([0, 1, 1]))
        assert loss.item() == pytest.approx(math.log(2))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        X = Tensor(rng.normal(size=(5, 3)))
        W = Tensor(rng.normal(size=(3, 4)))
        labels = np.array([1, 0, 3, 2, 2])

        def build():
            return disagreement_loss(matmul(X, W), labels)

        analytic = analytic_gradient(build, W)
        numeric = numeric_gradient(lambda: build().item(), W.data)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)

    def test_confident_agreement_keeps_gradient(self):
        """Test the labelled logit still gets a unit-size push where cross-entropy is flat."""
        logits = Tensor(np.array([[12.0, 0.0]]))
        agree = analytic_gradient(lambda: disagreement_loss(logits, np.array([0])), logits)
        flat = analytic_gradient(lambda: scale(cross_entropy(logits, np.array([0])), -1.0), logits)
        assert agree[0, 0] == pytest.approx(1.0, abs=1e-4)
        assert abs(flat[0, 0]) < 1e-4

    def test_batch_mismatch(self):
        with pytest.raises(ShapeError, match="disagreement_loss"):
            disagreement_loss(Tensor(np.zeros((3, 2))), np.array([0, 1]))


class TestGradientReversal:
    """Tests for the gradient-reversal node."""

    def test_forward_is_identity(self):
        x = Tensor([[1.0, -2.0]])
        np.testing.assert_array_equal(gradient_reversal(x, 0.7).data, x.data)

    def test_backward_multiplies_by_negative_lambda(self):
        """Test the upstream gradient is scaled by -lambda."""
        rng = np.random.default_rng(2)
        z = Tensor(rng.normal(size=(3, 2)))
        labels = np.array([0, 1, 1])
        plain = analytic_gradient(lambda: cross_entropy(z, labels), z)
        reversed_ = analytic_gradient(lambda: cross_entropy(gradient_reversal(z, 0.5), labels), z)
        np.testing.assert_allclose(reversed_, -0.5 * plain)

    def test_zero_lambda_blocks_gradient(self):
        z = Tensor(np.ones((2, 2)))
        grad = analytic_gradient(lambda: cross_entropy(gradient_reversal(z, 0.0), np.array([0, 1])), z)
        np.testing.assert_array_equal(np.abs(grad), np.zeros((2, 2)))

    def test_negative_lambda_rejected(self):
        with pytest.raises(InvalidInputError):
            gradient_reversal(Tensor(np.ones(2)), -0.1)


class TestRbfMmd:
    """Tests for the fused RBF MMD node."""

    def test_identical_singletons_give_zero(self):
        assert rbf_mmd2(Tensor([[0.0]]), Tensor([[0.0]]), 1.0).item() == pytest.approx(0.0, abs=1e-15)

    def test_far_singletons(self):
        """Test X={0}, Y={10}, sigma=1 gives 2 - 2 exp(-50)."""
        value = rbf_mmd2(Tensor([[0.0]]), Tensor([[10.0]]), 1.0).item()
        assert abs(value - (2.0 - 2.0 * math.exp(-50.0))) <= 1e-12

    def test_gradient_matches_finite_differences(self):
        """Test the analytic MMD gradient for both samples."""
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(4, 2)))
        y = Tensor(rng.normal(loc=0.5, size=(3, 2)))

        def build():
            return rbf_mmd2(x, y, 0.8)

        for leaf in (x, y):
            analytic = analytic_gradient(build, leaf)
            numeric = numeric_gradient(lambda: build().item(), leaf.data)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_invalid_bandwidth(self):
        with pytest.raises(InvalidInputError):
            rbf_mmd2(Tensor([[0.0]]), Tensor([[1.0]]), 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            rbf_mmd2(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))), 1.0)


class TestNetworkGradients:
    """Fuzzed end-to-end gradient checks through small MLPs."""

    @GRADIENT_SETTINGS
    @given(
        seed=st.integers(min_value=0, max_value=2**31 - 1),
        widths=st.lists(st.integers(min_value=1, max_value=5), min_size=1, max_size=3),
        num_classes=st.integers(min_value=2, max_value=4),
        latent_relu=st.booleans(),
    )
    def test_hypothesis_parameter_gradients(self, seed, widths, num_classes, latent_relu):
        """Test every parameter gradient of cross_entropy(h(x)) against finite differences."""
        rng = np.random.default_rng(seed)
        spec = MlpSpec(3, tuple(widths), num_classes, 1, latent_relu)
        h = Hypothesis.initialize(spec, rng)
        x = Tensor(rng.normal(size=(6, 3)))
        labels = rng.integers(0, num_classes, 6)

        def build():
            return cross_entropy(h.logits(x), labels)

        for p in h.parameters():
            analytic = analytic_gradient(build, p)
            numeric = numeric_gradient(lambda: build().item(), p.data)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


class TestAdam:
    """Tests for the Adam optimiser."""

    def test_first_step_moves_by_learning_rate(self):
        """Test the first bias-corrected step has magnitude ~lr in each coordinate."""
        p = Tensor([1.0, -1.0, 0.5])
        state = AdamState.zeros([p])
        adam_step([p], [np.array([0.3, -2.0, 1e-3])], state, lr=1e-3)
        np.testing.assert_allclose(p.data, [1.0 - 1e-3, -1.0 + 1e-3, 0.5 - 1e-3], atol=1e-7)
        assert state.step == 1

    def test_zero_gradient_leaves_parameters(self):
        p = Tensor([[1.0, 2.0]])
        adam_step([p], [np.zeros((1, 2))], AdamState.zeros([p]), lr=0.1)
        np.testing.assert_array_equal(p.data, [[1.0, 2.0]])

    def test_non_finite_gradient_raises_with_step(self):
        """Test a NaN gradient raises TrainingError carrying the step index."""
        p = Tensor([1.0])
        state = AdamState.zeros([p])
        adam_step([p], [np.array([0.1])], state, lr=1e-3)
        with pytest.raises(TrainingError) as exc_info:
            adam_step([p], [np.array([np.nan])], state, lr=1e-3)
        assert exc_info.value.step == 2
        assert state.step == 1

    def test_optimizer_deduplicates_parameters(self):
        p = Tensor([1.0])
        opt = Adam([p, p], lr=1e-3)
        assert len(opt.params) == 1

    def test_zero_grad_and_missing_grad(self):
        """Test parameters without a gradient are treated as zero-gradient."""
        p, q = Tensor([1.0]), Tensor([2.0])
        opt = Adam([p, q], lr=0.01)
        p.grad = np.array([1.0])
        opt.step()
        assert p.data[0] == pytest.approx(0.99)
        assert q.data[0] == 2.0
        opt.zero_grad()
        assert p.grad is None and q.grad is None

    def test_training_reduces_loss(self):
        """Test a few Adam steps on a separable problem lower cross-entropy."""
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(-2, 0.3, (20, 2)), rng.normal(2, 0.3, (20, 2))])
        y = np.array([0] * 20 + [1] * 20)
        W = Tensor(rng.normal(scale=0.1, size=(2, 2)))
        opt = Adam([W], lr=0.05)
        first = cross_entropy(matmul(Tensor(X), W), y).item()
        for _ in range(50):
            loss = cross_entropy(matmul(Tensor(X), W), y)
            opt.zero_grad()
            backward(loss)
            opt.step()
        assert cross_entropy(matmul(Tensor(X), W), y).item() < first
