"""
Test cases for the autodiff tensors, layers, optimiser and RNG streams
"""

import numpy as np
import pytest

from deskasr.errors import ShapeError
from deskasr.numerics import Adam, Linear, Rng, Tensor, clip_grad_norm, gradcheck, tensor
from deskasr.numerics import functional as F


def leaf(rng_np, *shape):
    return tensor(rng_np.standard_normal(shape), requires_grad=True, dtype=np.float64)


class TestGradients:
    """Finite-difference checks of every differentiable primitive"""

    @pytest.mark.parametrize(
        "op",
        [
            lambda a, b: a + b,
            lambda a, b: a - b,
            lambda a, b: a * b,
            lambda a, b: a / (F.exp(b) + 1.0),
        ],
    )
    def test_binary_ops(self, rng_np, op):
        """Test: elementwise arithmetic matches central differences"""
        a, b = leaf(rng_np, 3, 4), leaf(rng_np, 3, 4)
        assert gradcheck(lambda: op(a, b), [a, b]).passed()

    def test_broadcast_bias(self, rng_np):
        """Test: broadcasting a row vector sums its gradient over rows"""
        a, b = leaf(rng_np, 5, 3), leaf(rng_np, 3)
        assert gradcheck(lambda: a * b + b, [a, b]).passed()

    def test_matmul_batched(self, rng_np):
        """Test: batched matmul gradients for both operands"""
        a, b = leaf(rng_np, 2, 3, 4), leaf(rng_np, 2, 4, 5)
        assert gradcheck(lambda: a @ b, [a, b]).passed()

    def test_linear(self, rng_np):
        """Test: linear layer gradients for input, weight and bias"""
        x, w, bias = leaf(rng_np, 2, 3, 4), leaf(rng_np, 5, 4), leaf(rng_np, 5)
        assert gradcheck(lambda: F.linear(x, w, bias), [x, w, bias]).passed()

    @pytest.mark.parametrize("fn", [F.relu, F.sigmoid, F.swish, F.exp, lambda t: F.pow(t, 2.0)])
    def test_unary(self, rng_np, fn):
        """Test: unary activations match central differences"""
        x = leaf(rng_np, 4, 6)
        assert gradcheck(lambda: fn(x), [x]).passed()

    def test_log(self, rng_np):
        """Test: log on strictly positive inputs"""
        x = tensor(rng_np.uniform(0.5, 2.0, (3, 3)), requires_grad=True, dtype=np.float64)
        assert gradcheck(lambda: F.log(x), [x]).passed()

    def test_softmax_and_log_softmax(self, rng_np):
        """Test: softmax and log-softmax over the last axis"""
        x = leaf(rng_np, 3, 5)
        assert gradcheck(lambda: F.softmax(x), [x]).passed()
        assert gradcheck(lambda: F.log_softmax(x), [x]).passed()

    def test_layer_norm(self, rng_np):
        """Test: layer norm with affine parameters"""
        x, g, b = leaf(rng_np, 2, 3, 6), leaf(rng_np, 6), leaf(rng_np, 6)
        assert gradcheck(lambda: F.layer_norm(x, g, b), [x, g, b]).passed()

    def test_glu(self, rng_np):
        """Test: gated linear unit over the channel axis"""
        x = leaf(rng_np, 2, 3, 8)
        assert gradcheck(lambda: F.glu(x), [x]).passed()

    def test_shape_ops(self, rng_np):
        """Test: reshape, transpose, concat, getitem and pad route gradients back"""
        x, y = leaf(rng_np, 2, 3, 4), leaf(rng_np, 2, 1, 4)
        assert gradcheck(lambda: F.reshape(x, (6, 4)), [x]).passed()
        assert gradcheck(lambda: F.transpose(x, (2, 0, 1)), [x]).passed()
        assert gradcheck(lambda: F.concat([x, y], axis=1), [x, y]).passed()
        assert gradcheck(lambda: F.getitem(x, (slice(None), slice(1, 3))), [x]).passed()
        assert gradcheck(lambda: F.pad(x, [(0, 0), (1, 2), (0, 0)]), [x]).passed()

    def test_sum_mean(self, rng_np):
        """Test: reductions with and without keepdims"""
        x = leaf(rng_np, 3, 4)
        assert gradcheck(lambda: F.sum(x, axis=1), [x]).passed()
        assert gradcheck(lambda: F.mean(x, axis=0, keepdims=True), [x]).passed()

    def test_masked_fill(self, rng_np):
        """Test: masked positions receive no gradient"""
        x = leaf(rng_np, 3, 4)
        mask = np.zeros((3, 4), dtype=bool)
        mask[:, 2:] = True
        assert gradcheck(lambda: F.masked_fill(x, mask, 0.0), [x]).passed()
        F.sum(F.masked_fill(x, mask, 0.0)).backward()
        assert np.all(x.grad[mask] == 0)

    def test_embedding_with_repeats(self, rng_np):
        """Test: repeated ids accumulate into the same embedding row"""
        w = leaf(rng_np, 5, 3)
        ids = np.array([[1, 1, 4], [0, 1, 2]])
        assert gradcheck(lambda: F.embedding(w, ids), [w]).passed()

    def test_gather_last(self, rng_np):
        """Test: gather over the last axis"""
        x = leaf(rng_np, 2, 3, 5)
        idx = np.array([[0, 4], [2, 2], [1, 3]])
        assert gradcheck(lambda: F.gather_last(x, idx), [x]).passed()

    def test_depthwise_conv(self, rng_np):
        """Test: depthwise temporal convolution, same padding"""
        x, w, b = leaf(rng_np, 2, 6, 3), leaf(rng_np, 3, 3), leaf(rng_np, 3)
        assert gradcheck(lambda: F.conv1d_depthwise(x, w, b), [x, w, b]).passed()

    def test_conv2d_stride2(self, rng_np):
        """Test: strided 2-D convolution used by the subsampler"""
        x, w, b = leaf(rng_np, 1, 2, 7, 6), leaf(rng_np, 3, 2, 3, 3), leaf(rng_np, 3)
        assert gradcheck(lambda: F.conv2d(x, w, b, stride=2), [x, w, b]).passed()

    def test_cross_entropy_masked(self, rng_np):
        """Test: masked cross entropy gradients"""
        logits = leaf(rng_np, 2, 3, 6)
        targets = np.array([[1, 2, 0], [5, 5, 3]])
        mask = np.array([[1, 1, 0], [1, 0, 0]])
        assert gradcheck(lambda: F.cross_entropy(logits, targets, mask), [logits]).passed()


class TestGradcheck:
    """The checker itself"""

    def _scaled(self, x, scale, reported):
        # forward multiplies by `scale`, backward claims `reported`
        return F._make(x.data * scale, (x,), lambda g: (g * reported,))

    def test_small_wrong_gradient_is_caught(self, rng_np):
        """Test: a 10% error on gradients of size 1e-6 fails the relative criterion"""
        x = leaf(rng_np, 3, 3)
        result = gradcheck(lambda: self._scaled(x, 1e-6, 1.1e-6), [x])
        assert not result.passed()
        assert result.max_rel_error > 0.05

    def test_small_correct_gradient_passes(self, rng_np):
        """Test: correct gradients of size 1e-6 pass"""
        x = leaf(rng_np, 3, 3)
        assert gradcheck(lambda: self._scaled(x, 1e-6, 1e-6), [x]).passed()

    def test_exact_zeros_pass(self, rng_np):
        """Test: inputs with no influence compare as exact and report the absolute error"""
        x, y = leaf(rng_np, 2, 2), leaf(rng_np, 2, 2)
        result = gradcheck(lambda: x * 2.0, [x, y])
        assert result.passed()
        assert result.checked == 8
        assert result.max_abs_error < 1e-8


class TestTensorSemantics:
    """Graph bookkeeping and error reporting"""

    def test_cross_entropy_all_masked_is_zero(self, rng_np):
        """Test: an all-zero mask yields loss 0 and zero gradients"""
        logits = leaf(rng_np, 2, 4)
        loss = F.cross_entropy(logits, np.array([1, 2]), np.zeros(2))
        assert loss.item() == 0.0
        loss.backward()
        assert np.all(logits.grad == 0)

    def test_cross_entropy_uniform(self):
        """Test: uniform logits over V classes give log V"""
        logits = tensor(np.zeros((3, 8)), requires_grad=True, dtype=np.float64)
        assert F.cross_entropy(logits, np.array([0, 3, 7])).item() == pytest.approx(np.log(8))

    def test_frozen_leaf_gets_no_grad(self, rng_np):
        """Test: a leaf with requires_grad False keeps grad None"""
        frozen = tensor(rng_np.standard_normal((3, 3)), dtype=np.float64)
        live = leaf(rng_np, 3, 3)
        F.sum(frozen @ live).backward()
        assert frozen.grad is None
        assert live.grad is not None

    def test_shared_input_accumulates(self, rng_np):
        """Test: using a tensor twice sums both gradient paths"""
        x = leaf(rng_np, 4)
        F.sum(x * x).backward()
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_incompatible_shapes_raise(self, rng_np):
        """Test: mismatched shapes raise ShapeError naming both shapes"""
        with pytest.raises(ShapeError, match=r"\(2, 3\)"):
            leaf(rng_np, 2, 3) @ leaf(rng_np, 4, 5)
        with pytest.raises(ShapeError):
            leaf(rng_np, 2, 3) + leaf(rng_np, 4, 3)

    def test_embedding_out_of_range(self, rng_np):
        """Test: an id outside the table raises ShapeError"""
        with pytest.raises(ShapeError):
            F.embedding(leaf(rng_np, 3, 2), np.array([3]))

    def test_backward_needs_scalar(self, rng_np):
        """Test: backward without a seed gradient needs a scalar"""
        with pytest.raises(ShapeError):
            (leaf(rng_np, 2, 2) * 2.0).backward()

    def test_integer_input_becomes_float32(self):
        """Test: non-float input is stored as float32"""
        assert Tensor([1, 2, 3]).dtype == np.float32


class TestDropout:
    def test_eval_is_identity(self, rng_np):
        """Test: dropout does nothing outside training"""
        x = leaf(rng_np, 4, 4)
        assert F.dropout(x, 0.5, Rng(0), training=False) is x

    def test_same_stream_same_mask(self, rng_np):
        """Test: equal RNG streams give identical masks"""
        x = leaf(rng_np, 8, 8)
        a = F.dropout(x, 0.3, Rng(5)).data
        b = F.dropout(x, 0.3, Rng(5)).data
        np.testing.assert_array_equal(a, b)

    def test_kept_units_are_rescaled(self):
        """Test: surviving units are scaled by 1 / (1 - p)"""
        x = tensor(np.ones((50, 50)), dtype=np.float64)
        out = F.dropout(x, 0.5, Rng(1)).data
        assert set(np.unique(out)) <= {0.0, 2.0}


class TestAdam:
    """Optimiser behaviour and persistence"""

    def _setup(self):
        layer = Linear(3, 2, Rng(0), dtype=np.float64)
        return layer, Adam(layer.named_parameters(), lr=0.1)

    def test_step_reduces_quadratic(self):
        """Test: repeated steps decrease a simple quadratic loss"""
        layer, opt = self._setup()
        x = tensor(np.ones((4, 3)), dtype=np.float64)
        losses = []
        for _ in range(20):
            opt.zero_grad()
            loss = F.mean(F.pow(layer(x), 2.0))
            loss.backward()
            opt.step()
            losses.append(loss.item())
        assert losses[-1] < losses[0]

    def test_frozen_parameters_untouched(self):
        """Test: parameters with requires_grad False are excluded from updates"""
        layer = Linear(3, 2, Rng(0), dtype=np.float64)
        layer.bias.requires_grad = False
        opt = Adam(layer.named_parameters(), lr=0.1)
        before = layer.bias.data.copy()
        F.sum(layer(tensor(np.ones((1, 3)), dtype=np.float64))).backward()
        opt.step()
        np.testing.assert_array_equal(layer.bias.data, before)
        assert [n for n, _ in opt.named_params] == ["weight"]

    def test_clip_grad_norm(self):
        """Test: joint norm above the limit is scaled down to it"""
        p = tensor(np.zeros(2), requires_grad=True, dtype=np.float64)
        p.grad = np.array([3.0, 4.0])
        norm = clip_grad_norm([p], 1.0)
        assert norm == pytest.approx(5.0)
        assert np.linalg.norm(p.grad) == pytest.approx(1.0)

    def test_state_round_trip(self):
        """Test: restored optimiser continues with identical updates"""
        x = tensor(np.ones((2, 3)), dtype=np.float64)
        a, opt_a = self._setup()
        b, opt_b = self._setup()
        F.sum(a(x)).backward()
        opt_a.step()
        b.load_state_dict(a.state_dict())
        opt_b.load_state_dict(opt_a.state_dict())
        for layer, opt in ((a, opt_a), (b, opt_b)):
            opt.zero_grad()
            F.sum(layer(x)).backward()
            opt.step()
        np.testing.assert_array_equal(a.weight.data, b.weight.data)


class TestRng:
    def test_spawn_depends_only_on_seed_and_key(self):
        """Test: children with the same key agree regardless of parent draws"""
        parent = Rng(3)
        first = parent.spawn("data").random(5)
        parent.random(100)
        np.testing.assert_array_equal(first, Rng(3).spawn("data").random(5))
        assert not np.array_equal(first, Rng(3).spawn("init").random(5))

    def test_state_round_trip(self):
        """Test: restoring a saved state replays the same draws"""
        rng = Rng(9)
        rng.random(7)
        state = rng.get_state()
        expected = rng.normal(size=4)
        np.testing.assert_array_equal(Rng.from_state(state).normal(size=4), expected)

    def test_unknown_algorithm(self):
        """Test: unsupported generator names are rejected"""
        with pytest.raises(ValueError, match="Supported"):
            Rng(0, algorithm="mt19937")


class TestModuleState:
    def test_strict_load_mismatch(self):
        """Test: strict loading reports missing and unexpected names"""
        layer = Linear(2, 2, Rng(0))
        with pytest.raises(KeyError, match="missing"):
            layer.load_state_dict({"weight": layer.weight.data})

    def test_shape_mismatch(self):
        """Test: a wrongly shaped array raises ShapeError"""
        layer = Linear(2, 2, Rng(0))
        state = layer.state_dict()
        state["weight"] = np.zeros((3, 2))
        with pytest.raises(ShapeError):
            layer.load_state_dict(state)
