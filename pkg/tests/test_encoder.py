"""
Test cases for the Conformer encoder: subsampling arithmetic, relative
positions, padding invariance and zero-initialised residual branches
"""

import numpy as np
import pytest

from deskasr.config import EncoderConfig
from deskasr.errors import ShapeError
from deskasr.frontend import NUM_MEL_BINS, FeatureMatrix
from deskasr.models.encoder import (
    ConformerBlock,
    ConformerEncoder,
    RelPositionAttention,
    conv_out_length,
    subsampled_length,
)
from deskasr.numerics import Dropout, Rng, gradcheck, tensor


def make_encoder(**overrides):
    cfg = EncoderConfig(**{"d_model": 16, "num_layers": 2, "num_heads": 2, "conv_kernel": 5, **overrides})
    return ConformerEncoder(cfg, Rng(0), Rng(1), dtype=np.float64).eval()


def feats(rng_np, n):
    return FeatureMatrix(rng_np.standard_normal((n, NUM_MEL_BINS)))


class TestSubsamplingLengths:
    @pytest.mark.parametrize("frames,expected", [(1, 1), (2, 1), (3, 1), (4, 1), (5, 2), (98, 25), (100, 25)])
    def test_four_times_reduction(self, frames, expected):
        """Test: two stride-2 convolutions map T frames to ceil(ceil(T/2)/2)"""
        assert int(subsampled_length(frames)) == expected

    def test_single_conv(self):
        """Test: one kernel-3 stride-2 padding-1 layer"""
        assert conv_out_length(np.array([1, 7, 8])).tolist() == [1, 4, 4]

    def test_output_shape(self, rng_np):
        """Test: encoder states are (B, T', d_model) with per-utterance lengths"""
        out = make_encoder().encode([feats(rng_np, 98), feats(rng_np, 50)])
        assert out.states.shape == (2, 25, 16)
        assert out.lengths.tolist() == [25, 13]

    def test_empty_input(self):
        """Test: zero frames cannot be subsampled"""
        with pytest.raises(ShapeError):
            make_encoder()(np.zeros((1, 0, NUM_MEL_BINS)), [0])


class TestPaddingInvariance:
    def test_lengths_98_and_50(self, rng_np):
        """Test: padded batch equals separately encoded utterances at valid positions"""
        enc = make_encoder()
        a, b = feats(rng_np, 98), feats(rng_np, 50)
        together = enc.encode([a, b])
        alone_a = enc.encode([a])
        alone_b = enc.encode([b])
        np.testing.assert_allclose(together.utterance(0), alone_a.utterance(0), atol=1e-5)
        np.testing.assert_allclose(together.utterance(1), alone_b.utterance(0), atol=1e-5)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_random_length_pairs(self, seed):
        """Test: padding invariance holds for random odd and even lengths"""
        rng_np = np.random.default_rng(seed)
        enc = make_encoder(num_layers=1)
        n1, n2 = (int(v) for v in rng_np.integers(3, 60, size=2))
        a, b = feats(rng_np, n1), feats(rng_np, n2)
        together = enc.encode([a, b])
        np.testing.assert_allclose(together.utterance(1), enc.encode([b]).utterance(0), atol=1e-5)
        np.testing.assert_allclose(together.utterance(0), enc.encode([a]).utterance(0), atol=1e-5)


class TestRelativePositions:
    def test_logits_depend_on_offsets_only(self, rng_np):
        """Test: prepending frames leaves pairwise logits of the original frames unchanged"""
        attn = RelPositionAttention(8, 2, 256, Rng(4), Dropout(0.0, Rng(5)), dtype=np.float64)
        x = rng_np.standard_normal((1, 6, 8))
        shifted = np.concatenate([np.zeros((1, 3, 8)), x], axis=1)
        base, _ = attn.attention_logits(tensor(x, dtype=np.float64))
        moved, _ = attn.attention_logits(tensor(shifted, dtype=np.float64))
        np.testing.assert_allclose(moved.data[:, :, 3:, 3:], base.data, atol=1e-10)

    def test_clipped_distance(self, rng_np):
        """Test: distances past the clip share one embedding"""
        attn = RelPositionAttention(8, 2, 2, Rng(4), Dropout(0.0, Rng(5)), dtype=np.float64)
        index, reach = attn._relative_index(6)
        assert reach == 2
        assert index[0, 5] == index[0, 3] == 4
        assert index[5, 0] == 0


class TestInitialisation:
    def test_zero_init_residual_blocks_are_identity_before_norm(self, rng_np):
        """Test: with zeroed residual outputs each block only applies its final layer norm"""
        enc = make_encoder(zero_init_residual=True, num_layers=1)
        f = feats(rng_np, 20)
        x, lengths = enc.subsampling(tensor(f.frames[None], dtype=np.float64), np.array([20]))
        out = enc.blocks[0](x, lengths)
        mu = x.data.mean(axis=-1, keepdims=True)
        sd = np.sqrt(x.data.var(axis=-1, keepdims=True) + 1e-5)
        np.testing.assert_allclose(out.data, (x.data - mu) / sd, atol=1e-8)

    def test_same_seed_same_weights(self):
        """Test: initialisation is a pure function of the seed"""
        a, b = make_encoder(), make_encoder()
        for (name, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(p.data, q.data, err_msg=name)

    def test_heads_must_divide_width(self):
        """Test: d_model not divisible by the head count is a config error"""
        with pytest.raises(ValueError):
            EncoderConfig(d_model=10, num_heads=3)


class TestEncoderGradients:
    """Finite-difference checks through whole Conformer blocks, float64"""

    @pytest.mark.parametrize("seed,lengths", [(0, [5, 5]), (1, [6, 3]), (2, [4, 1])])
    def test_conformer_block(self, seed, lengths):
        """Test: input and parameter gradients of one block, with and without padding"""
        cfg = EncoderConfig(d_model=16, num_layers=1, num_heads=2, conv_kernel=3, max_relative_distance=4)
        block = ConformerBlock(cfg, Rng(seed), Dropout(0.0, Rng(99)), dtype=np.float64).eval()
        data = np.random.default_rng(seed).standard_normal((2, max(lengths), 16))
        x = tensor(data, requires_grad=True, dtype=np.float64)
        lengths = np.array(lengths)
        result = gradcheck(lambda: block(x, lengths), [x, *block.parameters()], eps=1e-6, max_checks=6)
        assert result.passed(), result.worst

    def test_full_encoder(self, rng_np):
        """Test: subsampling plus two blocks, gradients w.r.t. every parameter"""
        enc = make_encoder(conv_kernel=3)
        frames = tensor(rng_np.standard_normal((2, 13, NUM_MEL_BINS)), dtype=np.float64)
        lengths = np.array([13, 9])
        result = gradcheck(lambda: enc(frames, lengths).states, enc.parameters(), eps=1e-6, max_checks=4)
        assert result.passed(), result.worst
