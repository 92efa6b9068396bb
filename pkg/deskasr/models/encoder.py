"""
Conformer encoder: two stride-2 convolutions (10 ms -> 40 ms) followed by a
stack of Macaron-style Conformer blocks with relative-position self-attention.

Padded frames never influence valid ones: subsampling zeroes time steps past
each utterance's length after every convolution, attention gives padded keys
-inf logits, and the convolution module zeroes padded steps before its
depthwise convolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ..errors import ShapeError
from ..frontend import NUM_MEL_BINS, FeatureMatrix, pad_features
from ..numerics import functional as F
from ..numerics.nn import (
    Conv2d,
    DepthwiseConv1d,
    Dropout,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    Parameter,
    PointwiseConv1d,
    xavier_uniform,
)
from ..numerics.rng import Rng
from ..numerics.tensor import Tensor
from .layers import FeedForward, key_padding_mask, merge_heads, sinusoid_table, split_heads, valid_mask, zero_linear

if TYPE_CHECKING:
    from ..config import EncoderConfig


@dataclass
class EncoderOutput:
    states: Tensor  # (B, T', d_model)
    lengths: np.ndarray  # (B,)

    @property
    def valid_length(self) -> int:
        """Length of the first (or only) utterance."""
        return int(self.lengths[0])

    def utterance(self, i: int) -> np.ndarray:
        return self.states.data[i, : int(self.lengths[i])]


def conv_out_length(length):
    """Output length of one kernel-3, stride-2, padding-1 convolution."""
    return (np.asarray(length) + 2 * 1 - 3) // 2 + 1


def subsampled_length(length):
    return conv_out_length(conv_out_length(length))


def _zero_padded_time(x: Tensor, lengths, time_axis: int) -> Tensor:
    keep = valid_mask(lengths, x.shape[time_axis])
    shape = [1] * x.ndim
    shape[0], shape[time_axis] = keep.shape
    return F.masked_fill(x, ~keep.reshape(shape), 0.0)


# ---------------------------------------------------------------------------
# Subsampling
# ---------------------------------------------------------------------------


class Conv2dSubsampling(Module):
    def __init__(self, d_model: int, channels: tuple[int, int], rng: Rng, dtype=np.float32):
        c1, c2 = channels
        self.conv1 = Conv2d(1, c1, 3, rng, stride=2, padding=1, dtype=dtype)
        self.conv2 = Conv2d(c1, c2, 3, rng, stride=2, padding=1, dtype=dtype)
        freq = int(subsampled_length(NUM_MEL_BINS))
        self.proj = Linear(c2 * freq, d_model, rng, dtype=dtype)

    def forward(self, features: Tensor, lengths) -> tuple[Tensor, np.ndarray]:
        batch, steps, bins = features.shape
        if steps < 1:
            raise ShapeError(f"subsampling needs at least one frame, got input shape {features.shape}")
        x = F.reshape(features, (batch, 1, steps, bins))
        lengths1 = conv_out_length(lengths)
        x = _zero_padded_time(F.relu(self.conv1(x)), lengths1, time_axis=2)
        lengths2 = conv_out_length(lengths1)
        x = _zero_padded_time(F.relu(self.conv2(x)), lengths2, time_axis=2)
        _, channels, out_steps, freq = x.shape
        x = F.reshape(F.transpose(x, (0, 2, 1, 3)), (batch, out_steps, channels * freq))
        return self.proj(x), np.asarray(lengths2, dtype=np.int64)


# ---------------------------------------------------------------------------
# Relative-position self-attention
# ---------------------------------------------------------------------------


class RelPositionAttention(Module):
    """Self-attention with content and relative-position logits.

    logits[i, j] = ((q_i + u) . k_j + (q_i + v) . p(j - i)) / sqrt(d_k), with
    p a learned projection of a sinusoidal encoding of the distance j - i,
    clipped to +/- max_relative_distance. u and v are shared across positions.
    """

    def __init__(self, d_model: int, num_heads: int, max_relative_distance: int, rng: Rng,
                 dropout: Dropout, dtype=np.float32):
        self.num_heads = num_heads
        self.max_relative_distance = max_relative_distance
        dk = d_model // num_heads
        self.q = Linear(d_model, d_model, rng, dtype=dtype)
        self.k = Linear(d_model, d_model, rng, dtype=dtype)
        self.v = Linear(d_model, d_model, rng, dtype=dtype)
        self.o = Linear(d_model, d_model, rng, dtype=dtype)
        self.pos = Linear(d_model, d_model, rng, bias=False, dtype=dtype)
        self.pos_bias_u = Parameter(xavier_uniform(rng, num_heads, dk, (num_heads, dk), dtype))
        self.pos_bias_v = Parameter(xavier_uniform(rng, num_heads, dk, (num_heads, dk), dtype))
        self.dropout = dropout

    def _relative_index(self, steps: int) -> tuple[np.ndarray, int]:
        reach = min(self.max_relative_distance, max(steps - 1, 0))
        offsets = np.arange(steps)[None, :] - np.arange(steps)[:, None]
        return np.clip(offsets, -reach, reach) + reach, reach

    def attention_logits(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Scaled pre-mask logits (B, H, T, T) and the value heads."""
        batch, steps, d_model = x.shape
        heads = self.num_heads
        dk = d_model // heads
        q = split_heads(self.q(x), heads)
        k = split_heads(self.k(x), heads)
        v = split_heads(self.v(x), heads)

        index, reach = self._relative_index(steps)
        table = Tensor(sinusoid_table(np.arange(-reach, reach + 1), d_model, dtype=x.dtype))
        p = F.transpose(F.reshape(self.pos(table), (2 * reach + 1, heads, dk)), (1, 2, 0))  # (H, dk, 2R+1)

        u = F.reshape(self.pos_bias_u, (heads, 1, dk))
        w = F.reshape(self.pos_bias_v, (heads, 1, dk))
        content = F.matmul(F.add(q, u), F.swapaxes(k, -1, -2))
        position = F.gather_last(F.matmul(F.add(q, w), p), index)
        return F.mul(F.add(content, position), 1.0 / np.sqrt(dk)), v

    def forward(self, x: Tensor, lengths) -> Tensor:
        logits, v = self.attention_logits(x)
        logits = F.masked_fill(logits, key_padding_mask(lengths, x.shape[1]), -np.inf)
        weights = self.dropout(F.softmax(logits, axis=-1))
        return self.o(merge_heads(F.matmul(weights, v)))


# ---------------------------------------------------------------------------
# Convolution module and block
# ---------------------------------------------------------------------------


class ConvolutionModule(Module):
    """pointwise (d -> 2d) -> GLU -> depthwise -> LayerNorm -> Swish -> pointwise."""

    def __init__(self, d_model: int, kernel: int, rng: Rng, dtype=np.float32):
        self.pointwise_in = PointwiseConv1d(d_model, 2 * d_model, rng, dtype=dtype)
        self.depthwise = DepthwiseConv1d(d_model, kernel, rng, dtype=dtype)
        self.norm = LayerNorm(d_model, dtype=dtype)
        self.pointwise_out = PointwiseConv1d(d_model, d_model, rng, dtype=dtype)

    def forward(self, x: Tensor, lengths) -> Tensor:
        x = F.glu(self.pointwise_in(x), axis=-1)
        x = self.depthwise(_zero_padded_time(x, lengths, time_axis=1))
        return self.pointwise_out(F.swish(self.norm(x)))


class ConformerBlock(Module):
    def __init__(self, cfg: "EncoderConfig", rng: Rng, dropout: Dropout, dtype=np.float32):
        d = cfg.d_model
        self.ffn1_norm = LayerNorm(d, dtype=dtype)
        self.ffn1 = FeedForward(d, cfg.ffn_dim, rng, dropout, activation="swish", dtype=dtype)
        self.attn_norm = LayerNorm(d, dtype=dtype)
        self.attn = RelPositionAttention(d, cfg.num_heads, cfg.max_relative_distance, rng, dropout, dtype=dtype)
        self.conv_norm = LayerNorm(d, dtype=dtype)
        self.conv = ConvolutionModule(d, cfg.conv_kernel, rng, dtype=dtype)
        self.ffn2_norm = LayerNorm(d, dtype=dtype)
        self.ffn2 = FeedForward(d, cfg.ffn_dim, rng, dropout, activation="swish", dtype=dtype)
        self.final_norm = LayerNorm(d, dtype=dtype)
        self.dropout = dropout
        if cfg.zero_init_residual:
            for layer in (self.ffn1.w2, self.attn.o, self.conv.pointwise_out, self.ffn2.w2):
                zero_linear(layer)

    def forward(self, x: Tensor, lengths) -> Tensor:
        x = F.add(x, F.mul(self.dropout(self.ffn1(self.ffn1_norm(x))), 0.5))
        x = F.add(x, self.dropout(self.attn(self.attn_norm(x), lengths)))
        x = F.add(x, self.dropout(self.conv(self.conv_norm(x), lengths)))
        x = F.add(x, F.mul(self.dropout(self.ffn2(self.ffn2_norm(x))), 0.5))
        return self.final_norm(x)


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------


class ConformerEncoder(Module):
    def __init__(self, cfg: "EncoderConfig", rng: Rng, dropout_rng: Rng, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.dropout = Dropout(cfg.dropout_p, dropout_rng)
        self.subsampling = Conv2dSubsampling(cfg.d_model, cfg.channels, rng, dtype=dtype)
        self.blocks = ModuleList(ConformerBlock(cfg, rng, self.dropout, dtype=dtype) for _ in range(cfg.num_layers))

    def forward(self, features, lengths) -> EncoderOutput:
        features = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=self.dtype))
        x, out_lengths = self.subsampling(features, np.asarray(lengths))
        x = self.dropout(x)
        for block in self.blocks:
            x = block(x, out_lengths)
        return EncoderOutput(x, out_lengths)

    def encode(self, batch: Sequence[FeatureMatrix]) -> EncoderOutput:
        features, lengths = pad_features(batch, dtype=self.dtype)
        return self.forward(features, lengths)
