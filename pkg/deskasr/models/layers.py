"""
Building blocks shared by the decoder and the stand-in LM: sinusoidal
positions, masks, multi-head attention and the position-wise feed-forward.
"""

from __future__ import annotations

import numpy as np

from ..numerics import functional as F
from ..numerics.nn import Dropout, Linear, Module
from ..numerics.rng import Rng
from ..numerics.tensor import Tensor
from .lora import LoraLinear


def sinusoid_table(positions, dim: int, dtype=np.float32) -> np.ndarray:
    """Rows of sin (even dims) / cos (odd dims) encodings for the given positions."""
    positions = np.asarray(positions, dtype=np.float64)[:, None]
    rates = np.exp(np.arange(0, dim, 2, dtype=np.float64) * (-np.log(10000.0) / dim))
    table = np.zeros((positions.shape[0], dim), dtype=np.float64)
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: dim // 2])
    return table.astype(dtype)


def causal_mask(steps: int) -> np.ndarray:
    """(steps, steps) boolean, True where the key lies in the future."""
    return np.triu(np.ones((steps, steps), dtype=bool), k=1)


def valid_mask(lengths, steps: int) -> np.ndarray:
    """(B, steps) boolean, True at positions inside each sequence."""
    return np.arange(steps)[None, :] < np.asarray(lengths)[:, None]


def key_padding_mask(lengths, steps: int) -> np.ndarray:
    """(B, 1, 1, steps) boolean, True at padded key positions."""
    return ~valid_mask(lengths, steps)[:, None, None, :]


def split_heads(x: Tensor, heads: int) -> Tensor:
    batch, steps, dim = x.shape
    return F.transpose(F.reshape(x, (batch, steps, heads, dim // heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    batch, heads, steps, dk = x.shape
    return F.reshape(F.transpose(x, (0, 2, 1, 3)), (batch, steps, heads * dk))


def zero_linear(layer: Linear) -> None:
    layer.weight.data[...] = 0.0
    if layer.bias is not None:
        layer.bias.data[...] = 0.0


class MultiHeadAttention(Module):
    """Scaled dot-product attention; optional LoRA on the query and value projections."""

    def __init__(self, d_model: int, num_heads: int, rng: Rng, dropout: Dropout,
                 lora_rank: int | None = None, lora_alpha: float = 16.0, dtype=np.float32):
        self.num_heads = num_heads
        self.q = Linear(d_model, d_model, rng, dtype=dtype)
        self.k = Linear(d_model, d_model, rng, dtype=dtype)
        self.v = Linear(d_model, d_model, rng, dtype=dtype)
        self.o = Linear(d_model, d_model, rng, dtype=dtype)
        if lora_rank is not None:
            self.q = LoraLinear(self.q, lora_rank, lora_alpha, rng)
            self.v = LoraLinear(self.v, lora_rank, lora_alpha, rng)
        self.dropout = dropout

    def forward(self, query: Tensor, memory: Tensor, blocked: np.ndarray | None = None) -> Tensor:
        q = split_heads(self.q(query), self.num_heads)
        k = split_heads(self.k(memory), self.num_heads)
        v = split_heads(self.v(memory), self.num_heads)
        scores = F.mul(F.matmul(q, F.swapaxes(k, -1, -2)), 1.0 / np.sqrt(q.shape[-1]))
        if blocked is not None:
            scores = F.masked_fill(scores, blocked, -np.inf)
        weights = self.dropout(F.softmax(scores, axis=-1))
        return self.o(merge_heads(F.matmul(weights, v)))


class FeedForward(Module):
    def __init__(self, d_model: int, hidden: int, rng: Rng, dropout: Dropout,
                 activation: str = "relu", dtype=np.float32):
        self.w1 = Linear(d_model, hidden, rng, dtype=dtype)
        self.w2 = Linear(hidden, d_model, rng, dtype=dtype)
        self.activation = F.swish if activation == "swish" else F.relu
        self.dropout = dropout

    def forward(self, x: Tensor) -> Tensor:
        return self.w2(self.dropout(self.activation(self.w1(x))))
