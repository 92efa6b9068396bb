"""
Differentiable operations on Tensors.

Each op computes its forward value with NumPy and, when any input requires a
gradient, attaches a closure that maps the output gradient to one gradient per
input. Broadcasting is restricted to the bias-add pattern: one operand must
already have the result shape.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import ShapeError
from .tensor import Tensor

# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if like is not None:
        return Tensor(np.asarray(x, dtype=like.dtype))
    return Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    if not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)


def _result_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None
    if shape != a.shape and shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} would both need broadcasting")
    return shape


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, like=a)
    b = _as_tensor(b)
    return _as_tensor(a, like=b), b


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _binary(a, b)
    _result_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _binary(a, b)
    _result_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _binary(a, b)
    _result_shape(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _binary(a, b)
    _result_shape(a, b, "div")

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _make(a.data / b.data, (a, b), backward)


def neg(x: Tensor) -> Tensor:
    return mul(x, -1.0)


def pow(x: Tensor, exponent: float) -> Tensor:
    def backward(g):
        return (g * exponent * x.data ** (exponent - 1),)

    return _make(x.data**exponent, (x,), backward)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return _make(out, (x,), backward)


def log(x: Tensor) -> Tensor:
    def backward(g):
        return (g / x.data,)

    return _make(np.log(x.data), (x,), backward)


# ---------------------------------------------------------------------------
# linear algebra and reductions
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes.

    Leading axes broadcast the NumPy way; gradients are summed back to each
    operand's own shape.
    """
    a, b = _binary(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight.T + bias, with weight stored as (out_features, in_features)."""
    out = matmul(x, swapaxes(weight, -1, -2))
    return add(out, bias) if bias is not None else out


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _make(np.asarray(out, dtype=x.dtype), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / max(count, 1))


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {tuple(shape)}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return _make(out, (x,), backward)


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return _make(x.data.transpose(axes), (x,), backward)


def swapaxes(x: Tensor, axis1: int, axis2: int) -> Tensor:
    def backward(g):
        return (np.swapaxes(g, axis1, axis2),)

    return _make(np.swapaxes(x.data, axis1, axis2), (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat: shapes {shapes} differ off axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else len(shape) + 1 + axis, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


def getitem(x: Tensor, key) -> Tensor:
    out = x.data[key]

    def backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, key, g)
        return (grad,)

    return _make(np.array(out, dtype=x.dtype, copy=True), (x,), backward)


def pad(x: Tensor, pad_width, value: float = 0.0) -> Tensor:
    pad_width = [tuple(p) for p in pad_width]
    out = np.pad(x.data, pad_width, mode="constant", constant_values=value)
    crop = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, x.shape))

    def backward(g):
        return (g[crop],)

    return _make(out, (x,), backward)


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where `mask` is true; mask broadcasts to x's shape."""
    mask = np.asarray(mask, dtype=bool)
    if np.broadcast_shapes(mask.shape, x.shape) != x.shape:
        raise ShapeError(f"masked_fill: mask shape {mask.shape} does not fit {x.shape}")

    def backward(g):
        return (np.where(mask, 0.0, g).astype(g.dtype),)

    return _make(np.where(mask, value, x.data).astype(x.dtype), (x,), backward)


# ---------------------------------------------------------------------------
# activations and normalisation
# ---------------------------------------------------------------------------


def _check_axis(x: Tensor, axis: int, op: str) -> None:
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError(f"{op}: empty axis {axis} in shape {x.shape}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis, "log_softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply the optional affine pair."""
    d = x.shape[-1]
    for p in (gamma, beta):
        if p is not None and p.shape != (d,):
            raise ShapeError(f"layer_norm: parameter shape {p.shape} does not match features {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    rstd = 1.0 / np.sqrt((centred * centred).mean(axis=-1, keepdims=True) + eps)
    xhat = centred * rstd
    out = xhat
    if gamma is not None:
        out = out * gamma.data
    if beta is not None:
        out = out + beta.data
    parents = [x] + [p for p in (gamma, beta) if p is not None]
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gxhat = g * gamma.data if gamma is not None else g
        gx = rstd * (
            gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [gx]
        if gamma is not None:
            grads.append((g * xhat).sum(axis=lead))
        if beta is not None:
            grads.append(g.sum(axis=lead))
        return grads

    return _make(out.astype(x.dtype), parents, backward)


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0

    def backward(g):
        return (g * positive,)

    return _make(np.where(positive, x.data, 0.0).astype(x.dtype), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), backward)


def swish(x: Tensor) -> Tensor:
    s = expit(x.data)

    def backward(g):
        return (g * (s + x.data * s * (1.0 - s)),)

    return _make(x.data * s, (x,), backward)


def glu(x: Tensor, axis: int = -1) -> Tensor:
    """First half of `axis` gated by the sigmoid of the second half."""
    n = x.shape[axis]
    if n % 2:
        raise ShapeError(f"glu: axis {axis} of shape {x.shape} has odd size")
    value, gate = np.split(x.data, 2, axis=axis)
    s = expit(gate)

    def backward(g):
        return (np.concatenate([g * s, g * value * s * (1.0 - s)], axis=axis),)

    return _make(value * s, (x,), backward)


def dropout(x: Tensor, p: float, rng, training: bool = True) -> Tensor:
    """Inverted dropout; `rng` is any object with a NumPy-style random(size, dtype)."""
    if not training or p <= 0.0:
        return x
    if p >= 1.0:
        return mul(x, 0.0)
    keep = (rng.random(x.shape, dtype=x.dtype) >= p).astype(x.dtype) / (1.0 - p)

    def backward(g):
        return (g * keep,)

    return _make(x.data * keep, (x,), backward)


# ---------------------------------------------------------------------------
# indexing ops
# ---------------------------------------------------------------------------


def embedding(weight: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    vocab = weight.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise ShapeError(f"embedding: ids outside [0, {vocab}) for table shape {weight.shape}")

    def backward(g):
        grad = np.zeros_like(weight.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return _make(weight.data[ids], (weight,), backward)


def gather_last(x: Tensor, index) -> Tensor:
    """out[..., j] = x[..., index[..., j]]; `index` broadcasts over leading axes."""
    index = np.asarray(index, dtype=np.int64)
    target = x.shape[:-1] + index.shape[-1:]
    try:
        index = np.broadcast_to(index, target)
    except ValueError:
        raise ShapeError(f"gather_last: index shape {index.shape} does not fit {x.shape}") from None
    out = np.take_along_axis(x.data, index, axis=-1)

    def backward(g):
        grad = np.zeros_like(x.data)
        lead = np.indices(index.shape, sparse=True)[:-1]
        np.add.at(grad, (*lead, index), g)
        return (grad,)

    return _make(out, (x,), backward)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------


def conv1d_depthwise(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-channel 1-D convolution over time.

    x is (B, T, C), weight is (C, K) with K odd; zero padding keeps length T.
    """
    if x.ndim != 3 or weight.ndim != 2 or weight.shape[0] != x.shape[2]:
        raise ShapeError(f"conv1d_depthwise: input {x.shape} does not match kernel {weight.shape}")
    k = weight.shape[1]
    if k % 2 == 0:
        raise ShapeError(f"conv1d_depthwise: kernel width {k} must be odd")
    half = k // 2
    steps = x.shape[1]
    padded = np.pad(x.data, ((0, 0), (half, half), (0, 0)))
    windows = sliding_window_view(padded, k, axis=1)  # (B, T, C, K)
    out = np.einsum("btck,ck->btc", windows, weight.data)
    if bias is not None:
        out = out + bias.data
    parents = [x, weight] + ([bias] if bias is not None else [])

    def backward(g):
        gpad = np.zeros_like(padded)
        for j in range(k):
            gpad[:, j : j + steps, :] += g * weight.data[:, j]
        grads = [gpad[:, half : half + steps, :], np.einsum("btck,btc->ck", windows, g)]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1)))
        return grads

    return _make(out.astype(x.dtype), parents, backward)


def conv1d_pointwise(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Kernel-1 convolution over (B, T, C_in) with weight (C_out, C_in)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"conv1d_pointwise: input {x.shape} does not match kernel {weight.shape}")
    return linear(x, weight, bias)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution. x is (B, C_in, H, W), weight (C_out, C_in, kh, kw)."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} does not match kernel {weight.shape}")
    kh, kw = weight.shape[2:]
    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if padded.shape[2] < kh or padded.shape[3] < kw:
        raise ShapeError(f"conv2d: input {x.shape} is smaller than kernel {weight.shape}")
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.einsum("bchwij,ocij->bohw", windows, weight.data)
    if bias is not None:
        out = out + bias.data[:, None, None]
    parents = [x, weight] + ([bias] if bias is not None else [])

    def backward(g):
        gwin = np.einsum("bohw,ocij->bchwij", g, weight.data)
        gpad = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                gpad[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += gwin[..., i, j]
        h, w = x.shape[2:]
        grads = [
            gpad[:, :, padding : padding + h, padding : padding + w],
            np.einsum("bchwij,bohw->ocij", windows, g),
        ]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return _make(out.astype(x.dtype), parents, backward)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean negative log-likelihood over positions where `mask` is 1.

    logits is (..., V), targets and mask are (...). An all-zero mask yields a
    loss of 0 with zero gradients.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} do not match targets {targets.shape}")
    weights = np.ones(targets.shape, dtype=logits.dtype) if mask is None else np.asarray(mask, dtype=logits.dtype)
    if weights.shape != targets.shape:
        raise ShapeError(f"cross_entropy: mask {weights.shape} does not match targets {targets.shape}")
    denom = float(weights.sum())
    if denom == 0.0:
        return _make(np.zeros((), dtype=logits.dtype), (logits,), lambda g: (np.zeros_like(logits.data),))

    safe_targets = np.where(weights > 0, targets, 0)
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(log_probs, safe_targets[..., None], axis=-1)[..., 0]
    loss = -(picked * weights).sum() / denom

    def backward(g):
        grad = np.exp(log_probs)
        np.put_along_axis(grad, safe_targets[..., None], np.take_along_axis(grad, safe_targets[..., None], -1) - 1.0, -1)
        return (grad * (weights / denom)[..., None] * g,)

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), backward)
