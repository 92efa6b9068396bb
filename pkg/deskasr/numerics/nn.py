"""
Parameter containers and the handful of layers the models are built from.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import ShapeError
from . import functional as F
from .rng import Rng
from .tensor import Tensor


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data, requires_grad: bool = True, name: str | None = None):
        super().__init__(data, requires_grad=requires_grad, name=name)


def xavier_uniform(rng: Rng, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape, dtype=dtype)


class Module:
    """Base class for layers: parameter discovery, mode switching and state."""

    training: bool = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # -- traversal --------------------------------------------------------
    def named_children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.named_children():
            yield from child.modules()

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        """All parameters in registration order; a shared parameter is listed once."""
        seen: set[int] = set()
        found: list[tuple[str, Parameter]] = []
        self._collect(prefix, seen, found)
        return found

    def _collect(self, prefix: str, seen: set[int], found: list) -> None:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                if id(value) not in seen:
                    seen.add(id(value))
                    found.append((full, value))
            elif isinstance(value, Module):
                value._collect(full + ".", seen, found)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self, trainable_only: bool = False) -> int:
        return int(sum(p.size for p in self.parameters() if p.requires_grad or not trainable_only))

    # -- modes ------------------------------------------------------------
    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def set_dropout(self, p: float) -> None:
        for m in self.modules():
            if isinstance(m, Dropout):
                m.p = p

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag: bool) -> "Module":
        for p in self.parameters():
            p.requires_grad = flag
        return self

    # -- state ------------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> list[str]:
        """Copy arrays into parameters in place; returns the names that were loaded."""
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        loaded = []
        for name, value in state.items():
            if name not in own:
                continue
            param = own[name]
            value = np.asarray(value)
            if value.shape != param.shape:
                raise ShapeError(f"parameter '{name}': expected shape {param.shape}, got {value.shape}")
            param.data[...] = value.astype(param.dtype)
            loaded.append(name)
        return loaded

    def to(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class ModuleList(Module):
    def __init__(self, modules):
        self._items = list(modules)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def named_children(self):
        for i, m in enumerate(self._items):
            yield str(i), m

    def _collect(self, prefix, seen, found):
        for i, m in enumerate(self._items):
            m._collect(f"{prefix}{i}.", seen, found)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: Rng, bias: bool = True, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(xavier_uniform(rng, in_features, out_features, (out_features, in_features), dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"Linear: input {x.shape} does not end in {self.in_features} features")
        return F.linear(x, self.weight, self.bias)


class PointwiseConv1d(Linear):
    """Kernel-1 convolution over (B, T, C); weight is (C_out, C_in)."""

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d_pointwise(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        self.eps = eps
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    """Token table initialised from normal(0, dim^-0.5)."""

    def __init__(self, num_embeddings: int, dim: int, rng: Rng, dtype=np.float32):
        self.weight = Parameter(rng.normal(0.0, dim**-0.5, size=(num_embeddings, dim), dtype=dtype))

    def forward(self, ids) -> Tensor:
        return F.embedding(self.weight, ids)


class Dropout(Module):
    def __init__(self, p: float, rng: Rng):
        self.p = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return F.dropout(x, self.p, self.rng, training=self.training)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: Rng,
                 stride: int = 1, padding: int = 0, dtype=np.float32):
        self.stride = stride
        self.padding = padding
        fan_in, fan_out = in_channels * kernel * kernel, out_channels * kernel * kernel
        self.weight = Parameter(
            xavier_uniform(rng, fan_in, fan_out, (out_channels, in_channels, kernel, kernel), dtype)
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class DepthwiseConv1d(Module):
    def __init__(self, channels: int, kernel: int, rng: Rng, dtype=np.float32):
        self.weight = Parameter(xavier_uniform(rng, kernel, kernel, (channels, kernel), dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d_depthwise(x, self.weight, self.bias)
