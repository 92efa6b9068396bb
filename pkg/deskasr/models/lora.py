"""
Low-rank adapters around a frozen Linear layer.

effective weight = W + (alpha / r) * B @ A, with A (r x in) random and B
(out x r) zero at start, so a fresh adapter leaves the base output unchanged.
"""

from __future__ import annotations

import numpy as np

from ..numerics import functional as F
from ..numerics.nn import Linear, Module, Parameter, xavier_uniform
from ..numerics.rng import Rng
from ..numerics.tensor import Tensor


class LoraLinear(Module):
    def __init__(self, base: Linear, rank: int, alpha: float, rng: Rng):
        if rank < 1:
            raise ValueError(f"LoRA rank must be at least 1, got {rank}")
        self.base = base
        self.rank = rank
        self.scaling = alpha / rank
        dtype = base.weight.dtype
        self.lora_A = Parameter(xavier_uniform(rng, base.in_features, rank, (rank, base.in_features), dtype))
        self.lora_B = Parameter(np.zeros((base.out_features, rank), dtype=dtype))
        self.enabled = True
        self._unmerged_weight: np.ndarray | None = None
        self.freeze_base()

    @property
    def in_features(self) -> int:
        return self.base.in_features

    @property
    def out_features(self) -> int:
        return self.base.out_features

    @property
    def merged(self) -> bool:
        return self._unmerged_weight is not None

    def freeze_base(self) -> None:
        self.base.weight.requires_grad = False
        if self.base.bias is not None:
            self.base.bias.requires_grad = False

    def delta_weight(self) -> np.ndarray:
        return self.scaling * (self.lora_B.data @ self.lora_A.data)

    def forward(self, x: Tensor) -> Tensor:
        out = self.base(x)
        if not self.enabled or self.merged:
            return out
        low_rank = F.matmul(F.matmul(x, F.swapaxes(self.lora_A, 0, 1)), F.swapaxes(self.lora_B, 0, 1))
        return F.add(out, F.mul(low_rank, self.scaling))

    def merge(self) -> None:
        """Fold the adapter into the base weight; `unmerge` restores the exact original."""
        if self.merged:
            return
        self._unmerged_weight = self.base.weight.data.copy()
        self.base.weight.data[...] = (self.base.weight.data + self.delta_weight()).astype(self.base.weight.dtype)

    def unmerge(self) -> None:
        if not self.merged:
            return
        self.base.weight.data[...] = self._unmerged_weight
        self._unmerged_weight = None


def lora_layers(module: Module) -> list[LoraLinear]:
    return [m for m in module.modules() if isinstance(m, LoraLinear)]


def set_lora_enabled(module: Module, enabled: bool) -> None:
    for layer in lora_layers(module):
        layer.enabled = enabled


def merge_lora(module: Module) -> None:
    for layer in lora_layers(module):
        layer.merge()


def unmerge_lora(module: Module) -> None:
    for layer in lora_layers(module):
        layer.unmerge()
