"""
Adam with global gradient-norm clipping.
"""

from __future__ import annotations

import numpy as np

from .nn import Parameter


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most `max_norm`.

    Returns the norm measured before clipping.
    """
    params = list(params)
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = (p.grad * scale).astype(p.dtype)
    return norm


class Adam:
    """Adam over named parameters. Frozen parameters (requires_grad False) are never touched."""

    def __init__(
        self,
        named_params: list[tuple[str, Parameter]],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.98),
        eps: float = 1e-9,
        clip_norm: float = 5.0,
    ):
        self.named_params = [(n, p) for n, p in named_params if p.requires_grad]
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.named_params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.named_params}

    @property
    def params(self) -> list[Parameter]:
        return [p for _, p in self.named_params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> float:
        """Clip, then apply one update. Returns the pre-clip gradient norm."""
        lr = self.lr if lr is None else lr
        norm = clip_grad_norm(self.params, self.clip_norm)
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for name, p in self.named_params:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.data -= update.astype(p.dtype)
        return norm

    # -- persistence ------------------------------------------------------
    def state_dict(self) -> dict:
        tensors = {}
        for name in self.m:
            tensors[f"{name}.m"] = self.m[name].copy()
            tensors[f"{name}.v"] = self.v[name].copy()
        return {"step": self.step_count, "lr": self.lr, "tensors": tensors}

    def load_state_dict(self, state: dict) -> None:
        self.step_count = int(state["step"])
        self.lr = float(state.get("lr", self.lr))
        tensors = state["tensors"]
        for name in self.m:
            self.m[name][...] = tensors[f"{name}.m"]
            self.v[name][...] = tensors[f"{name}.v"]
