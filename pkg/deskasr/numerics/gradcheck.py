"""
Central finite-difference gradient checking.

The output of `fn` is reduced to a scalar with a fixed random projection so
every output element contributes; analytic gradients from `backward()` are then
compared with (f(x+h) - f(x-h)) / 2h for each checked input element.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class GradcheckResult:
    """Worst relative error over elements whose absolute error exceeds `atol`.

    Elements that agree to within `atol` are counted as exact so that true
    zeros (masked positions, dead ReLUs) do not turn into relative noise.
    """

    max_rel_error: float
    max_abs_error: float
    checked: int
    worst: str

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    seed: int = 0,
    max_checks: int | None = None,
    atol: float = 1e-8,
) -> GradcheckResult:
    """Compare analytic and numeric gradients of `fn()` w.r.t. `inputs`.

    `fn` must read the inputs by reference (perturbations are made in place)
    and be deterministic. Inputs should be float64. `max_checks` bounds the
    number of sampled elements per input.
    """
    picker = np.random.default_rng(seed)
    out = fn()
    projection = np.asarray(picker.standard_normal(out.shape), dtype=np.float64)

    def objective() -> float:
        return float(np.sum(fn().data.astype(np.float64) * projection))

    for x in inputs:
        x.grad = None
    scalar = (out * Tensor(projection.astype(out.dtype))).sum()
    scalar.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    worst_rel, worst_abs, worst_at, checked = 0.0, 0.0, "", 0
    for k, x in enumerate(inputs):
        flat_indices = np.arange(x.size)
        if max_checks is not None and x.size > max_checks:
            flat_indices = picker.choice(x.size, size=max_checks, replace=False)
        for flat in flat_indices:
            idx = np.unravel_index(int(flat), x.shape)
            original = x.data[idx]
            x.data[idx] = original + eps
            plus = objective()
            x.data[idx] = original - eps
            minus = objective()
            x.data[idx] = original
            numeric = (plus - minus) / (2.0 * eps)
            grad = float(analytic[k][idx])
            abs_err = abs(grad - numeric)
            checked += 1
            worst_abs = max(worst_abs, abs_err)
            if abs_err <= atol:
                continue
            rel = relative_error(grad, numeric)
            if rel > worst_rel:
                worst_rel, worst_at = rel, f"input {k} at {tuple(int(i) for i in idx)}"
    return GradcheckResult(worst_rel, worst_abs, checked, worst_at)
