"""
Learning-rate schedule: linear warmup to the peak, then inverse-square-root
decay. The peak shrinks with model width so larger presets train with
smaller steps.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from ..config import OptimizerConfig


def peak_lr(cfg: "OptimizerConfig", d_model: int) -> float:
    """base_peak / sqrt(d_model / reference_d_model)."""
    return cfg.base_peak_lr / math.sqrt(d_model / cfg.reference_d_model)


def lr_schedule(step: int, cfg: "OptimizerConfig", d_model: int | None = None) -> float:
    """Learning rate at optimizer step `step` (1-based; step 0 gives 0)."""
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    if step == 0:
        return 0.0
    peak = peak_lr(cfg, d_model) if d_model is not None else cfg.base_peak_lr
    warmup = cfg.warmup_steps
    return peak * min(step / warmup, math.sqrt(warmup / step))
