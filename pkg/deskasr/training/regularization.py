"""
Progressive regularization: train without dropout or SpecAugment first and
step up to stronger settings whenever validation loss stops improving for
`patience` consecutive evaluations. The stage index never goes back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

from ..frontend import SpecAugmentPolicy

if TYPE_CHECKING:
    from ..config import RegularizationConfig


@dataclass(frozen=True)
class RegStage:
    stage_index: int
    dropout_p: float
    specaugment: SpecAugmentPolicy


@dataclass(frozen=True)
class RegScheduleState:
    current_stage: int = 0
    best_validation_loss: float = math.inf
    epochs_since_improvement: int = 0
    patience: int = 2
    num_stages: int = 1

    @property
    def at_final_stage(self) -> bool:
        return self.current_stage >= self.num_stages - 1

    def to_dict(self) -> dict:
        return {
            "current_stage": self.current_stage,
            "best_validation_loss": None if math.isinf(self.best_validation_loss) else self.best_validation_loss,
            "epochs_since_improvement": self.epochs_since_improvement,
            "patience": self.patience,
            "num_stages": self.num_stages,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegScheduleState":
        best = data.get("best_validation_loss")
        return cls(
            current_stage=int(data["current_stage"]),
            best_validation_loss=math.inf if best is None else float(best),
            epochs_since_improvement=int(data["epochs_since_improvement"]),
            patience=int(data["patience"]),
            num_stages=int(data["num_stages"]),
        )


def stages_from_config(cfg: "RegularizationConfig") -> list[RegStage]:
    return [RegStage(i, s.dropout_p, s.specaugment.to_policy()) for i, s in enumerate(cfg.stages)]


def initial_state(cfg: "RegularizationConfig") -> RegScheduleState:
    return RegScheduleState(patience=cfg.patience, num_stages=len(cfg.stages))


def reg_controller_update(state: RegScheduleState, validation_loss: float) -> RegScheduleState:
    """Fold one validation loss into the controller state.

    An improvement is a strictly lower loss than the best seen so far. After
    `patience` evaluations without one, the stage advances by one and the
    counter resets; at the final stage only the counter resets.
    """
    if validation_loss < state.best_validation_loss:
        return replace(state, best_validation_loss=validation_loss, epochs_since_improvement=0)
    waited = state.epochs_since_improvement + 1
    if waited < state.patience:
        return replace(state, epochs_since_improvement=waited)
    next_stage = state.current_stage if state.at_final_stage else state.current_stage + 1
    return replace(state, current_stage=next_stage, epochs_since_improvement=0)
