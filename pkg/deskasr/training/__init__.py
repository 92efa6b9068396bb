from .batching import Example, TrainBatch, Utterance, collate, make_batches, read_manifest, write_manifest
from .regularization import RegScheduleState, RegStage, reg_controller_update
from .schedule import lr_schedule, peak_lr
from .trainer import Trainer, build_model, prepare_data, train_step_aed, train_step_llm

__all__ = [
    "Example",
    "RegScheduleState",
    "RegStage",
    "TrainBatch",
    "Trainer",
    "Utterance",
    "build_model",
    "collate",
    "lr_schedule",
    "make_batches",
    "peak_lr",
    "prepare_data",
    "read_manifest",
    "reg_controller_update",
    "train_step_aed",
    "train_step_llm",
    "write_manifest",
]
