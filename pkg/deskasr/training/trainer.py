"""
Training loop shared by both model kinds.

One Trainer owns one model. Each step: schedule the learning rate, compute
the masked cross-entropy, abort on a non-finite loss, backpropagate, clip and
update. After every epoch the validation loss and CER feed the progressive
regularization controller, and a checkpoint is written. Runs resume at epoch
boundaries with bit-identical continuation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ..checkpoint import Checkpoint, read_checkpoint, save_checkpoint
from ..errors import CheckpointError, ConfigError, DataError, NumericalFailure
from ..frontend import CmvnStats, apply_cmvn, fit_cmvn
from ..models import get_model_class
from ..numerics.optim import Adam
from ..numerics.rng import Rng
from ..scoring import corpus_error_rate
from ..tokenizer import Tokenizer
from ..utils.logger import get_train_logger
from ..utils.metrics import MetricsTracker
from .batching import Example, TrainBatch, collate, load_examples, make_batches, read_manifest
from .regularization import RegScheduleState, RegStage, initial_state, reg_controller_update, stages_from_config
from .schedule import lr_schedule

if TYPE_CHECKING:
    from ..config import RunConfig
    from ..models.aed_decoder import AedModel
    from ..models.base import AsrModel
    from ..models.llm_stack import LlmAsrModel

STEP_LOG = "train_steps.tsv"
EVAL_LOG = "eval.tsv"
FINAL_CHECKPOINT = "final.ckpt"


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------


def _train_step(batch: TrainBatch, model: "AsrModel", opt: Adam, lr: float | None = None) -> float:
    model.train()
    opt.zero_grad()
    loss = model.loss(batch)
    value = loss.item()
    if not math.isfinite(value):
        raise NumericalFailure(
            f"non-finite loss {value} on batch {list(batch.utt_ids)}",
            state={"loss": repr(value), "utt_ids": list(batch.utt_ids), "optimizer_step": opt.step_count,
                   "lr": lr},
        )
    loss.backward()
    opt.step(lr)
    return value


def train_step_aed(batch: TrainBatch, model: "AedModel", opt: Adam, lr: float | None = None) -> float:
    """Teacher-forced cross-entropy over every target position, then one clipped update."""
    return _train_step(batch, model, opt, lr)


def train_step_llm(batch: TrainBatch, model: "LlmAsrModel", opt: Adam, lr: float | None = None) -> float:
    """Cross-entropy over transcript positions only; the optimizer only holds trainable weights."""
    return _train_step(batch, model, opt, lr)


_STEP_FNS = {"aed": train_step_aed, "llm": train_step_llm}


# ---------------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------------


@dataclass
class RunData:
    tokenizer: Tokenizer
    cmvn: CmvnStats
    train: list[Example]
    valid: list[Example]


def tokenizer_corpus(config: "RunConfig", transcripts: Sequence[str]) -> list[str]:
    corpus = list(transcripts)
    if config.kind == "llm":
        corpus.append(config.llm.prompt_text)
    return corpus


def prepare_data(config: "RunConfig", tokenizer: Tokenizer | None = None, cmvn: CmvnStats | None = None) -> RunData:
    """Read manifests, train the tokenizer and fit CMVN unless they are given."""
    if not config.data.train_manifest:
        raise ConfigError("a training manifest is required", field="data.train_manifest")
    for name in ("train_manifest", "valid_manifest"):
        value = getattr(config.data, name)
        if value and not Path(value).is_file():
            raise ConfigError(f"file not found: {value}", field=f"data.{name}")
    train_utts = read_manifest(config.data.train_manifest)
    if not train_utts:
        raise DataError(f"training manifest {config.data.train_manifest} is empty")
    valid_utts = read_manifest(config.data.valid_manifest) if config.data.valid_manifest else []

    if tokenizer is None:
        tokenizer = Tokenizer.train(tokenizer_corpus(config, [u.transcript for u in train_utts]),
                                    config.data.num_merges)
    raw_train = load_examples(train_utts, tokenizer, None)
    raw_valid = load_examples(valid_utts, tokenizer, None)
    if cmvn is None:
        cmvn = fit_cmvn([ex.features for ex in raw_train])

    def normalise(examples: list[Example]) -> list[Example]:
        return [replace(ex, features=apply_cmvn(ex.features, cmvn)) for ex in examples]

    return RunData(tokenizer, cmvn, normalise(raw_train), normalise(raw_valid))


def build_model(config: "RunConfig", tokenizer: Tokenizer) -> "AsrModel":
    """Fresh model for `config`, warm-starting the LLM encoder from an AED checkpoint when configured."""
    model = get_model_class(config.kind).build(config, tokenizer)
    source = config.llm.init_encoder_from if config.kind == "llm" else None
    if source:
        ckpt = read_checkpoint(source)
        if ckpt.config.kind != "aed":
            raise CheckpointError(f"{source} holds a '{ckpt.config.kind}' model; an AED checkpoint is required")
        model.init_encoder_from(ckpt.model_tensors)
    return model


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------


@dataclass
class TrainerState:
    epoch: int = 0  # completed epochs
    step: int = 0  # completed optimizer steps
    reg: RegScheduleState = field(default_factory=RegScheduleState)
    history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "step": self.step, "reg": self.reg.to_dict(), "history": self.history}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainerState":
        return cls(int(data["epoch"]), int(data["step"]), RegScheduleState.from_dict(data["reg"]),
                   [float(v) for v in data.get("history", [])])


@dataclass(frozen=True)
class EvalResult:
    valid_loss: float
    valid_cer: float


class Trainer:
    def __init__(
        self,
        config: "RunConfig",
        model: "AsrModel",
        data: RunData,
        output_dir: str | Path | None = None,
    ):
        self.config = config
        self.model = model
        self.data = data
        self.output_dir = Path(output_dir or config.train.output_dir)
        self.logger = get_train_logger()
        opt_cfg = config.optimizer
        self.opt = Adam(
            model.trainable_parameters(),
            lr=opt_cfg.base_peak_lr,
            betas=(opt_cfg.beta1, opt_cfg.beta2),
            eps=opt_cfg.eps,
            clip_norm=opt_cfg.clip_norm,
        )
        self.stages: list[RegStage] = stages_from_config(config.regularization)
        self.state = TrainerState(reg=initial_state(config.regularization))
        self.data_rng = Rng(config.seed).spawn("data")
        self.step_fn = _STEP_FNS[model.kind]
        self.prompt_ids = tuple(model.prompt.ids) if model.kind == "llm" else ()

    # -- helpers ----------------------------------------------------------
    @property
    def stage(self) -> RegStage:
        return self.stages[self.state.reg.current_stage]

    @property
    def dtype(self) -> np.dtype:
        return self.config.np_dtype

    def current_lr(self) -> float:
        return lr_schedule(self.state.step + 1, self.config.optimizer, self.config.encoder.d_model)

    def epoch_batches(self, epoch: int) -> list[TrainBatch]:
        """Batches of one epoch; depends only on the seed, the epoch and the stage."""
        return make_batches(
            self.data.train,
            self.config.data.frame_budget,
            self.data_rng.spawn(epoch),
            policy=self.stage.specaugment,
            dtype=self.dtype,
            prompt_ids=self.prompt_ids,
        )

    def _append(self, name: str, header: str, row: str) -> None:
        path = self.output_dir / name
        new = not path.exists()
        with open(path, "a", encoding="utf-8") as fh:
            if new:
                fh.write(header + "\n")
            fh.write(row + "\n")

    def _dump_failure(self, exc: NumericalFailure) -> None:
        exc.state.update({"epoch": self.state.epoch, "step": self.state.step, "stage": self.stage.stage_index})
        path = self.output_dir / "numerical_failure.json"
        path.write_text(json.dumps(exc.state, indent=2, default=str), encoding="utf-8")
        self.logger.error("Non-finite loss, training aborted", extra={"context": exc.state})

    # -- training ---------------------------------------------------------
    def step(self, batch: TrainBatch) -> float:
        lr = self.current_lr()
        self.model.set_dropout(self.stage.dropout_p)
        with MetricsTracker(self.logger, "train_step", level_ok="debug") as tracker:
            loss = self.step_fn(batch, self.model, self.opt, lr)
            tracker.record(step=self.state.step + 1, loss=loss, lr=lr, utterances=batch.size)
        self.state.step += 1
        self.state.history.append(loss)
        self._append(STEP_LOG, "step\tstage\tlr\tloss",
                     f"{self.state.step}\t{self.stage.stage_index}\t{lr:.8g}\t{loss:.8g}")
        return loss

    def evaluate(self, examples: Sequence[Example] | None = None) -> EvalResult:
        """Loss (mean over batches, weighted by masked positions) and CER on `examples`."""
        examples = list(examples if examples is not None else (self.data.valid or self.data.train))
        self.model.eval()
        total, weight = 0.0, 0.0
        for start in range(0, len(examples), 8):
            batch = collate(examples[start : start + 8], dtype=self.dtype, prompt_ids=self.prompt_ids)
            n = float(batch.loss_mask().sum())
            total += self.model.loss(batch).item() * n
            weight += n
        decode = self.config.decode
        hyps = self.model.transcribe([ex.features for ex in examples], beam=decode.beam,
                                     max_len=decode.max_len, length_penalty=decode.length_penalty)
        texts = [self.data.tokenizer.decode(h.output_ids()) for h in hyps]
        cer = corpus_error_rate([ex.transcript for ex in examples], texts, unit="char")
        self.model.train()
        return EvalResult(total / weight, cer)

    def run(self) -> TrainerState:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        train_cfg = self.config.train
        max_steps = train_cfg.max_steps
        try:
            while self.state.epoch < train_cfg.epochs:
                epoch = self.state.epoch
                for batch in self.epoch_batches(epoch):
                    self.step(batch)
                    if max_steps is not None and self.state.step >= max_steps:
                        break
                result = self.end_epoch()
                if max_steps is not None and self.state.step >= max_steps:
                    break
                if train_cfg.stop_at_zero_cer and result.valid_cer == 0.0:
                    self.logger.info("Validation CER reached 0, stopping", extra={"metrics": {"epoch": epoch}})
                    break
        except NumericalFailure as exc:
            self._dump_failure(exc)
            raise
        self.save(self.output_dir / FINAL_CHECKPOINT)
        return self.state

    def end_epoch(self) -> EvalResult:
        with MetricsTracker(self.logger, "epoch_eval", context={"epoch": self.state.epoch}) as tracker:
            result = self.evaluate()
            self.state.reg = reg_controller_update(self.state.reg, result.valid_loss)
            tracker.record(valid_loss=result.valid_loss, valid_cer=result.valid_cer,
                           stage=self.state.reg.current_stage)
        self.state.epoch += 1
        self._append(
            EVAL_LOG,
            "epoch\tstep\tstage\tvalid_loss\tvalid_cer",
            f"{self.state.epoch}\t{self.state.step}\t{self.state.reg.current_stage}\t"
            f"{result.valid_loss:.8g}\t{result.valid_cer:.4f}",
        )
        if self.state.epoch % self.config.train.checkpoint_every_epochs == 0:
            self.save(self.output_dir / f"epoch{self.state.epoch:04d}.ckpt")
        return result

    # -- persistence ------------------------------------------------------
    def save(self, path: str | Path) -> Path:
        return save_checkpoint(
            path,
            self.model,
            self.data.tokenizer,
            self.data.cmvn,
            rng_state={"dropout": self.model.dropout_rng.get_state()},
            trainer_state=self.state.to_dict(),
            optimizer=self.opt,
        )

    def restore(self, checkpoint: Checkpoint) -> None:
        """Continue from an epoch-boundary checkpoint of the same run."""
        self.model.load_state_dict(checkpoint.model_tensors, strict=True)
        if checkpoint.optimizer_state is not None:
            self.opt.load_state_dict(checkpoint.optimizer_state)
        if checkpoint.rng_state and "dropout" in checkpoint.rng_state:
            self.model.dropout_rng.set_state(checkpoint.rng_state["dropout"])
        if checkpoint.trainer_state is not None:
            self.state = TrainerState.from_dict(checkpoint.trainer_state)
        self.logger.info("Resumed training", extra={"metrics": {"epoch": self.state.epoch, "step": self.state.step}})
