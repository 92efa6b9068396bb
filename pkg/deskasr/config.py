"""
Run configuration (JSON, validated with pydantic) and process settings (.env).

Every field has a default and unknown keys are rejected. Model sizes come from
one core preset table expanded two ways: desk-scale widths that are actually
allocated, and full-scale widths used only for parameter accounting.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .frontend import SpecAugmentPolicy
from .models.prompts import PROMPT_TEXT
from .tokenizer import FULL_SCALE_VOCAB_SIZE

# ---------------------------------------------------------------------------
# Process settings from the environment
# ---------------------------------------------------------------------------


def load_environment() -> str | None:
    """Load .env from the working directory or its parent; returns the path used."""
    env_path = os.path.join(os.getcwd(), ".env")
    if not os.path.exists(env_path):
        env_path = os.path.join(os.path.dirname(os.getcwd()), ".env")
    if not os.path.exists(env_path):
        return None
    load_dotenv(dotenv_path=env_path)
    return env_path


@dataclass(frozen=True)
class Settings:
    log_level: str
    decode_workers: int
    dtype: str


def get_settings() -> Settings:
    dtype = os.getenv("DESKASR_DTYPE", "float32").lower()
    if dtype not in ("float32", "float64"):
        raise ConfigError(f"DESKASR_DTYPE must be float32 or float64, got '{dtype}'", field="DESKASR_DTYPE")
    try:
        workers = int(os.getenv("DESKASR_DECODE_WORKERS", "4"))
    except ValueError:
        raise ConfigError("DESKASR_DECODE_WORKERS must be an integer", field="DESKASR_DECODE_WORKERS") from None
    return Settings(
        log_level=os.getenv("DESKASR_LOG_LEVEL", "INFO").upper(),
        decode_workers=max(1, workers),
        dtype=dtype,
    )


# ---------------------------------------------------------------------------
# Module configs
# ---------------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EncoderConfig(_Strict):
    d_model: int = Field(64, gt=0)
    num_layers: int = Field(2, ge=1)
    num_heads: int = Field(2, ge=1)
    ffn_expansion: float = Field(4.0, gt=0)
    conv_kernel: int = Field(33, ge=1)
    dropout_p: float = Field(0.0, ge=0.0, lt=1.0)
    max_relative_distance: int = Field(256, ge=1)
    # (first conv, second conv) output channels; null means (d_model/4, d_model/2)
    subsample_channels: tuple[int, int] | None = None
    zero_init_residual: bool = False

    @model_validator(mode="after")
    def _check_shape(self):
        if self.d_model % self.num_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by num_heads {self.num_heads}")
        if self.conv_kernel % 2 == 0:
            raise ValueError(f"conv_kernel must be odd, got {self.conv_kernel}")
        return self

    @property
    def channels(self) -> tuple[int, int]:
        if self.subsample_channels is not None:
            return self.subsample_channels
        return max(1, self.d_model // 4), max(1, self.d_model // 2)

    @property
    def ffn_dim(self) -> int:
        return int(round(self.d_model * self.ffn_expansion))


class DecoderConfig(_Strict):
    d_model: int = Field(64, gt=0)
    num_layers: int = Field(2, ge=1)
    num_heads: int = Field(2, ge=1)
    ffn_expansion: float = Field(4.0, gt=0)
    dropout_p: float = Field(0.0, ge=0.0, lt=1.0)
    # 0 means "size of the trained tokenizer"
    vocab_size: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_heads(self):
        if self.d_model % self.num_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by num_heads {self.num_heads}")
        return self

    @property
    def ffn_dim(self) -> int:
        return int(round(self.d_model * self.ffn_expansion))


class AdapterConfig(_Strict):
    splice_factor: int = Field(2, ge=1)
    # null means 2 x encoder d_model
    hidden_dim: int | None = Field(None, gt=0)


class LoraConfig(_Strict):
    rank: int = Field(8, ge=1)
    alpha: float = Field(16.0, gt=0)

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank


class LmConfig(_Strict):
    d_model: int = Field(64, gt=0)
    num_layers: int = Field(2, ge=1)
    num_heads: int = Field(2, ge=1)
    ffn_expansion: float = Field(4.0, gt=0)
    vocab_size: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_heads(self):
        if self.d_model % self.num_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by num_heads {self.num_heads}")
        return self

    @property
    def ffn_dim(self) -> int:
        return int(round(self.d_model * self.ffn_expansion))


class LlmConfig(_Strict):
    adapter: AdapterConfig = AdapterConfig()
    lm: LmConfig = LmConfig()
    lora: LoraConfig = LoraConfig()
    prompt_text: str = Field(PROMPT_TEXT, min_length=1)
    # AED checkpoint whose encoder weights seed this model's encoder
    init_encoder_from: str | None = None


class SpecAugmentConfig(_Strict):
    enabled: bool = True
    num_freq_masks: int = Field(2, ge=0)
    max_freq_width: int = Field(10, ge=0, le=80)
    num_time_masks: int = Field(2, ge=0)
    max_time_width: int = Field(50, ge=0)
    max_time_ratio: float = Field(0.2, ge=0.0, le=1.0)

    def to_policy(self) -> SpecAugmentPolicy:
        return SpecAugmentPolicy(**self.model_dump())


class RegStageConfig(_Strict):
    dropout_p: float = Field(0.0, ge=0.0, lt=1.0)
    specaugment: SpecAugmentConfig = SpecAugmentConfig(enabled=False)


def _default_stages() -> tuple[RegStageConfig, ...]:
    return (
        RegStageConfig(dropout_p=0.0, specaugment=SpecAugmentConfig(enabled=False)),
        RegStageConfig(
            dropout_p=0.1,
            specaugment=SpecAugmentConfig(num_freq_masks=1, max_freq_width=5, num_time_masks=1, max_time_width=25),
        ),
        RegStageConfig(dropout_p=0.2, specaugment=SpecAugmentConfig()),
    )


def _mask_budget(stage: RegStageConfig) -> tuple[int, int]:
    aug = stage.specaugment
    if not aug.enabled:
        return 0, 0
    return aug.num_freq_masks * aug.max_freq_width, aug.num_time_masks * aug.max_time_width


class RegularizationConfig(_Strict):
    patience: int = Field(2, ge=1)
    stages: tuple[RegStageConfig, ...] = Field(default_factory=_default_stages, min_length=1)

    @model_validator(mode="after")
    def _check_order(self):
        for before, after in zip(self.stages, self.stages[1:]):
            if after.dropout_p < before.dropout_p:
                raise ValueError("regularization stages must have non-decreasing dropout_p")
            if any(a < b for a, b in zip(_mask_budget(after), _mask_budget(before))):
                raise ValueError("regularization stages must have non-decreasing SpecAugment widths")
        return self


class OptimizerConfig(_Strict):
    base_peak_lr: float = Field(1e-3, gt=0)
    # width at which base_peak_lr applies unscaled
    reference_d_model: int = Field(64, gt=0)
    warmup_steps: int = Field(100, gt=0)
    clip_norm: float = Field(5.0, gt=0)
    beta1: float = Field(0.9, gt=0, lt=1)
    beta2: float = Field(0.98, gt=0, lt=1)
    eps: float = Field(1e-9, gt=0)


class DataConfig(_Strict):
    train_manifest: str | None = None
    valid_manifest: str | None = None
    num_merges: int = Field(100, ge=0)
    # upper bound on (batch size x longest utterance frames)
    frame_budget: int = Field(4000, gt=0)


class TrainConfig(_Strict):
    epochs: int = Field(10, ge=1)
    max_steps: int | None = Field(None, ge=1)
    output_dir: str = "runs/default"
    checkpoint_every_epochs: int = Field(1, ge=1)
    # stop early once the training transcripts are decoded without error
    stop_at_zero_cer: bool = False


class DecodeConfig(_Strict):
    beam: int = Field(4, ge=1)
    # null means 2 + encoder_frames / 2
    max_len: int | None = Field(None, ge=1)
    length_penalty: float = Field(0.6, ge=0.0)


# ---------------------------------------------------------------------------
# Size presets: one core table, expanded into desk and full-scale widths
# ---------------------------------------------------------------------------

Size = Literal["xs", "s", "m", "l"]
ModelKind = Literal["aed", "llm"]

_PRESETS_CORE: dict[str, dict[str, Any]] = {
    "xs": {"full_d": 512, "full_layers": (12, 12), "desk_d": 64, "desk_layers": (2, 2), "desk_heads": 2},
    "s": {"full_d": 768, "full_layers": (16, 16), "desk_d": 96, "desk_layers": (2, 2), "desk_heads": 2},
    "m": {"full_d": 1024, "full_layers": (16, 16), "desk_d": 128, "desk_layers": (3, 3), "desk_heads": 4},
    "l": {"full_d": 1280, "full_layers": (16, 16), "desk_d": 128, "desk_layers": (4, 4), "desk_heads": 4},
}

# Stand-in for the 7B-class language model at full scale (accounting only)
_FULL_SCALE_LM = {"d_model": 3584, "num_layers": 28, "num_heads": 28, "ffn_expansion": 18944 / 3584}
_DESK_LM = {"d_model": 64, "num_layers": 2, "num_heads": 2, "ffn_expansion": 4.0}


class ModelPreset(_Strict):
    encoder: EncoderConfig
    decoder: DecoderConfig
    adapter: AdapterConfig
    lm: LmConfig


def _expand_desk(core: dict) -> ModelPreset:
    d, (enc_layers, dec_layers), heads = core["desk_d"], core["desk_layers"], core["desk_heads"]
    return ModelPreset(
        encoder=EncoderConfig(d_model=d, num_layers=enc_layers, num_heads=heads),
        decoder=DecoderConfig(d_model=d, num_layers=dec_layers, num_heads=heads),
        adapter=AdapterConfig(),
        lm=LmConfig(**_DESK_LM),
    )


def _expand_full_scale(core: dict) -> ModelPreset:
    d, (enc_layers, dec_layers) = core["full_d"], core["full_layers"]
    heads = d // 64
    return ModelPreset(
        encoder=EncoderConfig(d_model=d, num_layers=enc_layers, num_heads=heads),
        decoder=DecoderConfig(d_model=d, num_layers=dec_layers, num_heads=heads, vocab_size=FULL_SCALE_VOCAB_SIZE),
        adapter=AdapterConfig(hidden_dim=_FULL_SCALE_LM["d_model"]),
        lm=LmConfig(**_FULL_SCALE_LM, vocab_size=FULL_SCALE_VOCAB_SIZE),
    )


DESK_PRESETS: dict[str, ModelPreset] = {name: _expand_desk(core) for name, core in _PRESETS_CORE.items()}
FULL_SCALE_PRESETS: dict[str, ModelPreset] = {name: _expand_full_scale(core) for name, core in _PRESETS_CORE.items()}


# ---------------------------------------------------------------------------
# Run config
# ---------------------------------------------------------------------------


class RunConfig(_Strict):
    kind: ModelKind = "aed"
    size: Size = "xs"
    seed: int = 0
    dtype: Literal["float32", "float64"] | None = None
    encoder: EncoderConfig = EncoderConfig()
    decoder: DecoderConfig = DecoderConfig()
    llm: LlmConfig = LlmConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    regularization: RegularizationConfig = RegularizationConfig()
    data: DataConfig = DataConfig()
    train: TrainConfig = TrainConfig()
    decode: DecodeConfig = DecodeConfig()

    @model_validator(mode="before")
    @classmethod
    def _fill_from_preset(cls, data: Any) -> Any:
        """Absent encoder/decoder/lm sections are taken from the desk preset of `size`."""
        if not isinstance(data, dict):
            return data
        data = dict(data)
        preset = DESK_PRESETS.get(data.get("size", "xs"))
        if preset is None:
            return data
        data.setdefault("encoder", preset.encoder.model_dump())
        data.setdefault("decoder", preset.decoder.model_dump())
        llm = dict(data.get("llm") or {})
        llm.setdefault("lm", preset.lm.model_dump())
        data["llm"] = llm
        return data

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype or get_settings().dtype)


def _find_key_line(text: str, loc: tuple) -> int | None:
    for key in reversed(loc):
        if isinstance(key, str):
            needle = f'"{key}"'
            for number, line in enumerate(text.splitlines(), start=1):
                if needle in line:
                    return number
    return None


def parse_run_config(text: str) -> RunConfig:
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object", line=1)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = tuple(first["loc"])
        field = ".".join(str(part) for part in loc) or None
        raise ConfigError(first["msg"], field=field, line=_find_key_line(text, loc)) from None


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}", field="config")
    return parse_run_config(path.read_text(encoding="utf-8"))


def dump_run_config(config: RunConfig) -> str:
    return config.model_dump_json(indent=2)
