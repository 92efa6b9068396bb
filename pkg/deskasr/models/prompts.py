"""
Instruction prompt for the LLM stack, defined in one place.

The prompt is a plain token sequence (no chat template). Its characters are
part of the tokenizer training text so the prompt is always in-vocabulary.

Import:
    from deskasr.models.prompts import PROMPT_TEXT, PromptSpec
"""

from __future__ import annotations

from dataclasses import dataclass

PROMPT_TEXT = "请转写以下音频内容为文字"


@dataclass(frozen=True)
class PromptSpec:
    text: str
    ids: tuple[int, ...]

    def __post_init__(self):
        if not self.text or not self.ids:
            raise ValueError("prompt must be non-empty")

    @classmethod
    def from_tokenizer(cls, tokenizer, text: str = PROMPT_TEXT) -> "PromptSpec":
        return cls(text, tuple(tokenizer.encode(text)))

    def __len__(self) -> int:
        return len(self.ids)
