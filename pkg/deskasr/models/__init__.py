"""
models: one module per model kind.

Usage:
    from deskasr.models import get_model_class

    model_cls = get_model_class("aed")   # or "llm"
    model = model_cls.build(config, tokenizer, seed=0)
    loss = model.loss(batch)
    hypotheses = model.transcribe(features, beam=4)

Every kind implements the AsrModel interface, so the trainer, checkpoint code
and CLI never branch on the kind themselves.
"""

from __future__ import annotations

from .aed_decoder import AedModel
from .base import AsrModel
from .llm_stack import LlmAsrModel

# ---------------------------------------------------------------------------
# Registry: add a new entry here to expose a new model kind to the CLI
# ---------------------------------------------------------------------------
_REGISTRY: dict[str, type[AsrModel]] = {
    "aed": AedModel,
    "llm": LlmAsrModel,
}


def get_model_class(kind: str) -> type[AsrModel]:
    """
    Return the AsrModel subclass registered for `kind`.

    Raises ValueError for unknown kinds.
    """
    cls = _REGISTRY.get(kind.lower())
    if cls is None:
        supported = ", ".join(_REGISTRY)
        raise ValueError(f"Unknown model kind '{kind}'. Supported: {supported}")
    return cls


def available_models() -> list[str]:
    """Return the list of registered model kinds."""
    return list(_REGISTRY.keys())


__all__ = ["AsrModel", "AedModel", "LlmAsrModel", "get_model_class", "available_models"]
