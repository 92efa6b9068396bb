"""
Abstract base class for all ASR model kinds.

Every model kind implements the same training and decoding surface so the
trainer, the checkpoint code and the CLI can handle either kind without
knowing which one they hold.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ..decoding import Hypothesis
from ..frontend import FeatureMatrix
from ..numerics.nn import Module, Parameter
from ..numerics.rng import Rng
from ..numerics.tensor import Tensor

if TYPE_CHECKING:
    from ..config import RunConfig
    from ..tokenizer import Tokenizer
    from ..training.batching import TrainBatch


class AsrModel(Module, ABC):
    """
    Base class for trainable speech recognisers.

    Subclasses own an encoder plus a text generator and expose:

    - loss(batch): scalar training loss for a TrainBatch
    - transcribe(features, ...): best hypothesis per utterance
    - components(): named sub-modules used for parameter accounting
    """

    kind: str = ""
    config: "RunConfig"
    dropout_rng: Rng

    @classmethod
    @abstractmethod
    def build(cls, config: "RunConfig", tokenizer: "Tokenizer", seed: int | None = None) -> "AsrModel":
        """Allocate a freshly initialised model for `config`."""
        ...

    @abstractmethod
    def loss(self, batch: "TrainBatch") -> Tensor:
        ...

    @abstractmethod
    def transcribe(
        self,
        features: Sequence[FeatureMatrix],
        beam: int = 1,
        max_len: int | None = None,
        length_penalty: float = 0.6,
    ) -> list[Hypothesis]:
        ...

    @abstractmethod
    def components(self) -> dict[str, list[tuple[str, Parameter]]]:
        """Parameters grouped by accounting component (encoder, decoder, adapter, lm, lora)."""
        ...

    def trainable_parameters(self) -> list[tuple[str, Parameter]]:
        return [(n, p) for n, p in self.named_parameters() if p.requires_grad]

    def frozen_checksum(self) -> str:
        """sha256 over every frozen parameter, in name order."""
        digest = hashlib.sha256()
        for name, p in sorted(self.named_parameters(), key=lambda item: item[0]):
            if not p.requires_grad:
                digest.update(name.encode("utf-8"))
                digest.update(np.ascontiguousarray(p.data).tobytes())
        return digest.hexdigest()
