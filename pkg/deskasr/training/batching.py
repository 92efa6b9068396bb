"""
Data manifests and batch construction.

A manifest is a headerless TSV with one `utt_id<TAB>wav_path<TAB>transcript`
row per utterance; relative WAV paths are resolved against the manifest's
directory. Batches are formed by a frame budget over length-sorted buckets,
and the bucket order is shuffled with the epoch's Rng.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ..errors import DataError, FrontendError
from ..frontend import CmvnStats, FeatureMatrix, SpecAugmentPolicy, load_features, pad_features, spec_augment
from ..numerics.rng import Rng
from ..tokenizer import EOS, PAD, SOS, Tokenizer

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["utt_id", "wav_path", "transcript"]


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    wav_path: str
    transcript: str


@dataclass(frozen=True)
class Example:
    """A loaded utterance: normalised features and its target token ids."""

    utt_id: str
    features: FeatureMatrix
    target: tuple[int, ...]
    transcript: str = ""

    @property
    def num_frames(self) -> int:
        return self.features.num_frames


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------


def read_manifest(path: str | Path) -> list[Utterance]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    try:
        df = pd.read_csv(
            path,
            sep="\t",
            header=None,
            names=MANIFEST_COLUMNS,
            dtype=str,
            keep_default_na=False,
            quoting=csv.QUOTE_NONE,
            encoding="utf-8",
        )
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"unreadable manifest {path}: {exc}") from None
    except pd.errors.EmptyDataError:
        return []
    df = df.fillna("")
    if (df["wav_path"] == "").any():
        bad = df.index[df["wav_path"] == ""][0] + 1
        raise DataError(f"{path}, line {bad}: expected utt_id<TAB>wav_path<TAB>transcript")

    base = path.parent
    utterances = [
        Utterance(row.utt_id, str(Path(row.wav_path) if Path(row.wav_path).is_absolute() else base / row.wav_path),
                  row.transcript)
        for row in df.itertuples(index=False)
    ]
    logger.info("Manifest loaded: %d utterances from %s", len(utterances), path)
    return utterances


def write_manifest(path: str | Path, utterances: Sequence[Utterance]) -> None:
    df = pd.DataFrame([(u.utt_id, u.wav_path, u.transcript) for u in utterances], columns=MANIFEST_COLUMNS)
    df.to_csv(path, sep="\t", header=False, index=False, quoting=csv.QUOTE_NONE, encoding="utf-8")


def load_examples(utterances: Sequence[Utterance], tokenizer: Tokenizer, stats: CmvnStats | None) -> list[Example]:
    """Compute features and token targets; an empty target is rejected here."""
    examples = []
    for utt in utterances:
        target = tuple(tokenizer.encode(utt.transcript))
        if not target:
            raise DataError(f"utterance '{utt.utt_id}' has an empty target transcript")
        try:
            features = load_features(utt.wav_path, stats)
        except FrontendError as exc:
            raise DataError(f"utterance '{utt.utt_id}': {exc}") from None
        examples.append(Example(utt.utt_id, features, target, utt.transcript))
    return examples


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainBatch:
    """Padded features plus target sequences.

    Decoder inputs are [sos] + target and decoder targets are target + [eos],
    so every utterance contributes len(target) + 1 masked positions.
    """

    utt_ids: tuple[str, ...]
    features: np.ndarray  # (B, T_max, 80)
    feature_lengths: np.ndarray  # (B,)
    targets: tuple[tuple[int, ...], ...]
    prompt_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.targets) != len(self.feature_lengths) or len(self.utt_ids) != len(self.targets):
            raise DataError("batch fields disagree on the number of utterances")
        for utt_id, target in zip(self.utt_ids, self.targets):
            if len(target) == 0:
                raise DataError(f"utterance '{utt_id}' has a zero-length target")

    @property
    def size(self) -> int:
        return len(self.targets)

    @property
    def target_lengths(self) -> np.ndarray:
        return np.array([len(t) for t in self.targets], dtype=np.int64)

    @property
    def num_frames(self) -> int:
        return int(self.feature_lengths.sum())

    def _padded(self, rows: list[list[int]]) -> np.ndarray:
        width = max(len(r) for r in rows)
        out = np.full((len(rows), width), PAD, dtype=np.int64)
        for i, row in enumerate(rows):
            out[i, : len(row)] = row
        return out

    def decoder_inputs(self) -> np.ndarray:
        return self._padded([[SOS, *t] for t in self.targets])

    def decoder_targets(self) -> np.ndarray:
        return self._padded([[*t, EOS] for t in self.targets])

    def loss_mask(self) -> np.ndarray:
        lengths = self.target_lengths + 1
        steps = int(lengths.max())
        return (np.arange(steps)[None, :] < lengths[:, None]).astype(self.features.dtype)


def collate(
    examples: Sequence[Example],
    dtype=np.float32,
    policy: SpecAugmentPolicy | None = None,
    rng: Rng | None = None,
    prompt_ids: Sequence[int] = (),
) -> TrainBatch:
    feats = [ex.features for ex in examples]
    if policy is not None and policy.enabled:
        if rng is None:
            raise ValueError("SpecAugment needs an Rng")
        feats = [spec_augment(f, policy, rng) for f in feats]
    features, lengths = pad_features(feats, dtype=dtype)
    return TrainBatch(
        utt_ids=tuple(ex.utt_id for ex in examples),
        features=features,
        feature_lengths=lengths,
        targets=tuple(ex.target for ex in examples),
        prompt_ids=tuple(prompt_ids),
    )


def bucket_indices(lengths: Sequence[int], frame_budget: int) -> list[list[int]]:
    """Group length-sorted indices so that batch size x longest length stays within the budget.

    A single utterance longer than the budget still forms its own batch.
    """
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], i))
    buckets: list[list[int]] = []
    current: list[int] = []
    for i in order:
        longest = max([lengths[j] for j in current] + [lengths[i]])
        if current and (len(current) + 1) * longest > frame_budget:
            buckets.append(current)
            current = []
        current.append(i)
    if current:
        buckets.append(current)
    return buckets


def make_batches(
    examples: Sequence[Example],
    frame_budget: int,
    rng: Rng,
    policy: SpecAugmentPolicy | None = None,
    dtype=np.float32,
    prompt_ids: Sequence[int] = (),
) -> list[TrainBatch]:
    """One epoch of batches in an rng-shuffled bucket order."""
    if not examples:
        raise DataError("no training examples")
    buckets = bucket_indices([ex.num_frames for ex in examples], frame_budget)
    batches = []
    for b in rng.permutation(len(buckets)):
        members = [examples[i] for i in buckets[int(b)]]
        batches.append(collate(members, dtype=dtype, policy=policy, rng=rng, prompt_ids=prompt_ids))
    return batches
