"""
Label-synchronous search shared by the AED decoder and the LLM stack.

Both models expose a `score_fn(prefixes) -> log-probs` callable: given a list
of token prefixes (each starting with sos) it returns an (n, V) array with the
next-token log-probabilities of each prefix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DecodeError
from .tokenizer import EOS, SOS

ScoreFn = Callable[[Sequence[tuple[int, ...]]], np.ndarray]

DEFAULT_LENGTH_PENALTY = 0.6


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    score: float
    finished: bool
    # set when search hit max_len without any finished hypothesis
    flagged: bool = False

    @property
    def length(self) -> int:
        """Generated tokens, eos included, sos excluded."""
        return len(self.tokens) - 1

    def normalized_score(self, length_penalty: float) -> float:
        if length_penalty == 0.0:
            return self.score
        return self.score / max(self.length, 1) ** length_penalty

    def output_ids(self, eos: int = EOS) -> list[int]:
        ids = list(self.tokens[1:])
        return ids[:-1] if ids and ids[-1] == eos else ids


def default_max_len(encoder_frames: int) -> int:
    return 2 + encoder_frames // 2


def _rank_key(length_penalty: float):
    return lambda h: (-h.normalized_score(length_penalty), h.tokens)


def beam_search(
    score_fn: ScoreFn,
    beam: int,
    max_len: int,
    length_penalty: float = DEFAULT_LENGTH_PENALTY,
    sos: int = SOS,
    eos: int = EOS,
) -> list[Hypothesis]:
    """Beam search over the full vocabulary.

    Each step keeps the `beam` best expansions by raw score (ties broken by
    the lexicographically smaller token sequence). Expansions ending in eos
    are retired as finished. Finished hypotheses are ranked by
    score / length**length_penalty. Without any finished hypothesis the best
    unfinished one is returned alone with `flagged=True`.
    """
    if beam < 1:
        raise DecodeError(f"beam must be at least 1, got {beam}")
    if max_len < 1:
        raise DecodeError(f"max_len must be at least 1, got {max_len}")

    live = [Hypothesis((sos,), 0.0, False)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        log_probs = np.asarray(score_fn([h.tokens for h in live]), dtype=np.float64)
        if log_probs.ndim != 2 or log_probs.shape[0] != len(live):
            raise DecodeError(f"score function returned shape {log_probs.shape} for {len(live)} prefixes")
        totals = np.array([h.score for h in live])[:, None] + log_probs
        candidates = [
            (float(totals[i, v]), live[i].tokens + (v,))
            for i in range(len(live))
            for v in range(log_probs.shape[1])
        ]
        candidates.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for score, tokens in candidates[:beam]:
            if tokens[-1] == eos:
                finished.append(Hypothesis(tokens, score, True))
            else:
                live.append(Hypothesis(tokens, score, False))
        if not live:
            break

    if finished:
        return sorted(finished, key=_rank_key(length_penalty))
    best = min(live, key=_rank_key(length_penalty))
    return [Hypothesis(best.tokens, best.score, False, flagged=True)]


def greedy_search(score_fn: ScoreFn, max_len: int, sos: int = SOS, eos: int = EOS) -> Hypothesis:
    """Pick the argmax token each step (lowest id on ties) until eos or max_len."""
    if max_len < 1:
        raise DecodeError(f"max_len must be at least 1, got {max_len}")
    tokens: tuple[int, ...] = (sos,)
    score = 0.0
    for _ in range(max_len):
        row = np.asarray(score_fn([tokens]), dtype=np.float64)[0]
        best = int(np.argmax(row))
        tokens += (best,)
        score += float(row[best])
        if best == eos:
            return Hypothesis(tokens, score, True)
    return Hypothesis(tokens, score, False, flagged=True)


def search(score_fn: ScoreFn, beam: int, max_len: int, length_penalty: float = DEFAULT_LENGTH_PENALTY) -> Hypothesis:
    """Best hypothesis: greedy for beam 1, beam search otherwise."""
    if beam == 1:
        return greedy_search(score_fn, max_len)
    return beam_search(score_fn, beam, max_len, length_penalty)[0]
