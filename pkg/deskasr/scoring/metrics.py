"""
Levenshtein alignment and corpus-level CER / WER.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from ..errors import ScoringError
from .normalization import Unit, to_units


@dataclass(frozen=True)
class EditCounts:
    sub: int
    dele: int
    ins: int

    @property
    def distance(self) -> int:
        return self.sub + self.dele + self.ins

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(self.sub + other.sub, self.dele + other.dele, self.ins + other.ins)


def edit_distance(ref: Sequence, hyp: Sequence) -> EditCounts:
    """Minimal unit-cost edit distance split into (sub, del, ins).

    Among equally short alignments the backtrace prefers a substitution,
    then a deletion, then an insertion, so the counts are reproducible.
    """
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        row, prev = cost[i], cost[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (r != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1)

    sub = dele = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            sub += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and cost[i][j] == cost[i - 1][j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(int(sub), dele, ins)


@dataclass(frozen=True)
class ScoredPair:
    reference: str
    hypothesis: str
    unit: Unit
    counts: EditCounts
    ref_len: int

    @property
    def distance(self) -> int:
        return self.counts.distance


def score_pair(reference: str, hypothesis: str, unit: Unit = "char") -> ScoredPair:
    ref_units = to_units(reference, unit)
    counts = edit_distance(ref_units, to_units(hypothesis, unit))
    return ScoredPair(reference, hypothesis, unit, counts, len(ref_units))


def corpus_counts(pairs: Iterable[ScoredPair]) -> tuple[EditCounts, int]:
    total, ref_len = EditCounts(0, 0, 0), 0
    for pair in pairs:
        total = total + pair.counts
        ref_len += pair.ref_len
    return total, ref_len


def error_rate(pairs: Iterable[ScoredPair]) -> float:
    """100 * total edits / total reference units over the whole corpus."""
    counts, ref_len = corpus_counts(pairs)
    if ref_len == 0:
        raise ScoringError("reference corpus is empty after normalisation; error rate is undefined")
    return 100.0 * counts.distance / ref_len


def _unit_rate(pairs: Iterable[ScoredPair], unit: Unit) -> float:
    pairs = list(pairs)
    wrong = {p.unit for p in pairs} - {unit}
    if wrong:
        raise ValueError(f"expected pairs scored in {unit} units, found {sorted(wrong)}")
    return error_rate(pairs)


def cer(pairs: Iterable[ScoredPair]) -> float:
    return _unit_rate(pairs, "char")


def wer(pairs: Iterable[ScoredPair]) -> float:
    return _unit_rate(pairs, "word")


def corpus_error_rate(references: Sequence[str], hypotheses: Sequence[str], unit: Unit = "char") -> float:
    if len(references) != len(hypotheses):
        raise ValueError(f"{len(references)} references but {len(hypotheses)} hypotheses")
    return error_rate(score_pair(r, h, unit) for r, h in zip(references, hypotheses))
