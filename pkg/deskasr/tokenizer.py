"""
Mixed tokenizer: Chinese characters (and digits/punctuation) are atomic tokens,
Latin-script words are split with a BPE model.

Vocabulary layout: the five specials at ids 0-4, then the BPE inventory (base
symbols followed by merged symbols in merge order), then the character
inventory sorted by code point.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import TokenizerError

logger = logging.getLogger(__name__)

PAD, SOS, EOS, UNK, BLANK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("<pad>", "<sos>", "<eos>", "<unk>", "<blank>")
END_OF_WORD = "</w>"

# Vocabulary accounting of the full-scale system: BPE + characters + specials.
FULL_SCALE_VOCAB = {"bpe": 1000, "characters": 6827, "specials": len(SPECIAL_TOKENS)}
FULL_SCALE_VOCAB_SIZE = sum(FULL_SCALE_VOCAB.values())


def vocab_size_for(num_bpe: int, num_chars: int) -> int:
    return num_bpe + num_chars + len(SPECIAL_TOKENS)


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def is_latin(ch: str) -> bool:
    # Basic Latin letters plus Latin-1 Supplement .. Latin Extended-B, minus the two operators
    return ("a" <= ch <= "z") or ("A" <= ch <= "Z") or ("À" <= ch <= "ɏ" and ch not in "×÷")


def segment(text: str) -> list[tuple[str, str]]:
    """Split text into ("word", latin_run) and ("char", ch) units; whitespace only delimits."""
    units: list[tuple[str, str]] = []
    word: list[str] = []
    for ch in text:
        if is_latin(ch):
            word.append(ch)
            continue
        if word:
            units.append(("word", "".join(word)))
            word = []
        if not ch.isspace():
            units.append(("char", ch))
    if word:
        units.append(("word", "".join(word)))
    return units


def join_units(units: Sequence[tuple[str, str]]) -> str:
    """Inverse of segment: a single space only between two adjacent Latin words."""
    out: list[str] = []
    previous = None
    for kind, value in units:
        if kind == "word" and previous == "word":
            out.append(" ")
        out.append(value)
        previous = kind
    return "".join(out)


def normalize_spacing(text: str) -> str:
    return join_units(segment(text))


def _word_symbols(word: str) -> tuple[str, ...]:
    return tuple(word[:-1]) + (word[-1] + END_OF_WORD,)


# ---------------------------------------------------------------------------
# BPE
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BpeModel:
    merges: tuple[tuple[str, str], ...]
    base_symbols: tuple[str, ...]
    ranks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ranks", {pair: i for i, pair in enumerate(self.merges)})

    @property
    def symbols(self) -> list[str]:
        """Base symbols followed by merge results, without duplicates."""
        seen = dict.fromkeys(self.base_symbols)
        for a, b in self.merges:
            seen.setdefault(a + b)
        return list(seen)

    def apply(self, word: str) -> list[str]:
        symbols = list(_word_symbols(word))
        while len(symbols) > 1:
            ranked = [(self.ranks.get(pair, len(self.ranks)), i)
                      for i, pair in enumerate(zip(symbols, symbols[1:]))]
            best_rank, _ = min(ranked)
            if best_rank == len(self.ranks):
                break
            symbols = _merge_pair(symbols, self.merges[best_rank])
        return symbols


def _merge_pair(symbols: Sequence[str], pair: tuple[str, str]) -> list[str]:
    merged: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == pair:
            merged.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return merged


def latin_words(lines: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for line in lines:
        counts.update(value for kind, value in segment(line) if kind == "word")
    return counts


def train_bpe(corpus: Iterable[str], num_merges: int) -> BpeModel:
    """Greedy BPE: merge the most frequent adjacent pair, ties to the smallest pair."""
    words = latin_words(corpus)
    if not words:
        raise TokenizerError("BPE training corpus has no Latin-script words")
    vocab = {_word_symbols(w): n for w, n in words.items()}
    base = sorted({s for symbols in vocab for s in symbols})
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pairs: Counter = Counter()
        for symbols, n in vocab.items():
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] += n
        if not pairs:
            logger.info("BPE stopped early after %d merges: no pairs left", len(merges))
            break
        best = min(pairs.items(), key=lambda item: (-item[1], item[0]))[0]
        merges.append(best)
        vocab = {tuple(_merge_pair(symbols, best)): n for symbols, n in vocab.items()}
    return BpeModel(tuple(merges), tuple(base))


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    id_to_token: tuple[str, ...]
    num_bpe: int
    num_chars: int
    token_to_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.id_to_token[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise TokenizerError("vocabulary must start with the special tokens " + " ".join(SPECIAL_TOKENS))
        mapping = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise TokenizerError("vocabulary contains duplicate tokens")
        if len(self.id_to_token) != vocab_size_for(self.num_bpe, self.num_chars):
            raise TokenizerError("vocabulary size does not equal #BPE + #characters + specials")
        object.__setattr__(self, "token_to_id", mapping)

    def __len__(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def build(cls, bpe: BpeModel, corpus: Iterable[str]) -> "Vocabulary":
        chars = sorted({value for line in corpus for kind, value in segment(line) if kind == "char"})
        pieces = bpe.symbols
        return cls(SPECIAL_TOKENS + tuple(pieces) + tuple(chars), len(pieces), len(chars))

    def to_lines(self) -> list[str]:
        return list(self.id_to_token)

    @classmethod
    def from_lines(cls, lines: Sequence[str], num_bpe: int) -> "Vocabulary":
        tokens = tuple(line.rstrip("\n") for line in lines if line.rstrip("\n"))
        return cls(tokens, num_bpe, len(tokens) - num_bpe - len(SPECIAL_TOKENS))


def encode(text: str, vocab: Vocabulary, bpe: BpeModel) -> list[int]:
    ids: list[int] = []
    lookup = vocab.token_to_id
    for kind, value in segment(text):
        pieces = bpe.apply(value) if kind == "word" else [value]
        ids.extend(lookup.get(piece, UNK) for piece in pieces)
    return ids


def decode(ids: Sequence[int], vocab: Vocabulary) -> str:
    """Ids to text; stops at the first eos and skips the other specials."""
    units: list[tuple[str, str]] = []
    word: list[str] = []
    for position, token_id in enumerate(ids):
        token_id = int(token_id)
        if not 0 <= token_id < len(vocab):
            raise TokenizerError(f"token id {token_id} at index {position} is outside [0, {len(vocab)})")
        if token_id == EOS:
            break
        if token_id < len(SPECIAL_TOKENS):
            continue
        token = vocab.id_to_token[token_id]
        if token_id < len(SPECIAL_TOKENS) + vocab.num_bpe:
            if token.endswith(END_OF_WORD):
                word.append(token[: -len(END_OF_WORD)])
                units.append(("word", "".join(word)))
                word = []
            else:
                word.append(token)
        else:
            if word:
                units.append(("word", "".join(word)))
                word = []
            units.append(("char", token))
    if word:
        units.append(("word", "".join(word)))
    return join_units(units)


# ---------------------------------------------------------------------------
# Facade
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tokenizer:
    vocab: Vocabulary
    bpe: BpeModel

    @classmethod
    def train(cls, corpus: Sequence[str], num_merges: int) -> "Tokenizer":
        corpus = list(corpus)
        if latin_words(corpus):
            bpe = train_bpe(corpus, num_merges)
        else:
            # character-only corpus: no BPE inventory at all
            bpe = BpeModel((), ())
        vocab = Vocabulary.build(bpe, corpus)
        logger.info(
            "Tokenizer trained",
            extra={"metrics": {"bpe": vocab.num_bpe, "characters": vocab.num_chars, "size": len(vocab)}},
        )
        return cls(vocab, bpe)

    def __len__(self) -> int:
        return len(self.vocab)

    def encode(self, text: str) -> list[int]:
        return encode(text, self.vocab, self.bpe)

    def decode(self, ids: Sequence[int]) -> str:
        return decode(ids, self.vocab)

    # -- persistence ------------------------------------------------------
    def merges_lines(self) -> list[str]:
        return [f"{a} {b}" for a, b in self.bpe.merges]

    def to_artifacts(self) -> dict:
        return {
            "vocab": self.vocab.to_lines(),
            "num_bpe": self.vocab.num_bpe,
            "merges": self.merges_lines(),
            "base_symbols": list(self.bpe.base_symbols),
        }

    @classmethod
    def from_artifacts(cls, artifacts: dict) -> "Tokenizer":
        merges = tuple(tuple(line.split(" ")) for line in artifacts["merges"])
        bpe = BpeModel(merges, tuple(artifacts["base_symbols"]))
        return cls(Vocabulary.from_lines(artifacts["vocab"], int(artifacts["num_bpe"])), bpe)

    def save(self, directory: str | Path) -> None:
        """Write vocab.txt (one token per line, line number = id) and merges.txt."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "vocab.txt").write_text("\n".join(self.vocab.to_lines()) + "\n", encoding="utf-8")
        (directory / "merges.txt").write_text("\n".join(self.merges_lines()) + "\n", encoding="utf-8")
