"""
Text normalisation applied before scoring, defined in one place.

The table is versioned; reports carry NORMALIZATION_VERSION so scores from
different table versions are never compared by accident.

Version 1:
    char units: drop whitespace and every Unicode punctuation character
                (categories Pc, Pd, Pe, Pf, Pi, Po, Ps); case is kept.
    word units: lowercase, drop punctuation, split on whitespace.
"""

from __future__ import annotations

import unicodedata
from typing import Literal

NORMALIZATION_VERSION = "1"

Unit = Literal["char", "word"]
UNITS: tuple[str, ...] = ("char", "word")


def is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def strip_punctuation(text: str) -> str:
    return "".join(ch for ch in text if not is_punctuation(ch))


def normalize_chars(text: str) -> list[str]:
    return [ch for ch in strip_punctuation(text) if not ch.isspace()]


def normalize_words(text: str) -> list[str]:
    return strip_punctuation(text.lower()).split()


def to_units(text: str, unit: Unit) -> list[str]:
    if unit == "char":
        return normalize_chars(text)
    if unit == "word":
        return normalize_words(text)
    raise ValueError(f"Unknown unit '{unit}'. Supported: {', '.join(UNITS)}")
