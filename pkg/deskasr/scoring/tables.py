"""
Benchmark-table arithmetic: Average-N over test sets and relative error-rate
reduction (CERR).

Values enter as decimal strings or floats and are converted through their
shortest repr, so 4.60 stays 4.60 rather than its nearest binary double.
Rounding is half-up and only ever applied for display.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

import pandas as pd

from ..errors import DataError, ScoringError

Number = Decimal | float | int | str


def to_decimal(value: Number) -> Decimal:
    if isinstance(value, Decimal):
        return value
    try:
        return Decimal(str(value).strip())
    except ArithmeticError:
        raise ScoringError(f"not a number: {value!r}") from None


def round_half_up(value: Number, places: int) -> Decimal:
    return to_decimal(value).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def average_n(rates: Sequence[Number]) -> Decimal:
    """Arithmetic mean of per-set error rates, unrounded."""
    if len(rates) == 0:
        raise ScoringError("cannot average an empty list of error rates")
    values = [to_decimal(r) for r in rates]
    return sum(values, Decimal(0)) / len(values)


def cerr(baseline: Number, ours: Number) -> Decimal:
    """100 * (baseline - ours) / baseline, unrounded."""
    base = to_decimal(baseline)
    if base <= 0:
        raise ScoringError(f"CERR needs a positive baseline error rate, got {baseline}")
    return Decimal(100) * (base - to_decimal(ours)) / base


def format_rate(value: Number) -> str:
    return f"{round_half_up(value, 2)}"


def format_cerr(value: Number) -> str:
    return f"{round_half_up(value, 1)}"


@dataclass(frozen=True)
class ScalingStep:
    source: str
    target: str
    cerr: Decimal


def scaling_cerrs(labels: Sequence[str], rates: Sequence[Number]) -> list[ScalingStep]:
    """CERR between consecutive sizes, then first to last."""
    if len(labels) != len(rates) or len(rates) < 2:
        raise ScoringError("scaling CERRs need at least two labelled error rates")
    steps = [ScalingStep(a, b, cerr(ra, rb)) for a, b, ra, rb in zip(labels, labels[1:], rates, rates[1:])]
    steps.append(ScalingStep(labels[0], labels[-1], cerr(rates[0], rates[-1])))
    return steps


# ---------------------------------------------------------------------------
# System x test-set tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkTable:
    """Per-system error rates on named test sets, held as exact decimals."""

    test_sets: tuple[str, ...]
    rows: dict[str, tuple[Decimal, ...]]

    def __post_init__(self):
        for system, values in self.rows.items():
            if len(values) != len(self.test_sets):
                raise ScoringError(
                    f"system '{system}' has {len(values)} values for {len(self.test_sets)} test sets"
                )

    @property
    def systems(self) -> list[str]:
        return list(self.rows)

    def average(self, system: str) -> Decimal:
        return average_n(self.rows[system])

    def averages(self) -> dict[str, Decimal]:
        return {system: self.average(system) for system in self.rows}

    def cerr_vs(self, reference_system: str) -> dict[str, Decimal]:
        """CERR of the reference system against every other one, from display-rounded averages.

        Positive values mean the reference system has the lower error rate.
        """
        if reference_system not in self.rows:
            raise ScoringError(
                f"Unknown reference system '{reference_system}'. Available: {', '.join(self.rows)}"
            )
        ours = round_half_up(self.average(reference_system), 2)
        return {
            system: cerr(round_half_up(avg, 2), ours)
            for system, avg in self.averages().items()
            if system != reference_system
        }

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(
            [[format_rate(v) for v in values] for values in self.rows.values()],
            index=pd.Index(self.systems, name="system"),
            columns=list(self.test_sets),
        )
        df[f"Average-{len(self.test_sets)}"] = [format_rate(a) for a in self.averages().values()]
        return df

    @classmethod
    def from_tsv(cls, path: str | Path) -> "BenchmarkTable":
        """Read `system<TAB>set1<TAB>set2...` with a header row."""
        path = Path(path)
        if not path.is_file():
            raise DataError(f"table file not found: {path}")
        try:
            df = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False, quoting=csv.QUOTE_NONE,
                             encoding="utf-8")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
            raise DataError(f"unreadable table {path}: {exc}") from None
        if df.shape[1] < 2:
            raise DataError(f"{path}: expected a system column followed by at least one test set")
        system_col, *sets = list(df.columns)
        rows = {}
        for record in df.itertuples(index=False):
            system, *values = record
            if system in rows:
                raise DataError(f"{path}: system '{system}' appears twice")
            rows[system] = tuple(to_decimal(v) for v in values)
        return cls(tuple(sets), rows)
