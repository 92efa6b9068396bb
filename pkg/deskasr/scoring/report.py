"""
Score files and reports.

Transcript files hold one `utt_id<TAB>text` line per utterance (UTF-8). A
report prints in a human-readable form and as one JSON object per line for
machines.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import pandas as pd

from ..errors import DataError
from .metrics import corpus_counts, error_rate, score_pair
from .normalization import NORMALIZATION_VERSION, Unit
from .tables import BenchmarkTable, cerr, format_cerr, format_rate

logger = logging.getLogger(__name__)


def read_transcripts(path: str | Path) -> dict[str, str]:
    """utt_id -> text, in file order; an utterance with no text maps to ''."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"transcript file not found: {path}")
    try:
        df = pd.read_csv(path, sep="\t", header=None, names=["utt_id", "text"], dtype=str,
                         keep_default_na=False, quoting=csv.QUOTE_NONE, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return {}
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"unreadable transcript file {path}: {exc}") from None
    df = df.fillna("")
    duplicated = df["utt_id"][df["utt_id"].duplicated()].tolist()
    if duplicated:
        raise DataError(f"{path}: duplicate utterance ids {duplicated[:5]}")
    return dict(zip(df["utt_id"], df["text"]))


def write_transcripts(path: str | Path, rows: list[tuple[str, str]]) -> None:
    Path(path).write_text("".join(f"{utt_id}\t{text}\n" for utt_id, text in rows), encoding="utf-8")


@dataclass
class ScoreReport:
    unit: Unit
    num_utterances: int
    ref_units: int
    sub: int
    dele: int
    ins: int
    rate: float
    only_in_ref: list[str] = field(default_factory=list)
    only_in_hyp: list[str] = field(default_factory=list)
    baseline_rate: float | None = None

    @property
    def metric(self) -> str:
        return "CER" if self.unit == "char" else "WER"

    @property
    def cerr(self) -> Decimal | None:
        if self.baseline_rate is None:
            return None
        return cerr(self.baseline_rate, self.rate)

    def to_dict(self) -> dict:
        data = {
            "metric": self.metric,
            "rate": float(format_rate(self.rate)),
            "utterances": self.num_utterances,
            "ref_units": self.ref_units,
            "sub": self.sub,
            "del": self.dele,
            "ins": self.ins,
            "normalization": NORMALIZATION_VERSION,
        }
        if self.baseline_rate is not None:
            data["baseline_rate"] = float(format_rate(self.baseline_rate))
            data["cerr"] = float(format_cerr(self.cerr))
        if self.only_in_ref or self.only_in_hyp:
            data["missing_hyp"] = self.only_in_ref
            data["missing_ref"] = self.only_in_hyp
        return data

    def human(self) -> str:
        units = "chars" if self.unit == "char" else "words"
        lines = [
            f"{self.metric} {format_rate(self.rate)}% "
            f"({self.num_utterances} utts, {self.ref_units} ref {units}; "
            f"S={self.sub} D={self.dele} I={self.ins})"
        ]
        if self.baseline_rate is not None:
            lines.append(f"baseline {format_rate(self.baseline_rate)}% -> CERR {format_cerr(self.cerr)}%")
        return "\n".join(lines)

    def machine(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


def score_transcripts(refs: dict[str, str], hyps: dict[str, str], unit: Unit = "char") -> ScoreReport:
    """Score the utterances present in both maps; ids in only one of them are reported."""
    only_ref = sorted(set(refs) - set(hyps))
    only_hyp = sorted(set(hyps) - set(refs))
    if only_ref or only_hyp:
        logger.warning(
            "Utterance ids differ between reference and hypothesis; scoring the intersection",
            extra={"context": {"missing_hyp": only_ref, "missing_ref": only_hyp}},
        )
    common = [utt for utt in refs if utt in hyps]
    pairs = [score_pair(refs[utt], hyps[utt], unit) for utt in common]
    counts, ref_len = corpus_counts(pairs)
    rate = error_rate(pairs)
    return ScoreReport(unit, len(pairs), ref_len, counts.sub, counts.dele, counts.ins, rate, only_ref, only_hyp)


def score_files(ref_path: str | Path, hyp_path: str | Path, unit: Unit = "char",
                baseline_path: str | Path | None = None) -> ScoreReport:
    refs = read_transcripts(ref_path)
    report = score_transcripts(refs, read_transcripts(hyp_path), unit)
    if baseline_path is not None:
        report.baseline_rate = score_transcripts(refs, read_transcripts(baseline_path), unit).rate
    return report


# ---------------------------------------------------------------------------
# Aggregate tables
# ---------------------------------------------------------------------------


def table_report(table: BenchmarkTable, reference_system: str | None = None) -> tuple[str, list[str]]:
    """(human-readable table, machine lines) for a benchmark table."""
    df = table.to_frame()
    machine = []
    cerrs = table.cerr_vs(reference_system) if reference_system else {}
    if cerrs:
        df[f"CERR vs {reference_system}"] = [
            format_cerr(cerrs[s]) if s in cerrs else "-" for s in table.systems
        ]
    average_col = f"Average-{len(table.test_sets)}"
    for system in table.systems:
        record = {"system": system, "average": float(df.loc[system, average_col])}
        if system in cerrs:
            record["cerr"] = float(format_cerr(cerrs[system]))
        machine.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
    return df.to_string(), machine
