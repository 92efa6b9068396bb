from .metrics import EditCounts, ScoredPair, cer, corpus_error_rate, edit_distance, error_rate, score_pair, wer
from .normalization import NORMALIZATION_VERSION, to_units
from .report import ScoreReport, read_transcripts, score_files, score_transcripts, table_report, write_transcripts
from .tables import BenchmarkTable, average_n, cerr, format_cerr, format_rate, round_half_up, scaling_cerrs

__all__ = [
    "BenchmarkTable",
    "EditCounts",
    "NORMALIZATION_VERSION",
    "ScoreReport",
    "ScoredPair",
    "average_n",
    "cer",
    "cerr",
    "corpus_error_rate",
    "edit_distance",
    "error_rate",
    "format_cerr",
    "format_rate",
    "read_transcripts",
    "round_half_up",
    "scaling_cerrs",
    "score_files",
    "score_pair",
    "score_transcripts",
    "table_report",
    "to_units",
    "wer",
    "write_transcripts",
]
