"""
Exception hierarchy for deskasr.

Every failure raised on purpose by the library derives from DeskAsrError so
the CLI can translate it into a one-line diagnostic and an exit code.
"""

from __future__ import annotations


class DeskAsrError(Exception):
    """Base class for all deskasr errors."""


class ShapeError(DeskAsrError, ValueError):
    """Tensor shapes do not fit the operation."""


class FrontendError(DeskAsrError):
    """Audio could not be turned into features."""


class TokenizerError(DeskAsrError):
    """Tokenizer training or id decoding failed."""


class DecodeError(DeskAsrError):
    """Search was called with invalid arguments."""


class ScoringError(DeskAsrError):
    """Metric arithmetic was asked for an undefined quantity."""


class DataError(DeskAsrError):
    """A manifest, score file or batch is unusable."""


class CheckpointError(DeskAsrError):
    """A checkpoint is malformed, from another format version, or corrupted."""


class ConfigError(DeskAsrError):
    """A run configuration is invalid.

    `field` is the dotted path of the offending key and `line` the 1-based
    line of that key in the source text when it can be located.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        super().__init__(message)
        self.field = field
        self.line = line

    def __str__(self) -> str:
        where = ""
        if self.line is not None:
            where = f"line {self.line}: "
        if self.field:
            where += f"'{self.field}': "
        return f"{where}{self.args[0]}"


class NumericalFailure(DeskAsrError):
    """Training produced a non-finite loss.

    `state` carries a JSON-serialisable snapshot for the diagnostic dump.
    """

    def __init__(self, message: str, state: dict | None = None):
        super().__init__(message)
        self.state = state or {}
