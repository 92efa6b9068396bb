"""
JSON-lines logging for training, decoding and the command line.

Every record is one JSON object; numbers attached through
``extra={"metrics": ...}`` may be numpy scalars or arrays and are converted.
"""

import datetime
import json
import logging
import os
import sys

import numpy as np

_EXTRA_KEYS = ("metrics", "context")


def _to_json(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class JSONFormatter(logging.Formatter):
    """One JSON object per record, CJK text left unescaped."""

    def format(self, record):
        entry = {
            "timestamp": datetime.datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key in _EXTRA_KEYS:
            value = getattr(record, key, None)
            if value:
                entry[key] = value
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, ensure_ascii=False, default=_to_json)


def _resolve_log_path(log_file: str) -> str:
    """Relative log paths are taken relative to the current working directory."""
    if os.path.isabs(log_file):
        return log_file
    return os.path.join(os.getcwd(), log_file)


def setup_json_logger(name: str, log_file_env_var: str, default_log_path: str | None) -> logging.Logger:
    """
    Set up a logger that writes JSON lines to stderr and, optionally, to a file.

    The file path comes from `log_file_env_var`, falling back to
    `default_log_path`; pass None as the default to log to stderr only unless
    the variable is set.
    """
    logger = logging.getLogger(name)

    # Avoid duplicate handlers if the logger is requested several times
    if logger.handlers:
        return logger

    from ..config import get_settings

    logger.setLevel(get_settings().log_level)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(JSONFormatter())
    logger.addHandler(console_handler)

    log_file = os.getenv(log_file_env_var, default_log_path or "")
    if log_file:
        log_file = _resolve_log_path(log_file)
        log_dir = os.path.dirname(log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(JSONFormatter())
        logger.addHandler(file_handler)

    # Library loggers (deskasr.*) propagate to this one; stop here
    logger.propagate = False

    return logger


def get_train_logger():
    return setup_json_logger("deskasr.train", "DESKASR_TRAIN_LOG_FILE", "logs/train.log")


def get_decode_logger():
    return setup_json_logger("deskasr.decode", "DESKASR_DECODE_LOG_FILE", None)


def get_cli_logger():
    return setup_json_logger("deskasr", "DESKASR_CLI_LOG_FILE", None)
