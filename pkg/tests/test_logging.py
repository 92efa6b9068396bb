"""
Test cases for JSON-lines logging and unit timing
"""

import json
import logging
import sys

import numpy as np
import pytest

from deskasr.config import get_settings
from deskasr.utils.logger import JSONFormatter, setup_json_logger
from deskasr.utils.metrics import MetricsTracker


def make_record(message, **extra):
    record = logging.LogRecord("deskasr.test", logging.INFO, __file__, 1, message, None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


class CapturingHandler(logging.Handler):
    def __init__(self):
        super().__init__()
        self.records = []

    def emit(self, record):
        self.records.append(record)


@pytest.fixture
def captured():
    logger = logging.getLogger("deskasr.test.capture")
    logger.handlers.clear()
    logger.setLevel(logging.DEBUG)
    handler = CapturingHandler()
    logger.addHandler(handler)
    logger.propagate = False
    yield logger, handler.records
    logger.handlers.clear()


class TestJSONFormatter:
    """Test the JSON line layout"""

    def test_basic_fields(self):
        """Test: every line carries timestamp, level, logger and message"""
        entry = json.loads(JSONFormatter().format(make_record("Checkpoint written")))
        assert entry["level"] == "INFO"
        assert entry["logger"] == "deskasr.test"
        assert entry["message"] == "Checkpoint written"
        assert "timestamp" in entry
        assert "metrics" not in entry

    def test_numpy_metrics(self):
        """Test: numpy scalars and arrays in metrics are written as plain JSON numbers"""
        record = make_record("step", metrics={"loss": np.float32(0.5), "lengths": np.array([3, 4])})
        entry = json.loads(JSONFormatter().format(record))
        assert entry["metrics"] == {"loss": 0.5, "lengths": [3, 4]}

    def test_cjk_unescaped(self):
        """Test: transcripts stay readable in the log file"""
        line = JSONFormatter().format(make_record("hyp", context={"text": "天地"}))
        assert "天地" in line

    def test_exception_included(self):
        """Test: tracebacks are embedded in the JSON object"""
        try:
            raise RuntimeError("boom")
        except RuntimeError:
            record = logging.LogRecord("deskasr.test", logging.ERROR, __file__, 1, "failed", None, sys.exc_info())
        entry = json.loads(JSONFormatter().format(record))
        assert "RuntimeError: boom" in entry["exception"]


class TestSetupLogger:
    """Test logger construction from environment variables"""

    def test_file_from_env(self, tmp_path, monkeypatch):
        """Test: the log file path comes from the named variable and directories are created"""
        path = tmp_path / "nested" / "run.log"
        monkeypatch.setenv("DESKASR_TEST_LOG_FILE", str(path))
        logger = setup_json_logger("deskasr.test.file", "DESKASR_TEST_LOG_FILE", None)
        try:
            logger.info("hello", extra={"metrics": {"step": 1}})
            for handler in logger.handlers:
                handler.flush()
            entry = json.loads(path.read_text(encoding="utf-8").splitlines()[-1])
            assert entry["metrics"] == {"step": 1}
        finally:
            for handler in logger.handlers:
                handler.close()
            logger.handlers.clear()

    def test_no_duplicate_handlers(self, monkeypatch):
        """Test: requesting a logger twice does not add handlers twice"""
        monkeypatch.delenv("DESKASR_TEST_LOG_FILE", raising=False)
        first = setup_json_logger("deskasr.test.twice", "DESKASR_TEST_LOG_FILE", None)
        count = len(first.handlers)
        second = setup_json_logger("deskasr.test.twice", "DESKASR_TEST_LOG_FILE", None)
        assert second is first and len(second.handlers) == count
        first.handlers.clear()

    def test_level_from_settings(self, monkeypatch):
        """Test: the logger level is the one reported by the settings"""
        monkeypatch.setenv("DESKASR_LOG_LEVEL", "debug")
        monkeypatch.delenv("DESKASR_TEST_LOG_FILE", raising=False)
        assert get_settings().log_level == "DEBUG"
        logger = setup_json_logger("deskasr.test.level", "DESKASR_TEST_LOG_FILE", None)
        try:
            assert logger.level == logging.DEBUG
        finally:
            logger.handlers.clear()


class TestMetricsTracker:
    """Test timing of named units of work"""

    def test_success_logged(self, captured):
        """Test: a completed unit logs its duration, status and recorded values"""
        logger, records = captured
        with MetricsTracker(logger, "evaluate", context={"epoch": 1}) as tracker:
            tracker.record(valid_cer=0.25)
        (record,) = records
        assert record.getMessage() == "evaluate completed"
        assert record.metrics["status"] == "success"
        assert record.metrics["valid_cer"] == 0.25
        assert record.metrics["execution_time_ms"] >= 0
        assert record.context == {"epoch": 1}

    def test_failure_logged_and_raised(self, captured):
        """Test: a failing unit logs at error level and the exception propagates"""
        logger, records = captured
        with pytest.raises(ValueError):
            with MetricsTracker(logger, "decode"):
                raise ValueError("bad wav")
        (record,) = records
        assert record.levelno == logging.ERROR
        assert record.metrics["error_type"] == "ValueError"
        assert record.metrics["error_msg"] == "bad wav"
