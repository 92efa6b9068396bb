"""
Timing of named units of work (training steps, evaluations, decodes),
reported through the structured logger.
"""

import time


class MetricsTracker:
    """
    A context manager that times a block and logs its duration and status.

    Extra numbers recorded with `record()` inside the block are merged into
    the logged metrics.
    """

    def __init__(self, logger, unit_name, context=None, level_ok="info"):
        self.logger = logger
        self.unit_name = unit_name
        self.context = context or {}
        self.level_ok = level_ok
        self.start_time = None
        self.values = {}

    def record(self, **values):
        self.values.update(values)

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        duration_ms = (time.perf_counter() - self.start_time) * 1000
        status = "success" if exc_type is None else "error"

        metrics = {
            "unit": self.unit_name,
            "execution_time_ms": round(duration_ms, 2),
            "status": status,
            **self.values,
        }

        if exc_type:
            metrics["error_type"] = exc_type.__name__
            metrics["error_msg"] = str(exc_val)
            self.logger.error(f"{self.unit_name} failed",
                              extra={"metrics": metrics, "context": self.context})
        else:
            log = getattr(self.logger, self.level_ok)
            log(f"{self.unit_name} completed",
                extra={"metrics": metrics, "context": self.context})
        # never swallow the exception
        return False
