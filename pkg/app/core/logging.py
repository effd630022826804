import logging
import json
import sys
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime, timezone
from typing import Any, Iterator, Optional
from uuid import uuid4

from app.core.settings import settings

# Correlates every record emitted while one training run (or fold) is active
run_id_var: ContextVar[str] = ContextVar("run_id", default="")


class JSONFormatter(logging.Formatter):
    """One JSON object per record, tagged with the active run_id."""

    def format(self, record: logging.LogRecord) -> str:
        log_data: dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        run_id = run_id_var.get()
        if run_id:
            log_data["run_id"] = run_id
        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)
        log_data.update(getattr(record, "extra_fields", {}))
        return json.dumps(log_data, default=str)


class StderrHandler(logging.StreamHandler):
    """Writes to whatever sys.stderr is at emit time; stdout carries command output."""

    def __init__(self) -> None:
        super().__init__(sys.stderr)

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value) -> None:
        pass


def setup_logging(level: Optional[str] = None) -> None:
    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, (level or settings.log_level).upper()))
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
    handler = StderrHandler()
    handler.setFormatter(JSONFormatter())
    root_logger.addHandler(handler)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


@contextmanager
def run_scope(run_id: Optional[str] = None) -> Iterator[str]:
    """Tag records with a fresh run_id until the block exits."""
    token = run_id_var.set(run_id or uuid4().hex[:12])
    try:
        yield run_id_var.get()
    finally:
        run_id_var.reset(token)


def log_event(logger: logging.Logger, event: str, **fields: Any) -> None:
    """Log a structured event; fields land at the top level of the JSON record."""
    logger.info(event, extra={"extra_fields": fields})
