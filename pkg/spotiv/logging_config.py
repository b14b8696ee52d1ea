"""
Logging for spotiv.

Library modules only create loggers under the ``spotiv`` namespace; nothing
is configured on import. The CLI and the demo call ``setup_logging`` once,
which attaches a single stderr handler to the package logger (stdout carries
reports).
"""

import json
import logging
import sys
from datetime import datetime, timezone
from typing import Any, Dict, Optional, TextIO

from spotiv.config import SpotIVConfig, get_config
from spotiv.errors import SpotIVError

PACKAGE_LOGGER = "spotiv"
_HANDLER_NAME = "spotiv-console"

# attributes every LogRecord has; anything else arrived through ``extra``
_RECORD_ATTRS = frozenset(vars(logging.makeLogRecord({}))) | {
    "message",
    "asctime",
    "taskName",
}

logging.getLogger(PACKAGE_LOGGER).addHandler(logging.NullHandler())


class StructuredFormatter(logging.Formatter):
    """One JSON object per record; ``extra`` fields become top-level keys."""

    def format(self, record: logging.LogRecord) -> str:
        entry: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key, value in record.__dict__.items():
            if key not in _RECORD_ATTRS:
                entry[key] = value
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str)


class StageFormatter(logging.Formatter):
    """Readable lines, tagged with [stage/code] when the record carries an error."""

    def __init__(self):
        super().__init__(
            fmt="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        code = getattr(record, "error_code", None)
        if code:
            line += f" [{getattr(record, 'error_stage', 'unknown')}/{code}]"
        return line


def setup_logging(
    config: Optional[SpotIVConfig] = None, stream: Optional[TextIO] = None
) -> logging.Logger:
    """
    Attach the console handler to the ``spotiv`` logger.

    Calling it again replaces the handler, so the level, format and stream
    follow the latest config. Other handlers, including the root logger's,
    are left alone.
    """
    config = config or get_config()
    level = getattr(logging, config.log_level.upper(), logging.INFO)

    package = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(package.handlers):
        if handler.get_name() == _HANDLER_NAME:
            package.removeHandler(handler)

    handler = logging.StreamHandler(stream if stream is not None else sys.stderr)
    handler.set_name(_HANDLER_NAME)
    handler.setFormatter(
        StructuredFormatter() if config.enable_structured_logging else StageFormatter()
    )
    package.addHandler(handler)
    package.setLevel(level)

    logging.getLogger("statsmodels").setLevel(logging.WARNING)
    package.debug(
        "Logging configured",
        extra={"level": config.log_level, "structured": config.enable_structured_logging},
    )
    return package


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


def log_performance(
    logger: logging.Logger, operation: str, duration: float, **kwargs
) -> None:
    """INFO record of a timed stage; keyword arguments travel as extra fields."""
    metrics = {
        "operation": operation,
        "duration_seconds": round(duration, 3),
        **kwargs,
    }
    logger.info(f"{operation} finished in {duration:.3f}s", extra=metrics)


def log_error_with_context(
    logger: logging.Logger,
    error: Exception,
    context: Dict[str, Any],
    exc_info: Optional[bool] = None,
) -> None:
    """
    ERROR record carrying the error's code, stage and the given context.

    Tracebacks are attached only for unexpected exceptions unless
    ``exc_info`` says otherwise; a SpotIVError is a diagnosed failure.
    """
    if exc_info is None:
        exc_info = not isinstance(error, SpotIVError)
    error_info = {
        "error_type": type(error).__name__,
        "error_code": getattr(error, "code", None),
        "error_stage": getattr(error, "stage", None),
        "error_context": context,
    }
    logger.error(str(error), extra=error_info, exc_info=exc_info)
