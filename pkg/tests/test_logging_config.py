"""
Tests for the package logger setup.
"""

import io
import json
import logging

import pytest

from spotiv.config import SpotIVConfig
from spotiv.errors import InputError
from spotiv.logging_config import (
    PACKAGE_LOGGER,
    get_logger,
    log_error_with_context,
    log_performance,
    setup_logging,
)


@pytest.fixture
def package_logger():
    logger = logging.getLogger(PACKAGE_LOGGER)
    handlers, level = list(logger.handlers), logger.level
    yield logger
    logger.handlers = handlers
    logger.setLevel(level)


def console_handlers(logger):
    return [h for h in logger.handlers if isinstance(h, logging.StreamHandler)]


class TestSetupLogging:
    def test_import_attaches_only_null_handler(self):
        root_before = list(logging.getLogger().handlers)
        import spotiv  # noqa: F401

        assert logging.getLogger().handlers == root_before
        assert any(
            isinstance(h, logging.NullHandler)
            for h in logging.getLogger(PACKAGE_LOGGER).handlers
        )

    def test_repeated_setup_keeps_one_handler(self, package_logger):
        setup_logging(SpotIVConfig(), stream=io.StringIO())
        setup_logging(SpotIVConfig(), stream=io.StringIO())
        assert len(console_handlers(package_logger)) == 1

    def test_level_follows_config(self, package_logger):
        setup_logging(SpotIVConfig(log_level="DEBUG"), stream=io.StringIO())
        assert package_logger.level == logging.DEBUG
        setup_logging(SpotIVConfig(log_level="WARNING"), stream=io.StringIO())
        assert package_logger.level == logging.WARNING

    def test_structured_records(self, package_logger):
        stream = io.StringIO()
        setup_logging(
            SpotIVConfig(log_level="INFO", enable_structured_logging=True), stream=stream
        )
        log_performance(get_logger("spotiv.services.sir"), "sir", 0.12345, M_hat=1)
        entry = json.loads(stream.getvalue().strip().splitlines()[-1])
        assert entry["logger"] == "spotiv.services.sir"
        assert entry["operation"] == "sir"
        assert entry["duration_seconds"] == 0.123
        assert entry["M_hat"] == 1


class TestLogErrorWithContext:
    def test_diagnosed_error_has_no_traceback(self, package_logger):
        stream = io.StringIO()
        setup_logging(SpotIVConfig(enable_structured_logging=False), stream=stream)
        try:
            raise InputError("p_z out of range", code="bad_p_z", stage="cli")
        except InputError as e:
            log_error_with_context(get_logger("spotiv.cli"), e, {"argv": []})
        text = stream.getvalue()
        assert "[cli/bad_p_z]" in text
        assert "Traceback" not in text

    def test_unexpected_error_has_traceback(self, package_logger):
        stream = io.StringIO()
        setup_logging(SpotIVConfig(enable_structured_logging=False), stream=stream)
        try:
            raise RuntimeError("boom")
        except RuntimeError as e:
            log_error_with_context(get_logger("spotiv.cli"), e, {})
        assert "Traceback" in stream.getvalue()
