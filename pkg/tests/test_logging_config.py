"""
Tests for the logging configuration module.
"""

import logging

import pytest

from app.logging_config import (
    ARCHIVE_DIR,
    LOG_FILE,
    LOGS_DIR,
    NOISY_LOGGERS,
    RUN_LOG_NAME,
    ArchivingRotatingFileHandler,
    attach_run_log,
    configure_worker_logging,
    detach_run_log,
    get_logger,
    setup_logging,
)


class TestGetLogger:
    """Tests for get_logger function."""

    def test_returns_named_logger(self):
        """Test that get_logger returns a logger with the module name."""
        logger = get_logger("app.services.simulator")
        assert isinstance(logger, logging.Logger)
        assert logger.name == "app.services.simulator"

    def test_same_name_returns_same_logger(self):
        """Test that calling get_logger twice returns one instance."""
        assert get_logger("same_name_test") is get_logger("same_name_test")


class TestSetupLogging:
    """Tests for setup_logging function."""

    def test_logger_has_archiving_handler(self):
        """Test that the logger writes through an ArchivingRotatingFileHandler."""
        logger = setup_logging("test_file_handler")
        assert any(isinstance(h, ArchivingRotatingFileHandler) for h in logger.handlers)

    def test_does_not_duplicate_handlers(self):
        """Test that repeated setup keeps one set of handlers."""
        name = "test_no_duplicate"
        for handler in logging.getLogger(name).handlers[:]:
            logging.getLogger(name).removeHandler(handler)
        first = len(setup_logging(name).handlers)
        second = len(setup_logging(name).handlers)
        assert first == second

    def test_directories(self):
        """Test the log and archive directory layout."""
        setup_logging("test_dirs")
        assert LOGS_DIR.exists()
        assert ARCHIVE_DIR.exists()
        assert LOG_FILE.parent == LOGS_DIR

    def test_noisy_loggers_silenced(self):
        """Test that third-party loggers are held at WARNING."""
        setup_logging("test_noisy")
        for name in NOISY_LOGGERS:
            assert logging.getLogger(name).level == logging.WARNING


class TestRunLog:
    """Tests for the per-run log file."""

    def test_attach_and_detach(self, tmp_path):
        """Test that root-logger output is mirrored into run.log while attached."""
        handler = attach_run_log(tmp_path / "run")
        get_logger("test_run_log").warning("inside the run")
        detach_run_log(handler)
        get_logger("test_run_log").warning("after the run")
        content = (tmp_path / "run" / RUN_LOG_NAME).read_text()
        assert "inside the run" in content
        assert "after the run" not in content
        assert handler not in logging.getLogger().handlers


class TestWorkerLogging:
    """Tests for the process-pool initializer."""

    def test_worker_logs_to_stderr_only(self):
        """Test that a worker drops file handlers and logs warnings to stderr."""
        root = logging.getLogger()
        saved_handlers, saved_level = root.handlers[:], root.level
        try:
            configure_worker_logging()
            assert root.level == logging.WARNING
            assert len(root.handlers) == 1
            assert not isinstance(root.handlers[0], logging.FileHandler)
        finally:
            for handler in root.handlers[:]:
                root.removeHandler(handler)
            for handler in saved_handlers:
                root.addHandler(handler)
            root.setLevel(saved_level)


class TestArchivingRotatingFileHandler:
    """Tests for the custom ArchivingRotatingFileHandler."""

    @pytest.fixture
    def handler(self, tmp_path):
        """Handler writing to a temporary log with its own archive."""
        h = ArchivingRotatingFileHandler(filename=str(tmp_path / "toolkit.log"), archive_dir=tmp_path / "archive")
        h.setFormatter(logging.Formatter("%(message)s"))
        logger = logging.getLogger(f"test_archiving_{tmp_path.name}")
        logger.addHandler(h)
        logger.setLevel(logging.DEBUG)
        yield h, logger, tmp_path
        logger.removeHandler(h)
        h.close()

    def test_rollover_archives_content(self, handler):
        """Test that rollover moves the old log into the archive and reopens."""
        h, logger, root = handler
        logger.info("before rollover")
        h.flush()
        h.doRollover()
        logger.info("after rollover")
        h.flush()
        archived = list((root / "archive").glob("toolkit_*.log"))
        assert len(archived) == 1
        assert "before rollover" in archived[0].read_text()
        assert "after rollover" in (root / "toolkit.log").read_text()

    def test_archive_names_are_unique(self, handler):
        """Test that a second rollover on one day gets a counter suffix."""
        h, logger, root = handler
        for i in range(2):
            logger.info(f"message {i}")
            h.flush()
            h.doRollover()
        names = sorted(p.name for p in (root / "archive").glob("*.log"))
        assert len(names) == 2
        assert any(name.endswith("_1.log") for name in names)

    def test_empty_log_not_archived(self, handler):
        """Test that an empty log leaves the archive untouched."""
        h, _, root = handler
        h.doRollover()
        assert not list((root / "archive").glob("*.log"))
