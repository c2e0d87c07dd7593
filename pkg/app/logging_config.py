"""
Logging for the toolkit.

The main process writes to logs/toolkit.log (rotated at midnight, old days
moved to logs/archive/) and, with DEBUG on, to the console as well. Each CLI
run mirrors the root logger into run.log inside its output directory.
Replicate worker processes never touch the shared log file: they report
warnings and errors on stderr only.
"""

import logging
import shutil
import sys
from datetime import datetime
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path

from app.config import settings

LOGS_DIR = settings.LOG_DIR
ARCHIVE_DIR = LOGS_DIR / "archive"
LOG_FILE = LOGS_DIR / "toolkit.log"
RUN_LOG_NAME = "run.log"

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s:%(funcName)s | %(message)s"
WORKER_FORMAT = "%(asctime)s | %(levelname)-8s | worker %(process)d | %(name)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Held at WARNING
NOISY_LOGGERS = [
    "sqlalchemy",
    "sqlalchemy.engine",
    "sqlalchemy.pool",
    "sqlalchemy.orm",
    "hypothesis",
    "matplotlib",
    "numexpr",
    "concurrent.futures",
]


class ArchivingRotatingFileHandler(TimedRotatingFileHandler):
    """Midnight rotation that moves the finished day into archive_dir as <stem>_<date>[_k].log."""

    def __init__(self, filename: str, archive_dir: Path, **kwargs):
        self.archive_dir = archive_dir
        self.archive_prefix = Path(filename).stem
        super().__init__(filename, when="midnight", interval=1, backupCount=0, **kwargs)

    def archive_path_for(self, stamp: str) -> Path:
        base = f"{self.archive_prefix}_{stamp}"
        candidate = self.archive_dir / f"{base}.log"
        suffix = 0
        while candidate.exists():
            suffix += 1
            candidate = self.archive_dir / f"{base}_{suffix}.log"
        return candidate

    def doRollover(self) -> None:
        if self.stream:
            self.stream.close()
            self.stream = None  # type: ignore[assignment]

        finished = Path(self.baseFilename)
        if finished.exists() and finished.stat().st_size > 0:
            self.archive_dir.mkdir(parents=True, exist_ok=True)
            target = self.archive_path_for(datetime.now().strftime("%Y-%m-%d"))
            try:
                shutil.move(str(finished), str(target))
            except OSError:
                # Cross-device archive directory
                shutil.copy2(str(finished), str(target))
                finished.unlink()

        self.stream = self._open()


def _default_level() -> int:
    return logging.DEBUG if settings.DEBUG else logging.INFO


def _formatter(fmt: str = LOG_FORMAT) -> logging.Formatter:
    return logging.Formatter(fmt, datefmt=DATE_FORMAT)


def _main_handlers(level: int) -> list[logging.Handler]:
    LOGS_DIR.mkdir(parents=True, exist_ok=True)
    ARCHIVE_DIR.mkdir(parents=True, exist_ok=True)
    handlers: list[logging.Handler] = [
        ArchivingRotatingFileHandler(filename=str(LOG_FILE), archive_dir=ARCHIVE_DIR, encoding="utf-8")
    ]
    if settings.DEBUG:
        handlers.append(logging.StreamHandler())
    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(_formatter())
    return handlers


def setup_logging(name: str | None = None, level: int | None = None) -> logging.Logger:
    """
    Configure a logger (root by default) with the toolkit's handlers.

    Calling it again for a logger that already has handlers only updates
    the level.

    Args:
        name: Logger name (None for the root logger)
        level: Log level (default: DEBUG with settings.DEBUG, else INFO)
    """
    level = _default_level() if level is None else level
    logger = logging.getLogger(name)
    logger.setLevel(level)
    if not logger.handlers:
        for handler in _main_handlers(level):
            logger.addHandler(handler)
    silence_noisy_loggers()
    return logger


def silence_noisy_loggers() -> None:
    for noisy in NOISY_LOGGERS:
        third_party = logging.getLogger(noisy)
        third_party.setLevel(logging.WARNING)
        third_party.propagate = False


def configure_worker_logging() -> None:
    """
    Process-pool initializer: swap the inherited handlers for a stderr handler at WARNING.

    Several processes rotating one file would corrupt the archive, so workers
    leave toolkit.log and run.log to the parent.
    """
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)
    stderr = logging.StreamHandler(sys.stderr)
    stderr.setFormatter(_formatter(WORKER_FORMAT))
    root.addHandler(stderr)
    root.setLevel(logging.WARNING)


def attach_run_log(run_dir: Path, level: int = logging.INFO) -> logging.Handler:
    """
    Start copying root-logger records into run_dir/run.log.

    Returns:
        The handler; hand it to detach_run_log when the run ends
    """
    run_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(run_dir / RUN_LOG_NAME, encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(_formatter())
    logging.getLogger().addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    logging.getLogger().removeHandler(handler)
    handler.close()


def get_logger(name: str) -> logging.Logger:
    """
    Module logger; records propagate to the configured root.

    Usage:
        from app.logging_config import get_logger
        logger = get_logger(__name__)
    """
    return logging.getLogger(name)


setup_logging()
