import logging
import sys
import time
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterator, Optional

from config import LOG_LEVEL, LOG_FILE

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

COUNTERS = ('stages', 'targets', 'fits', 'detections', 'errors')


class ColoredFormatter(logging.Formatter):
    """Level names colored when stdout is a terminal"""

    COLORS = {
        'DEBUG': '\033[36m',
        'INFO': '\033[32m',
        'WARNING': '\033[33m',
        'ERROR': '\033[31m',
        'CRITICAL': '\033[35m',
    }
    RESET = '\033[0m'

    def format(self, record):
        if not sys.stdout.isatty():
            return super().format(record)
        plain = record.levelname
        record.levelname = f"{self.COLORS.get(plain, '')}{plain}{self.RESET}"
        try:
            return super().format(record)
        finally:
            record.levelname = plain


class MetricsLogger:
    """Stage timings and counters for one processing run"""

    def __init__(self):
        self.reset()

    def reset(self) -> None:
        """Start a new run: zero the counters and forget stage timings"""
        self.start_time = datetime.now()
        self.counters: Dict[str, int] = dict.fromkeys(COUNTERS, 0)
        self.stage_times: Dict[str, float] = {}

    def increment(self, metric: str, count: int = 1):
        if metric in self.counters:
            self.counters[metric] += count

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Time a block and record it under the stage name"""
        started = time.perf_counter()
        try:
            yield
        finally:
            self.stage_times[name] = time.perf_counter() - started
            self.counters['stages'] += 1

    def get_elapsed(self) -> float:
        return (datetime.now() - self.start_time).total_seconds()

    def get_summary(self) -> str:
        elapsed = self.get_elapsed()
        minutes, seconds = divmod(elapsed, 60.0)
        slowest = max(self.stage_times, key=self.stage_times.get) if self.stage_times else "-"
        counts = " | ".join(f"{name.capitalize()}: {self.counters[name]}" for name in COUNTERS)
        return f"Runtime: {int(minutes)}m {seconds:.1f}s | {counts} | Slowest: {slowest}"


def _handler(handler: logging.Handler, formatter_cls=logging.Formatter) -> logging.Handler:
    handler.setFormatter(formatter_cls(LOG_FORMAT, datefmt=DATE_FORMAT))
    return handler


def setup_logging(
    name: str = "sarctl",
    level: Optional[str] = None,
    log_file: Optional[Path] = None
) -> tuple[logging.Logger, MetricsLogger]:
    """
    Configure the sarctl logger

    Console output goes to stdout; a file handler is added when log_file
    (or SARCTL_LOG_FILE) is set.

    Returns:
        Tuple of (logger, metrics)
    """
    level = level or LOG_LEVEL
    log_file = log_file or LOG_FILE

    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper()))
    logger.handlers.clear()
    logger.addHandler(_handler(logging.StreamHandler(sys.stdout), ColoredFormatter))

    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        logger.addHandler(_handler(logging.FileHandler(log_file, encoding='utf-8')))

    return logger, MetricsLogger()


def set_level(level: str) -> None:
    """Change the level of the shared logger"""
    logger.setLevel(getattr(logging, level.upper()))


# Global instances
logger, metrics = setup_logging()
