"""
Logging for stefan-lab.

One package logger, ``stefan_lab``, gets a colorized console handler and
optionally a plain file handler; numerical modules log through children
such as ``stefan_lab.obstacle``.
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import colorlog

PACKAGE_LOGGER = 'stefan_lab'
CONSOLE_FORMAT = '%(log_color)s%(levelname)-8s%(reset)s %(blue)s%(name)s%(reset)s: %(message)s'
FILE_FORMAT = '%(asctime)s %(levelname)s %(name)s [%(threadName)s] %(message)s'
LOG_COLORS = {
    'DEBUG': 'cyan',
    'INFO': 'green',
    'WARNING': 'yellow',
    'ERROR': 'red',
    'CRITICAL': 'red,bg_white',
}


def _console_handler(format_string: Optional[str]) -> logging.Handler:
    handler = colorlog.StreamHandler(sys.stdout)
    handler.setFormatter(colorlog.ColoredFormatter(fmt=format_string or CONSOLE_FORMAT, log_colors=LOG_COLORS))
    return handler


def _file_handler(log_file: str) -> logging.Handler:
    # worker threads log too, hence the thread name
    Path(log_file).parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_file, encoding='utf-8')
    handler.setFormatter(logging.Formatter(fmt=FILE_FORMAT, datefmt='%Y-%m-%d %H:%M:%S'))
    return handler


def setup_logger(name: str = PACKAGE_LOGGER,
                 level: str = 'INFO',
                 log_file: Optional[str] = None,
                 format_string: Optional[str] = None) -> logging.Logger:
    """
    Configure a logger with color support; calling again replaces its handlers.

    Args:
        name: Logger name
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file path for file logging
        format_string: Custom console format string

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))
    logger.handlers.clear()
    logger.propagate = False
    logger.addHandler(_console_handler(format_string))

    if log_file:
        try:
            logger.addHandler(_file_handler(log_file))
        except OSError as e:
            logger.warning(f"Could not set up file logging to {log_file}: {e}")

    return logger


def get_logger(component: str) -> logging.Logger:
    """Child logger of the package logger, e.g. ``get_logger('obstacle')``."""
    return logging.getLogger(f'{PACKAGE_LOGGER}.{component}')


class ProgressLogger:
    """Status lines for service calls and scenario criteria; ``quiet`` mutes info."""

    def __init__(self, logger: logging.Logger, quiet: bool = False):
        self.logger = logger
        self.quiet = quiet

    def info(self, message: str):
        if not self.quiet:
            self.logger.info(message)

    def warning(self, message: str):
        self.logger.warning(message)

    def error(self, message: str):
        self.logger.error(message)

    def progress(self, message: str, current: float, total: float):
        """Fraction done of a step count or a time horizon."""
        if not self.quiet:
            fraction = current / total if total > 0 else 0.0
            self.logger.info(f"⏳ {message} {current:g}/{total:g} ({fraction:.0%})")

    def criterion(self, name: str, passed: bool, detail: str = ''):
        """Passing criteria log at info, failures always surface as warnings."""
        line = f"{'✅' if passed else '❌'} {name}" + (f" - {detail}" if detail else '')
        if passed:
            self.info(line)
        else:
            self.logger.warning(line)

    def scenario_summary(self, scenario: str, passed: int, total: int, elapsed: float):
        self.info(f"📊 {scenario}: {passed}/{total} criteria passed in {elapsed:.2f}s")
