"""
Logging setup shared by the CLI and run directories
"""
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"
ROOT_LOGGER = "src"


def setup_logging(level: int = logging.INFO, log_file: Optional[Union[str, Path]] = None) -> logging.Logger:
    """
    Configure the package logger once

    The console handler shows records at level and above; the logger itself
    passes everything so file handlers can capture debug output.
    """
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(logging.DEBUG)
    formatter = logging.Formatter(LOG_FORMAT)
    console = next((h for h in logger.handlers if getattr(h, "_console", False)), None)
    if console is None:
        console = logging.StreamHandler(sys.stderr)
        console._console = True
        logger.addHandler(console)
    else:
        console.setStream(sys.stderr)
    console.setLevel(level)
    console.setFormatter(formatter)
    if log_file is not None:
        handler = logging.FileHandler(log_file, encoding="utf-8")
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    return logger


@contextmanager
def log_to_file(path: Union[str, Path], level: int = logging.DEBUG) -> Iterator[logging.Handler]:
    """Copy package log records into path while the block runs"""
    logger = logging.getLogger(ROOT_LOGGER)
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    previous = logger.level
    if logger.level == logging.NOTSET or logger.level > level:
        logger.setLevel(level)
    logger.addHandler(handler)
    try:
        yield handler
    finally:
        logger.removeHandler(handler)
        logger.setLevel(previous)
        handler.close()
