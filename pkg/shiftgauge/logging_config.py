"""
Logging configuration for the experiment harness.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

from shiftgauge.constants import (
    LOG_BACKUP_COUNT,
    LOG_DATE_FORMAT,
    LOG_FILENAME,
    LOG_FORMAT,
    LOG_MAX_BYTES,
    LOGS_DIR_NAME,
)


def setup_logging(
    out_dir: Optional[Union[str, Path]] = None,
    file_level: int = logging.DEBUG,
    console_level: int = logging.WARNING,
) -> logging.Logger:
    """
    Configure the "shiftgauge" logger with file and console handlers.

    Args:
        out_dir: Run output directory; the log goes to <out_dir>/logs/shiftgauge.log.
            No file handler is installed when omitted.
        file_level: Log level for the file handler (default: DEBUG - logs everything)
        console_level: Log level for the console handler on stderr

    Returns:
        logger: Configured logger instance
    """
    logger = logging.getLogger("shiftgauge")
    logger.setLevel(logging.DEBUG)  # Set to lowest level, handlers will filter

    # Remove existing handlers to avoid duplicates
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    if out_dir is not None:
        logs_dir = Path(out_dir) / LOGS_DIR_NAME
        logs_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            logs_dir / LOG_FILENAME, maxBytes=LOG_MAX_BYTES, backupCount=LOG_BACKUP_COUNT, encoding="utf-8"
        )
        file_handler.setLevel(file_level)
        file_handler.setFormatter(
            logging.Formatter(
                "%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )
        logger.addHandler(file_handler)

    # stdout carries results, so diagnostics go to stderr
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(console_level)
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
    logger.addHandler(console_handler)

    return logger
