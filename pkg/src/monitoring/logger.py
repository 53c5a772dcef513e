import logging
import sys
from datetime import datetime
from typing import Optional, Union
from src.config import LOGS_DIR, LOG_LEVEL

RESET = '\033[0m'
BOLD = '\033[1m'

# One colour per level; the rest of the line format is shared
LEVEL_COLORS = {
    logging.DEBUG: '\033[36m',       # cyan
    logging.INFO: '\033[32m',        # green
    logging.WARNING: '\033[33m',     # yellow
    logging.ERROR: '\033[31m',       # red
    logging.CRITICAL: '\033[91m' + BOLD,
}

LINE_FORMAT = '%(asctime)s - %(name)s - [%(levelname)s] %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


class ColoredFormatter(logging.Formatter):
    """Console formatter that paints the whole line by level"""

    def __init__(self):
        super().__init__(LINE_FORMAT, datefmt=DATE_FORMAT)

    def format(self, record):
        line = super().format(record)
        color = LEVEL_COLORS.get(record.levelno)
        return f"{color}{line}{RESET}" if color else line


def _resolve_level(level: Optional[Union[int, str]]) -> int:
    if level is None:
        level = LOG_LEVEL
    if isinstance(level, str):
        # getLevelNamesMapping() is 3.11+; it returns a copy of _nameToLevel.
        mapping = getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))()
        return mapping.get(level.upper(), logging.INFO)
    return level


def setup_logger(name: str, level: Optional[Union[int, str]] = None) -> logging.Logger:
    """
    Coloured console + daily file logger, configured once per name.

    Usage:
        from src.monitoring.logger import setup_logger
        logger = setup_logger(__name__)
        logger.info("Tournament recorded")
    """
    logger = logging.getLogger(name)
    resolved = _resolve_level(level)
    logger.setLevel(resolved)

    # Avoid duplicate handlers
    if logger.handlers:
        return logger

    LOGS_DIR.mkdir(parents=True, exist_ok=True)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(resolved)
    console_handler.setFormatter(ColoredFormatter())

    log_file = LOGS_DIR / f"espl_{datetime.now().strftime('%Y%m%d')}.log"
    file_handler = logging.FileHandler(log_file)
    file_handler.setLevel(resolved)
    file_handler.setFormatter(logging.Formatter(LINE_FORMAT, datefmt=DATE_FORMAT))

    logger.addHandler(console_handler)
    logger.addHandler(file_handler)
    logger.propagate = False

    return logger
