import json
import logging
import sys
from dataclasses import dataclass
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from transitveil.config import get_config

ROOT_LOGGER = 'transitveil'

# Attributes every LogRecord carries; anything else came in through `extra`.
_RESERVED = set(vars(logging.LogRecord('', 0, '', 0, '', (), None))) | {'message', 'asctime'}


@dataclass
class LogConfig:
    """Logging configuration settings."""
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    date_format: str = "%Y-%m-%d %H:%M:%S"
    log_file: Optional[str] = None
    max_bytes: int = 10 * 1024 * 1024  # 10MB
    backup_count: int = 5
    console: bool = True
    json_format: bool = False
    include_traceback: bool = True
    include_extra: bool = True

    @classmethod
    def from_config(cls, cfg=None) -> "LogConfig":
        cfg = cfg or get_config()
        return cls(
            level=cfg.LOG_LEVEL,
            format=cfg.LOG_FORMAT,
            date_format=cfg.LOG_DATE_FORMAT,
            log_file=cfg.LOG_FILE,
            json_format=cfg.LOG_JSON,
        )


class JSONFormatter(logging.Formatter):
    """JSON formatter for structured logging."""

    def __init__(self, include_traceback: bool = True, include_extra: bool = True):
        """Initialize JSON formatter.

        Args:
            include_traceback: Whether to include traceback in JSON output
            include_extra: Whether to include extra fields in JSON output
        """
        super().__init__()
        self.include_traceback = include_traceback
        self.include_extra = include_extra

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno
        }

        if self.include_extra:
            for key, value in vars(record).items():
                if key not in _RESERVED and not key.startswith('_'):
                    log_data[key] = value

        if self.include_traceback and record.exc_info:
            log_data["traceback"] = self.formatException(record.exc_info)

        return json.dumps(log_data, default=str)


def setup_logging(config: Optional[LogConfig] = None) -> logging.Logger:
    """Configure the package logger.

    Console output goes to stderr so that CSV written to stdout stays clean.
    Calling this again replaces previously installed handlers.

    Args:
        config: Logging settings; defaults come from the active Config class

    Returns:
        The configured ``transitveil`` logger
    """
    config = config or LogConfig.from_config()
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(config.level.upper())

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    if config.json_format:
        formatter = JSONFormatter(config.include_traceback, config.include_extra)
    else:
        formatter = logging.Formatter(config.format, config.date_format)

    if config.console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if config.log_file:
        Path(config.log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            config.log_file,
            maxBytes=config.max_bytes,
            backupCount=config.backup_count
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger
