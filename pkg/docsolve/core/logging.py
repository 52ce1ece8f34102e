"""
Logging helpers

All loggers live under the ``docsolve`` namespace so one call to
:func:`configure_logging` controls the whole toolkit.
"""
import json
import logging
import sys
from typing import Optional

ROOT_LOGGER = "docsolve"


class JsonLinesFormatter(logging.Formatter):
    """Render each record as one JSON object per line"""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        extra = getattr(record, "payload", None)
        if isinstance(extra, dict):
            payload.update(extra)
        return json.dumps(payload, sort_keys=True)


def get_logger(name: str) -> logging.Logger:
    """Get a logger below the toolkit namespace"""
    if name.startswith(ROOT_LOGGER):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


def configure_logging(level: str = "WARNING", json_lines: bool = False,
                      stream: Optional[object] = None) -> logging.Logger:
    """Install a single stderr handler on the toolkit logger"""
    root = logging.getLogger(ROOT_LOGGER)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(stream or sys.stderr)
    if json_lines:
        handler.setFormatter(JsonLinesFormatter())
    else:
        handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
    root.addHandler(handler)
    root.setLevel(level.upper())
    root.propagate = False
    return root
