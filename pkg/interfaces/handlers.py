""" handlers.py

Logging setup for scripts, plus a custom handler that appends log records
to a JSON Lines file so training and generation runs leave a
machine-readable event trail next to their artifacts.

# Requirements:
    - jsonlines: for writing the records

Example usage:

    setup_logging("run/events.jsonl", file_level="WARNING")
    logging.warning("Skipped batch 3 (non-finite loss)")

That prints the message to the console and appends
{"time": ..., "level": "WARNING", "module": ..., "message": ...} to
run/events.jsonl.
"""
import jsonlines
import logging
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s %(levelname)-8s %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"


class JsonLinesHandler(logging.Handler):
    """
    Python custom logging handler that appends each record as one JSON
    object to a .jsonl file
    """

    def __init__(self, path: Union[str, Path], level: Union[int, str] = logging.INFO) -> None:
        """
        Args:
            path: output .jsonl file, appended to
            level: minimum level of records to write
        """
        super().__init__()
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        logging.debug(f"Initializing JSON Lines logging handler at level {level} writing to {path}")
        self._time_format = logging.Formatter(datefmt=LOG_DATEFMT)
        self.setLevel(level)

    def emit(self, record: logging.LogRecord) -> None:
        payload = {
            "time": self._time_format.formatTime(record, LOG_DATEFMT),
            "level": record.levelname,
            "module": record.module,
            "message": record.getMessage(),
        }
        try:
            with jsonlines.open(self._path, mode="a") as writer:
                writer.write(payload)
        except Exception:
            self.handleError(record)


def setup_logging(
    log_file: Optional[Union[str, Path]] = None,
    level: Union[int, str] = logging.INFO,
    file_level: Union[int, str] = logging.INFO,
) -> None:
    """
    Console logging in the repository's format, plus an optional JSON Lines
    event file.

    Args:
        log_file: where to append JSON records; None for console only
        level: console level
        file_level: level of records written to `log_file`
    """
    logging.basicConfig(format=LOG_FORMAT, level=level, datefmt=LOG_DATEFMT)
    if log_file is not None:
        logging.getLogger().addHandler(JsonLinesHandler(log_file, file_level))
