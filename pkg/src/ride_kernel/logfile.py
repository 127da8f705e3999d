"""Realtime line-oriented log subsystem.

Every record is exactly one line in the log file:

    YYYY-MM-DDTHH:MM:SS.mmmZ LEVEL [component] message

Newlines inside messages are escaped so the file stays parseable line by
line. The sink is safe for concurrent submission from any thread and
degrades to stderr if the file becomes unwritable.
"""

from __future__ import annotations

import re
import sys
import threading
from dataclasses import dataclass
from datetime import datetime, timezone

LEVELS = ("DEBUG", "INFO", "WARN", "ERROR")

_LINE_RE = re.compile(
    r"^(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{3}Z) "
    r"(DEBUG|INFO|WARN|ERROR) "
    r"\[([^\]]*)\] "
    r"(.*)$"
)


@dataclass
class LogRecord:
    timestamp: datetime
    level: str
    component: str
    message: str


def format_timestamp(ts: datetime) -> str:
    """ISO-8601 UTC with millisecond precision and a Z suffix."""
    ts = ts.astimezone(timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def format_record(record: LogRecord) -> str:
    msg = record.message.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r")
    return f"{format_timestamp(record.timestamp)} {record.level} [{record.component}] {msg}"


def parse_log_line(line: str) -> LogRecord:
    """Inverse of format_record; raises ValueError on anything malformed."""
    m = _LINE_RE.match(line.rstrip("\n"))
    if m is None:
        raise ValueError(f"unparseable log line: {line!r}")
    stamp, level, component, msg = m.groups()
    ts = datetime.strptime(stamp, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=timezone.utc)
    msg = msg.replace("\\r", "\r").replace("\\n", "\n").replace("\\\\", "\\")
    return LogRecord(timestamp=ts, level=level, component=component, message=msg)


class LogSink:
    """Append-only log file with immediate flush and a stderr fallback."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        # Raises OSError for the caller to turn into a boot failure.
        self._fh = open(path, "a", encoding="utf-8")

    def log(self, level: str, component: str, message: str) -> None:
        if level not in LEVELS:
            raise ValueError(f"unknown log level {level!r}")
        record = LogRecord(datetime.now(timezone.utc), level, component, message)
        line = format_record(record) + "\n"
        with self._lock:
            try:
                self._fh.write(line)
                self._fh.flush()
            except (OSError, ValueError):
                # ValueError covers writes after an external close; the log
                # subsystem must never take the service down.
                try:
                    sys.stderr.write(line)
                except OSError:
                    pass

    def debug(self, component: str, message: str) -> None:
        self.log("DEBUG", component, message)

    def info(self, component: str, message: str) -> None:
        self.log("INFO", component, message)

    def warn(self, component: str, message: str) -> None:
        self.log("WARN", component, message)

    def error(self, component: str, message: str) -> None:
        self.log("ERROR", component, message)

    def close(self) -> None:
        with self._lock:
            try:
                self._fh.close()
            except OSError:
                pass


class NullSink(LogSink):
    """Sink that drops everything; used where logging is optional."""

    def __init__(self):  # noqa: D107 - trivial
        self._lock = threading.Lock()
        self._fh = None

    def log(self, level: str, component: str, message: str) -> None:
        if level not in LEVELS:
            raise ValueError(f"unknown log level {level!r}")

    def close(self) -> None:
        pass
