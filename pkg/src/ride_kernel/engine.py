"""Embedded scripting engine.

One engine per service process hosts a shared script namespace, a registry
of host functions exposed under a single module name (default ``robot``),
and five callback slots scripts can fill. Every piece of script code (REPL
units, callbacks, the startup script) runs on one dedicated worker thread,
so script execution is serialized by construction and a crashing script
can never take another thread down with it.
"""

from __future__ import annotations

import ast
import codeop
import contextlib
import io
import os
import queue
import sys
import threading
import traceback
from concurrent.futures import Future
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Optional

from .logfile import LogSink, NullSink

CALLBACK_SLOTS = (
    "onRemoteCommand",
    "onNodeStatusUpdate",
    "onTiltScanData",
    "onMoveArmActionComplete",
    "onTimer",
)

OUTPUT_LIMIT = 1 << 20  # bytes of captured print stream per evaluation
TRUNCATION_MARKER = "\n[output truncated at 1 MiB]\n"

DEFAULT_MODULE_NAME = "robot"
STARTUP_BASENAME = "main"
SOURCE_EXTENSION = ".py"


class EngineError(Exception):
    pass


class EngineInitFailure(EngineError):
    pass


class SingletonViolation(EngineError):
    pass


class UnknownSlot(EngineError):
    pass


class Completeness(Enum):
    COMPLETE = "Complete"
    INCOMPLETE = "Incomplete"
    INVALID = "Invalid"


class EvalStatus(Enum):
    COMPLETE = "Complete"
    INCOMPLETE = "Incomplete"
    ERROR = "Error"


@dataclass
class EvalError:
    kind: str
    message: str
    traceback: str


@dataclass
class EvalResult:
    output: str
    value_repr: Optional[str]
    error: Optional[EvalError]
    status: EvalStatus


@dataclass
class LoadReport:
    found: bool
    error: Optional[EvalError] = None


class _BoundedWriter(io.TextIOBase):
    """Size-capped text sink protecting the shell transport."""

    def __init__(self, limit: int = OUTPUT_LIMIT):
        self._limit = limit
        self._parts: list[str] = []
        self._size = 0
        self.truncated = False

    def writable(self) -> bool:
        return True

    def write(self, text: str) -> int:
        if not self.truncated:
            room = self._limit - self._size
            if len(text) <= room:
                self._parts.append(text)
                self._size += len(text)
            else:
                self._parts.append(text[:room])
                self._size = self._limit
                self.truncated = True
        return len(text)

    def value(self) -> str:
        out = "".join(self._parts)
        return out + TRUNCATION_MARKER if self.truncated else out


def check_complete(source: str) -> Completeness:
    """Classify source as a complete unit, an open block, or a syntax error.

    Follows the interactive interpreter's accumulation rules: a compound
    statement stays incomplete until terminated, while a multi-statement
    body (which can only arrive programmatically) counts as complete.
    """
    try:
        code = codeop.compile_command(source, "<remote>", "single")
    except (SyntaxError, OverflowError, ValueError):
        try:
            ast.parse(source, "<remote>", "exec")
            return Completeness.COMPLETE
        except (SyntaxError, ValueError):
            return Completeness.INVALID
    return Completeness.COMPLETE if code is not None else Completeness.INCOMPLETE


_boot_lock = threading.Lock()
_active_engine: Optional["Engine"] = None


def boot(sink: Optional[LogSink] = None, module_name: str = DEFAULT_MODULE_NAME) -> "Engine":
    """Create the process-wide engine; a second live engine is refused."""
    global _active_engine
    with _boot_lock:
        if _active_engine is not None:
            raise SingletonViolation("an engine is already running in this process")
        engine = Engine(sink=sink, module_name=module_name)
        _active_engine = engine
    engine._start()
    engine.log.info("engine", f"engine booted; host module {module_name!r}")
    return engine


def open_log_sink(path: str) -> LogSink:
    try:
        return LogSink(path)
    except OSError as exc:
        raise EngineInitFailure(f"cannot open log file {path!r}: {exc}") from exc


class Engine:
    """Shared namespace plus the serialized script execution queue.

    Construct via :func:`boot`, never directly, so the per-process
    singleton contract holds.
    """

    def __init__(self, sink: Optional[LogSink], module_name: str):
        self.log = sink if sink is not None else NullSink()
        self.module_name = module_name
        self.namespace: dict[str, Any] = {"__name__": "__console__", "__doc__": None}
        self.api_registry: dict[str, Callable] = {}
        self._slots: dict[str, Optional[Callable]] = {s: None for s in CALLBACK_SLOTS}
        self._queue: queue.Queue = queue.Queue()
        self._thread: Optional[threading.Thread] = None
        self._stopped = False

    # -- lifecycle ---------------------------------------------------------

    def _start(self) -> None:
        self._thread = threading.Thread(target=self._worker, name="engine", daemon=True)
        self._thread.start()

    def shutdown(self) -> None:
        global _active_engine
        if self._stopped:
            return
        self._stopped = True
        self._queue.put(None)
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        with _boot_lock:
            if _active_engine is self:
                _active_engine = None

    def _worker(self) -> None:
        while True:
            item = self._queue.get()
            try:
                if item is None:
                    return
                fn, args, future = item
                try:
                    result = fn(*args)
                except BaseException as exc:  # worker must survive anything
                    if future is not None:
                        future.set_exception(exc)
                    else:
                        self.log.error(
                            "engine", "internal job failed: " + traceback.format_exc()
                        )
                else:
                    if future is not None:
                        future.set_result(result)
            finally:
                self._queue.task_done()

    def submit(self, fn: Callable, *args: Any) -> Future:
        """Queue work onto the engine execution context."""
        future: Future = Future()
        self._queue.put((fn, args, future))
        return future

    def post(self, fn: Callable, *args: Any) -> None:
        """Fire-and-forget variant of submit."""
        self._queue.put((fn, args, None))

    def drain(self) -> None:
        """Block until every queued work item has executed."""
        self._queue.join()

    # -- host API ------------------------------------------------------------

    def bind_module(self, module: Any) -> None:
        """Expose the host module object in the script namespace."""
        self.namespace[self.module_name] = module

    def register_api(self, name: str, fn: Callable) -> None:
        self.api_registry[name] = fn

    # -- callbacks -------------------------------------------------------------

    def set_callback(self, slot: str, fn: Optional[Callable]) -> None:
        if slot not in self._slots:
            raise UnknownSlot(slot)
        if fn is not None and not callable(fn):
            raise TypeError(f"{slot} must be callable or None")
        self._slots[slot] = fn

    def get_callback(self, slot: str) -> Optional[Callable]:
        if slot not in self._slots:
            raise UnknownSlot(slot)
        return self._slots[slot]

    def invoke_callback(self, slot: str, args: list) -> None:
        """Run the slot's script function asynchronously; empty slot is a no-op."""
        fn = self.get_callback(slot)
        if fn is None:
            return
        self.post(self._run_callback, slot, fn, args)

    def _run_callback(self, slot: str, fn: Callable, args: list) -> None:
        try:
            fn(*args)
        except BaseException:
            self.log.error("engine", f"callback {slot} raised:\n" + self._script_traceback())

    # -- evaluation -------------------------------------------------------------

    def eval_interactive(self, source: str) -> EvalResult:
        """Evaluate one REPL unit on the engine thread and wait for the result."""
        return self.submit(self._eval_unit, source).result()

    def _eval_unit(self, source: str) -> EvalResult:
        completeness = check_complete(source)
        if completeness is Completeness.INCOMPLETE:
            return EvalResult("", None, None, EvalStatus.INCOMPLETE)

        buffer = _BoundedWriter()
        try:
            tree = ast.parse(source, "<remote>", "exec")
        except (SyntaxError, ValueError, OverflowError) as exc:
            return EvalResult("", None, self._format_compile_error(exc), EvalStatus.ERROR)

        last_expr = None
        if tree.body and isinstance(tree.body[-1], ast.Expr):
            last_expr = ast.Expression(tree.body.pop().value)

        value_repr = None
        error = None
        with contextlib.redirect_stdout(buffer), contextlib.redirect_stderr(buffer):
            try:
                if tree.body:
                    exec(compile(tree, "<remote>", "exec"), self.namespace)
                if last_expr is not None:
                    value = eval(compile(last_expr, "<remote>", "eval"), self.namespace)
                    if value is not None:
                        value_repr = repr(value)
                        self.namespace["_"] = value
            except BaseException as exc:
                error = EvalError(
                    kind=type(exc).__name__,
                    message=str(exc),
                    traceback=self._script_traceback(),
                )
        status = EvalStatus.ERROR if error is not None else EvalStatus.COMPLETE
        return EvalResult(buffer.value(), value_repr, error, status)

    @staticmethod
    def _format_compile_error(exc: BaseException) -> EvalError:
        text = "".join(traceback.format_exception_only(type(exc), exc))
        return EvalError(kind=type(exc).__name__, message=str(exc), traceback=text)

    @staticmethod
    def _script_traceback() -> str:
        """Current exception formatted with engine-internal frames dropped."""
        etype, value, tb = sys.exc_info()
        if tb is not None:
            tb = tb.tb_next  # skip the engine's own exec/call frame
        return "".join(traceback.format_exception(etype, value, tb))

    # -- startup script ------------------------------------------------------------

    def load_startup_script(self, scripts_dir: str, basename: str = STARTUP_BASENAME) -> LoadReport:
        """Execute ``<scripts_dir>/<basename>.py`` if present; never raises."""
        path = os.path.join(scripts_dir, basename + SOURCE_EXTENSION)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                source = fh.read()
        except FileNotFoundError:
            self.log.info("engine", f"no startup script at {path}")
            return LoadReport(found=False)
        except OSError as exc:
            self.log.error("engine", f"cannot read startup script {path}: {exc}")
            return LoadReport(found=False)

        report = self.submit(self._run_startup, path, source).result()
        if report.error is None:
            self.log.info("engine", f"startup script {path} loaded")
        else:
            self.log.error(
                "engine", f"startup script {path} failed:\n{report.error.traceback}"
            )
        return report

    def _run_startup(self, path: str, source: str) -> LoadReport:
        buffer = _BoundedWriter()
        with contextlib.redirect_stdout(buffer), contextlib.redirect_stderr(buffer):
            try:
                exec(compile(source, path, "exec"), self.namespace)
            except BaseException as exc:
                error = EvalError(
                    kind=type(exc).__name__,
                    message=str(exc),
                    traceback=self._script_traceback(),
                )
                return LoadReport(found=True, error=error)
            finally:
                output = buffer.value()
                if output:
                    self.log.info("engine", f"startup output: {output}")
        return LoadReport(found=True)
