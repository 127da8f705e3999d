"""Remote interactive shell over telnet.

Gives a bare telnet client the exact interactivity of the standard
interactive interpreter: ``>>> `` and ``... `` prompts, block
accumulation ended by a blank line, persistent shared namespace. All
evaluation crosses to the engine's serialized queue, so any number of
concurrent sessions stay consistent, and engine state survives
disconnects.
"""

from __future__ import annotations

import itertools
import threading
from typing import Optional

from .engine import Completeness, Engine, check_complete
from .logfile import LogSink, NullSink
from .tcpserve import TcpServer
from .telnet import KIND_TEXT, TelnetDecoder, escape_outgoing

PROMPT = ">>> "
CONTINUATION = "... "

STATE_NEED_LINE = "NeedLine"
STATE_IN_BLOCK = "InBlock"

_session_ids = itertools.count(1)


def _to_wire(text: str) -> bytes:
    """UTF-8 with CR LF line endings and IAC escaped."""
    normalized = text.replace("\r\n", "\n").replace("\n", "\r\n")
    return escape_outgoing(normalized.encode("utf-8", errors="backslashreplace"))


class ShellSession:
    def __init__(self, engine: Engine, peer: str):
        self.engine = engine
        self.peer = peer
        self.session_id = next(_session_ids)
        self.decoder = TelnetDecoder()
        self.input_buffer = bytearray()  # partial line bytes
        self.block_buffer: list[str] = []  # accumulated incomplete unit
        self.state = STATE_NEED_LINE
        self.closed = False

    def feed(self, data: bytes) -> bytes:
        """Process raw socket bytes; returns everything owed to the peer."""
        events, replies = self.decoder.feed(data)
        out = bytearray(replies)
        for event in events:
            if event.kind != KIND_TEXT:
                continue
            self.input_buffer += event.payload
            while True:
                idx = self.input_buffer.find(b"\n")
                if idx < 0:
                    break
                raw = bytes(self.input_buffer[:idx])
                del self.input_buffer[: idx + 1]
                line = raw.rstrip(b"\r").replace(b"\x00", b"").decode(
                    "utf-8", errors="replace"
                )
                out += self.on_line(line)
        return bytes(out)

    def on_line(self, line: str) -> bytes:
        """One completed input line; returns prompt/output bytes."""
        self.block_buffer.append(line)
        source = "\n".join(self.block_buffer)
        if check_complete(source) is Completeness.INCOMPLETE:
            self.state = STATE_IN_BLOCK
            return _to_wire(CONTINUATION)
        self.block_buffer.clear()
        self.state = STATE_NEED_LINE
        result = self.engine.eval_interactive(source)
        text = result.output
        if result.value_repr is not None:
            text += result.value_repr + "\n"
        if result.error is not None:
            text += result.error.traceback
            if not text.endswith("\n"):
                text += "\n"
        return _to_wire(text + PROMPT)

    def close(self) -> None:
        # engine namespace is shared and intentionally survives the session
        self.closed = True


class ShellServer:
    def __init__(self, engine: Engine, log: Optional[LogSink] = None, banner: str = ""):
        self.engine = engine
        self.log = log or NullSink()
        self.banner = banner
        self._server = TcpServer("shell", self._handle)
        self._sessions: set[ShellSession] = set()
        self._lock = threading.Lock()

    def start(self, port: int) -> int:
        actual = self._server.start(port)
        self.log.info("shell", f"interactive shell listening on port {actual}")
        return actual

    def stop(self) -> None:
        self._server.stop()

    @property
    def port(self) -> Optional[int]:
        return self._server.port

    def _handle(self, conn, addr) -> None:
        session = ShellSession(self.engine, peer=f"{addr[0]}:{addr[1]}")
        with self._lock:
            self._sessions.add(session)
        self.log.info("shell", f"session {session.session_id} connected from {session.peer}")
        try:
            conn.sendall(_to_wire(self.banner + "\n" + PROMPT) if self.banner else _to_wire(PROMPT))
            while True:
                data = conn.recv(4096)
                if not data:
                    return
                out = session.feed(data)
                if out:
                    conn.sendall(out)
        except OSError:
            pass
        finally:
            session.close()
            with self._lock:
                self._sessions.discard(session)
            self.log.info("shell", f"session {session.session_id} closed")
            try:
                conn.close()
            except OSError:
                pass
