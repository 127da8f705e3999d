"""Tiny threaded TCP accept-loop shared by the shell, client, and bus servers."""

from __future__ import annotations

import socket
import threading
from typing import Callable, Optional


class BindFailure(Exception):
    pass


class TcpServer:
    """Accepts connections on a background thread, one handler thread each.

    ``handler(conn, addr)`` owns the connection and must close it; stop()
    closes the listener and every connection still tracked.
    """

    def __init__(self, name: str, handler: Callable[[socket.socket, tuple], None]):
        self.name = name
        self.handler = handler
        self._listener: Optional[socket.socket] = None
        self._accept_thread: Optional[threading.Thread] = None
        self._conns: set[socket.socket] = set()
        self._lock = threading.Lock()
        self._stopping = False
        self.port: Optional[int] = None

    def start(self, port: int, host: str = "0.0.0.0") -> int:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((host, port))
        except OSError as exc:
            sock.close()
            raise BindFailure(f"{self.name}: cannot bind port {port}: {exc}") from exc
        sock.listen(128)
        self._listener = sock
        self.port = sock.getsockname()[1]
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name=f"{self.name}-accept", daemon=True
        )
        self._accept_thread.start()
        return self.port

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while True:
            try:
                conn, addr = self._listener.accept()
            except OSError:
                return  # listener closed
            with self._lock:
                if self._stopping:
                    conn.close()
                    return
                self._conns.add(conn)
            thread = threading.Thread(
                target=self._run_handler, args=(conn, addr), name=f"{self.name}-conn", daemon=True
            )
            thread.start()

    def _run_handler(self, conn: socket.socket, addr: tuple) -> None:
        try:
            self.handler(conn, addr)
        finally:
            self.discard(conn)

    def discard(self, conn: socket.socket) -> None:
        with self._lock:
            self._conns.discard(conn)
        try:
            conn.close()
        except OSError:
            pass

    def stop(self) -> None:
        with self._lock:
            self._stopping = True
            conns = list(self._conns)
            self._conns.clear()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
