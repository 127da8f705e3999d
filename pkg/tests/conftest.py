"""Shared fixtures: a virtual-time kernel on ephemeral ports plus socket helpers."""

from __future__ import annotations

import json
import socket
import time

import pytest

from ride_kernel import protocol
from ride_kernel.config import ServiceConfig
from ride_kernel.kernel import RideKernel
from ride_kernel.protocol import MsgType, WireFrame


def make_config(tmp_path, **overrides) -> ServiceConfig:
    base = dict(
        shell_port=0,
        client_port=0,
        ws_port=0,
        bus_port=0,
        scripts_dir=str(tmp_path / "scripts"),
        data_dir=str(tmp_path / "data"),
        log_file=str(tmp_path / "ride.log"),
        virtual_time=True,
    )
    base.update(overrides)
    return ServiceConfig(**base)


@pytest.fixture
def kernel(tmp_path):
    k = RideKernel(make_config(tmp_path))
    k.start()
    yield k
    k.stop()


def read_until(sock: socket.socket, token: bytes, timeout: float = 5.0) -> bytes:
    sock.settimeout(timeout)
    buf = b""
    deadline = time.monotonic() + timeout
    while token not in buf:
        if time.monotonic() > deadline:
            raise TimeoutError(f"token {token!r} not seen; got {buf!r}")
        chunk = sock.recv(4096)
        if not chunk:
            raise ConnectionError(f"peer closed; got {buf!r}")
        buf += chunk
    return buf


def connect_shell(kernel: RideKernel) -> socket.socket:
    sock = socket.create_connection(("127.0.0.1", kernel.ports()["shell"]), timeout=5)
    read_until(sock, b">>> ")
    return sock


def shell_eval(sock: socket.socket, line: str, timeout: float = 5.0) -> bytes:
    """Send one line, return everything up to and including the next prompt."""
    sock.sendall(line.encode() + b"\r\n")
    return read_until(sock, b">>> ", timeout=timeout)


class ProtoClient:
    """Minimal test client for the framed TCP protocol."""

    def __init__(self, port: int, timeout: float = 5.0):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=timeout)
        self.buffer = b""
        self.seq = 0

    def send(self, msg_type: MsgType, payload=b"") -> int:
        if isinstance(payload, dict):
            payload = json.dumps(payload).encode()
        seq = self.seq
        self.seq += 1
        self.sock.sendall(protocol.encode(WireFrame(int(msg_type), seq, payload)))
        return seq

    def recv_frames(self, count: int = 1, timeout: float = 5.0) -> list[WireFrame]:
        self.sock.settimeout(timeout)
        frames: list[WireFrame] = []
        deadline = time.monotonic() + timeout
        while len(frames) < count:
            if time.monotonic() > deadline:
                raise TimeoutError(f"only {len(frames)}/{count} frames")
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("peer closed")
            self.buffer += chunk
            got, self.buffer = protocol.decode(self.buffer)
            frames.extend(got)
        return frames

    def recv_until_type(self, msg_type: MsgType, timeout: float = 5.0) -> WireFrame:
        deadline = time.monotonic() + timeout
        while True:
            remaining = max(0.1, deadline - time.monotonic())
            for frame in self.recv_frames(1, timeout=remaining):
                if frame.msg_type == int(msg_type):
                    return frame
            if time.monotonic() > deadline:
                raise TimeoutError(f"no frame of type {msg_type}")

    def drain_frames(self, duration: float = 0.3) -> list[WireFrame]:
        """Collect whatever arrives within a short wall-clock window."""
        frames: list[WireFrame] = []
        self.sock.settimeout(0.05)
        deadline = time.monotonic() + duration
        while time.monotonic() < deadline:
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                break
            if not chunk:
                break
            self.buffer += chunk
            got, self.buffer = protocol.decode(self.buffer)
            frames.extend(got)
        return frames

    def handshake(self) -> WireFrame:
        self.send(MsgType.HELLO, {"name": "test"})
        return self.recv_until_type(MsgType.WELCOME)

    def subscribe(self, *streams: str) -> None:
        self.send(MsgType.SUBSCRIBE, {"streams": list(streams)})
        self.sync()

    def sync(self) -> None:
        """Barrier: frames are handled in order per connection, so an ACK
        proves every previously sent frame has been processed."""
        self.send(MsgType.COMMAND, {"cmd": "__sync__"})
        self.recv_until_type(MsgType.COMMAND_ACK)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def json_payload(frame: WireFrame) -> dict:
    return json.loads(frame.payload.decode("utf-8"))
