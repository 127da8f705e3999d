"""Line-protocol integration bus for third-party processes.

External publishers connect over TCP and send ``PUB <topic> <payload>``
lines; each is answered with ``OK`` or ``ERR <reason>``. Messages on the
``node_status`` topic are handed to the script callback
``onNodeStatusUpdate(source, timestamp, payload)``; the internal
``tilt_scan`` topic feeds ``onTiltScanData(scan)``. Anything else is
dropped with a DEBUG note — there is no outbound subscription surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .engine import Engine
from .logfile import LogSink, NullSink
from .tcpserve import TcpServer

TOPIC_NODE_STATUS = "node_status"
TOPIC_TILT_SCAN = "tilt_scan"
MAX_TOPIC_LEN = 64
MAX_LINE_BYTES = 1 << 20


@dataclass
class BusMessage:
    topic: str
    payload: str
    timestamp: float
    source: str


class NodeBus:
    def __init__(self, engine: Engine, now: Callable[[], float], log: Optional[LogSink] = None):
        self.engine = engine
        self.now = now
        self.log = log or NullSink()
        self._server = TcpServer("node-bus", self._handle)

    def start(self, port: int) -> int:
        actual = self._server.start(port)
        self.log.info("node_bus", f"listening on port {actual}")
        return actual

    def stop(self) -> None:
        self._server.stop()

    @property
    def port(self) -> Optional[int]:
        return self._server.port

    # -- dispatch ----------------------------------------------------------

    def publish(self, msg: BusMessage, scan=None) -> None:
        if msg.topic == TOPIC_NODE_STATUS:
            self.engine.invoke_callback(
                "onNodeStatusUpdate", [msg.source, msg.timestamp, msg.payload]
            )
        elif msg.topic == TOPIC_TILT_SCAN and scan is not None:
            self.engine.invoke_callback("onTiltScanData", [scan])
        else:
            self.log.debug("node_bus", f"dropped message on topic {msg.topic!r} from {msg.source}")

    def publish_scan(self, scan) -> None:
        """Internal 10 Hz tilt-scan traffic riding the same dispatch path."""
        msg = BusMessage(TOPIC_TILT_SCAN, "", self.now(), "internal")
        self.publish(msg, scan=scan)

    # -- line protocol -----------------------------------------------------

    def _parse_line(self, line: bytes, source: str) -> tuple[Optional[BusMessage], bytes]:
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError:
            return None, b"ERR bad-line\n"
        parts = text.split(" ", 2)
        if len(parts) != 3 or parts[0] != "PUB":
            return None, b"ERR bad-line\n"
        _, topic, payload = parts
        if not topic or len(topic) > MAX_TOPIC_LEN or any(c.isspace() for c in topic):
            return None, b"ERR bad-topic\n"
        return BusMessage(topic, payload, self.now(), source), b"OK\n"

    def _handle(self, conn, addr) -> None:
        source = f"{addr[0]}:{addr[1]}"
        buffer = bytearray()
        try:
            while True:
                chunk = conn.recv(4096)
                if not chunk:
                    return
                buffer += chunk
                if len(buffer) > MAX_LINE_BYTES:
                    conn.sendall(b"ERR line-too-long\n")
                    return
                while True:
                    idx = buffer.find(b"\n")
                    if idx < 0:
                        break
                    line = bytes(buffer[:idx]).rstrip(b"\r")
                    del buffer[: idx + 1]
                    msg, reply = self._parse_line(line, source)
                    if msg is not None:
                        self.publish(msg)
                    conn.sendall(reply)
        except OSError:
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass
