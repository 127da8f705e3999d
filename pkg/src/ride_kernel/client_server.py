"""Client communication layer: framed TCP protocol plus WebSocket bridge.

Every client speaks the WireFrame protocol. Over TCP the frames ride a
byte stream (resumable decode); over the WebSocket bridge each binary
message is exactly one frame. Sessions subscribe to telemetry streams
(camera images, robot state, custom labels) fanned out at a fixed rate
from the simulation tick, and send COMMAND frames that are dispatched to
the script-side onRemoteCommand handler.

Slow consumers never stall anyone else: each session has a bounded send
queue; image/state frames overflow by dropping the oldest, custom and
control frames are never dropped, and the per-session drop counter is
reported in the next state frame.
"""

from __future__ import annotations

import itertools
import json
import threading
from collections import deque
from typing import Callable, Optional

from . import protocol
from .engine import Engine
from .logfile import LogSink, NullSink
from .protocol import MsgType, WireFrame
from .sim import CameraFrame, Simulator
from .tcpserve import TcpServer

SERVER_NAME = "ride-kernel"
QUEUE_LIMIT = 32
HEARTBEAT_TIMEOUT = 10.0  # seconds without inbound traffic after WELCOME

SUB_IMAGE = "image"
SUB_STATE = "state"
SUB_CUSTOM_ALL = "custom"
CUSTOM_PREFIX = "custom:"

_DROPPABLE = frozenset((int(MsgType.TELEMETRY_IMAGE), int(MsgType.TELEMETRY_STATE)))

_client_ids = itertools.count(1)


class _SendQueue:
    """Bounded frame queue; droppable kinds overflow oldest-first."""

    def __init__(self, limit: int = QUEUE_LIMIT):
        self._items: deque = deque()
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)
        self._limit = limit
        self._closed = False
        self.drops = 0

    def put(self, msg_type: int, data: bytes) -> None:
        with self._ready:
            if self._closed:
                return
            if len(self._items) >= self._limit:
                for i, (kind, _) in enumerate(self._items):
                    if kind in _DROPPABLE:
                        del self._items[i]
                        self.drops += 1
                        break
                # nothing droppable: the cap stretches rather than lose
                # custom or control frames
            self._items.append((msg_type, data))
            self._ready.notify()

    def get(self) -> Optional[tuple[int, bytes]]:
        with self._ready:
            while not self._items and not self._closed:
                self._ready.wait(timeout=0.5)
            if self._items:
                return self._items.popleft()
            return None  # closed and drained

    def close(self) -> None:
        with self._ready:
            self._closed = True
            self._ready.notify_all()


class Transport:
    """Minimal send/close surface shared by the TCP and WS paths."""

    def send_frame(self, data: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class TcpTransport(Transport):
    def __init__(self, conn):
        self.conn = conn

    def send_frame(self, data: bytes) -> None:
        self.conn.sendall(data)

    def close(self) -> None:
        try:
            self.conn.close()
        except OSError:
            pass


class WsTransport(Transport):
    def __init__(self, ws):
        self.ws = ws

    def send_frame(self, data: bytes) -> None:
        self.ws.send(data)

    def close(self) -> None:
        try:
            self.ws.close()
        except Exception:
            pass


class ClientSession:
    def __init__(self, hub: "ClientHub", transport: Transport, peer: str):
        self.hub = hub
        self.transport = transport
        self.peer = peer
        self.client_id = next(_client_ids)
        self.subscriptions: set[str] = set()
        self.welcomed = False
        self.last_activity_tick = hub.ticks_now()
        self.queue = _SendQueue()
        self.alive = True
        self._seq = itertools.count(0)
        self._writer = threading.Thread(
            target=self._write_loop, name=f"client-{self.client_id}-writer", daemon=True
        )
        self._writer.start()

    # -- outbound ------------------------------------------------------------

    def send(self, msg_type: MsgType, payload: bytes) -> None:
        self.queue.put(int(msg_type), payload)

    def send_json(self, msg_type: MsgType, obj) -> None:
        self.send(msg_type, json.dumps(obj).encode("utf-8"))

    def _write_loop(self) -> None:
        while True:
            item = self.queue.get()
            if item is None:
                return
            msg_type, payload = item
            frame = WireFrame(msg_type=msg_type, seq=next(self._seq), payload=payload)
            try:
                self.transport.send_frame(protocol.encode(frame))
            except Exception:
                self.hub.drop_session(self, reason="send failed")
                return

    # -- inbound -------------------------------------------------------------

    def handle_frame(self, frame: WireFrame) -> bool:
        """Process one inbound frame; False means the session must close."""
        self.last_activity_tick = self.hub.ticks_now()
        mtype = frame.msg_type
        if not self.welcomed:
            if mtype != MsgType.HELLO:
                self.send_json(MsgType.ERROR, {"error": "expected HELLO first"})
                return False
            self.welcomed = True
            self.send_json(
                MsgType.WELCOME,
                {
                    "server": SERVER_NAME,
                    "version": protocol.VERSION,
                    "rates": {"image_hz": self.hub.image_hz, "state_hz": self.hub.state_hz},
                },
            )
            return True
        if mtype == MsgType.HELLO:
            self.send_json(MsgType.ERROR, {"error": "duplicate HELLO ignored"})
            return True
        if mtype == MsgType.SUBSCRIBE or mtype == MsgType.UNSUBSCRIBE:
            return self._handle_subscription(frame, add=(mtype == MsgType.SUBSCRIBE))
        if mtype == MsgType.COMMAND:
            return self._handle_command(frame)
        if mtype == MsgType.HEARTBEAT:
            return True
        if mtype == MsgType.BYE:
            self.send_json(MsgType.BYE, {})
            return False
        self.send_json(MsgType.ERROR, {"error": f"unknown message type {mtype}"})
        return True

    def _handle_subscription(self, frame: WireFrame, add: bool) -> bool:
        try:
            obj = json.loads(frame.payload.decode("utf-8"))
            streams = obj["streams"]
            if not isinstance(streams, list):
                raise ValueError("streams must be a list")
            for stream in streams:
                if not isinstance(stream, str) or not (
                    stream in (SUB_IMAGE, SUB_STATE, SUB_CUSTOM_ALL)
                    or stream.startswith(CUSTOM_PREFIX)
                ):
                    raise ValueError(f"unknown stream {stream!r}")
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            self.send_json(MsgType.ERROR, {"error": f"bad subscription: {exc}"})
            return True
        if add:
            self.subscriptions.update(streams)
        else:
            self.subscriptions.difference_update(streams)
        return True

    def _handle_command(self, frame: WireFrame) -> bool:
        try:
            obj = json.loads(frame.payload.decode("utf-8"))
            cmd = obj["cmd"]
            if not isinstance(cmd, str):
                raise ValueError("cmd must be a string")
            if cmd == "joy":
                vx = float(obj.get("vx", 0.0))
                vy = float(obj.get("vy", 0.0))
                vtheta = float(obj.get("vtheta", 0.0))
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
            self.send_json(MsgType.ERROR, {"error": f"bad command: {exc}"})
            return True
        if cmd == "joy":
            # protocol-borne velocity drive; silently gated to joystick mode
            self.hub.sim.set_base_velocity(vx, vy, vtheta)
        accepted = self.hub.engine.get_callback("onRemoteCommand") is not None
        self.hub.engine.invoke_callback(
            "onRemoteCommand", [cmd, json.dumps(obj)]
        )
        self.send_json(MsgType.COMMAND_ACK, {"seq": frame.seq, "accepted": accepted})
        return True

    # -- shutdown -------------------------------------------------------------

    def close(self) -> None:
        if not self.alive:
            return
        self.alive = False
        self.queue.close()
        # let the writer drain already-queued frames (e.g. a final ERROR)
        # before the transport goes away; self-join is impossible when the
        # writer itself initiated the close
        if threading.current_thread() is not self._writer:
            self._writer.join(timeout=2.0)
        self.transport.close()


class ClientHub:
    def __init__(
        self,
        engine: Engine,
        sim: Simulator,
        ticks_now: Callable[[], int],
        sim_hz: int,
        image_hz: int = 10,
        state_hz: int = 10,
        log: Optional[LogSink] = None,
    ):
        self.engine = engine
        self.sim = sim
        self.ticks_now = ticks_now
        self.sim_hz = sim_hz
        self.image_hz = image_hz
        self.state_hz = state_hz
        self.log = log or NullSink()
        self._sessions: set[ClientSession] = set()
        self._lock = threading.Lock()
        self._tcp = TcpServer("client", self._handle_tcp)
        self._ws_server = None
        self._ws_thread: Optional[threading.Thread] = None
        self.ws_port: Optional[int] = None

    # -- lifecycle --------------------------------------------------------------

    def start_tcp(self, port: int) -> int:
        actual = self._tcp.start(port)
        self.log.info("client_net", f"client protocol listening on port {actual}")
        return actual

    def start_ws(self, port: int) -> int:
        from websockets.sync.server import serve

        self._ws_server = serve(self._handle_ws, host="0.0.0.0", port=port)
        self.ws_port = self._ws_server.socket.getsockname()[1]
        self._ws_thread = threading.Thread(
            target=self._ws_server.serve_forever, name="client-ws", daemon=True
        )
        self._ws_thread.start()
        self.log.info("client_net", f"websocket bridge listening on port {self.ws_port}")
        return self.ws_port

    def stop(self) -> None:
        self._tcp.stop()
        if self._ws_server is not None:
            self._ws_server.shutdown()
            self._ws_server = None
        with self._lock:
            sessions = list(self._sessions)
            self._sessions.clear()
        for session in sessions:
            session.close()

    @property
    def tcp_port(self) -> Optional[int]:
        return self._tcp.port

    def sessions(self) -> list[ClientSession]:
        with self._lock:
            return list(self._sessions)

    def drop_session(self, session: ClientSession, reason: str = "") -> None:
        with self._lock:
            self._sessions.discard(session)
        session.close()
        if reason:
            self.log.info("client_net", f"client {session.client_id} dropped: {reason}")

    # -- transports ----------------------------------------------------------------

    def _handle_tcp(self, conn, addr) -> None:
        session = ClientSession(self, TcpTransport(conn), peer=f"{addr[0]}:{addr[1]}")
        with self._lock:
            self._sessions.add(session)
        self.log.info("client_net", f"client {session.client_id} connected from {session.peer}")
        buffer = b""
        try:
            while session.alive:
                data = conn.recv(65536)
                if not data:
                    break
                buffer += data
                try:
                    frames, buffer = protocol.decode(buffer)
                except protocol.ProtocolError as exc:
                    session.send_json(MsgType.ERROR, {"error": type(exc).__name__})
                    break
                for frame in frames:
                    if not session.handle_frame(frame):
                        return
        except OSError:
            pass
        finally:
            self.drop_session(session)

    def _handle_ws(self, ws) -> None:
        try:
            peer = "%s:%s" % ws.remote_address[:2]
        except Exception:
            peer = "ws"
        session = ClientSession(self, WsTransport(ws), peer=peer)
        with self._lock:
            self._sessions.add(session)
        self.log.info("client_net", f"ws client {session.client_id} connected from {peer}")
        try:
            while session.alive:
                try:
                    message = ws.recv()
                except Exception:
                    break
                if isinstance(message, str):
                    session.send_json(MsgType.ERROR, {"error": "text frames not allowed"})
                    break
                try:
                    frames, rest = protocol.decode(message)
                except protocol.ProtocolError as exc:
                    session.send_json(MsgType.ERROR, {"error": type(exc).__name__})
                    break
                if len(frames) != 1 or rest:
                    session.send_json(
                        MsgType.ERROR, {"error": "each binary message must be one frame"}
                    )
                    break
                if not session.handle_frame(frames[0]):
                    return
        finally:
            self.drop_session(session)

    # -- telemetry fan-out ------------------------------------------------------------

    def broadcast_image(self, frame: CameraFrame) -> None:
        payload = protocol.encode_image_payload(
            frame.width, frame.height, frame.format, frame.timestamp, frame.pixels
        )
        for session in self.sessions():
            if session.welcomed and SUB_IMAGE in session.subscriptions:
                session.send(MsgType.TELEMETRY_IMAGE, payload)

    def broadcast_state(self, state: dict) -> None:
        for session in self.sessions():
            if session.welcomed and SUB_STATE in session.subscriptions:
                payload = dict(state)
                payload["drops"] = session.queue.drops
                session.send_json(MsgType.TELEMETRY_STATE, payload)

    def broadcast_custom(self, label: str, data: str) -> int:
        delivered = 0
        wanted = CUSTOM_PREFIX + label
        for session in self.sessions():
            if session.welcomed and (
                SUB_CUSTOM_ALL in session.subscriptions or wanted in session.subscriptions
            ):
                session.send_json(MsgType.TELEMETRY_CUSTOM, {"label": label, "data": data})
                delivered += 1
        return delivered

    # -- liveness -------------------------------------------------------------------

    def evict_idle(self) -> None:
        deadline_ticks = int(HEARTBEAT_TIMEOUT * self.sim_hz)
        now = self.ticks_now()
        for session in self.sessions():
            if session.welcomed and now - session.last_activity_tick > deadline_ticks:
                self.drop_session(session, reason="heartbeat timeout")
