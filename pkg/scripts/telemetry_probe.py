#!/usr/bin/env python3
"""Subscribe to a running service and report telemetry rates.

Usage: python scripts/telemetry_probe.py [host] [port] [seconds]
Defaults target a locally running service on the default client port.
"""

import json
import socket
import sys
import time

from ride_kernel.protocol import MsgType, WireFrame, decode, encode


def main() -> int:
    host = sys.argv[1] if len(sys.argv) > 1 else "127.0.0.1"
    port = int(sys.argv[2]) if len(sys.argv) > 2 else 27016
    seconds = float(sys.argv[3]) if len(sys.argv) > 3 else 5.0

    sock = socket.create_connection((host, port), timeout=5)
    sock.sendall(encode(WireFrame(int(MsgType.HELLO), 0, b'{"name":"probe"}')))
    sock.sendall(
        encode(
            WireFrame(
                int(MsgType.SUBSCRIBE),
                1,
                json.dumps({"streams": ["image", "state", "custom"]}).encode(),
            )
        )
    )

    counts = {"image": 0, "state": 0, "custom": 0}
    last_state = None
    buf = b""
    sock.settimeout(0.2)
    deadline = time.monotonic() + seconds
    next_heartbeat = time.monotonic() + 2.0
    while time.monotonic() < deadline:
        if time.monotonic() >= next_heartbeat:
            sock.sendall(encode(WireFrame(int(MsgType.HEARTBEAT), 2, b"")))
            next_heartbeat += 2.0
        try:
            chunk = sock.recv(65536)
        except socket.timeout:
            continue
        if not chunk:
            print("server closed the connection")
            return 1
        buf += chunk
        frames, buf = decode(buf)
        for frame in frames:
            if frame.msg_type == int(MsgType.TELEMETRY_IMAGE):
                counts["image"] += 1
            elif frame.msg_type == int(MsgType.TELEMETRY_STATE):
                counts["state"] += 1
                last_state = json.loads(frame.payload)
            elif frame.msg_type == int(MsgType.TELEMETRY_CUSTOM):
                counts["custom"] += 1
                print("custom:", frame.payload.decode())

    print(f"over {seconds:.1f} s: {counts['image']} image frames "
          f"({counts['image'] / seconds:.1f} Hz), {counts['state']} state frames")
    if last_state is not None:
        print("last state:", json.dumps(last_state, indent=2)[:400])
    sock.sendall(encode(WireFrame(int(MsgType.BYE), 3, b"")))
    sock.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
