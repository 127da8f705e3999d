#!/usr/bin/env python3
"""Replay the experimental-setup procedure against an in-process kernel.

Boots a virtual-time kernel on ephemeral ports, drives a real telnet
connection through the full command sequence (arm tuck, joystick drive,
torso/head adjustment, mannequin posing, tilt laser, data recording) and
prints what happened at each step. Finishes by reading the recorded bag
back and summarizing it.
"""

import json
import os
import socket
import sys
import tempfile
import time

from ride_kernel.config import ServiceConfig
from ride_kernel.kernel import RideKernel
from ride_kernel.protocol import MsgType, WireFrame, decode, encode
from ride_kernel.recorder import read_bag


def read_until(sock, token: bytes) -> bytes:
    buf = b""
    while not buf.endswith(token):
        chunk = sock.recv(4096)
        if not chunk:
            raise ConnectionError("shell closed")
        buf += chunk
    return buf


def shell(sock, line: str) -> str:
    print(f">>> {line}")
    sock.sendall(line.encode() + b"\r\n")
    out = read_until(sock, b">>> ")
    body = out.replace(b"\r\n", b"\n").removesuffix(b">>> ").decode().rstrip()
    if body:
        print(body)
    return body


def main() -> int:
    workdir = tempfile.mkdtemp(prefix="ride-demo-")
    cfg = ServiceConfig(
        shell_port=0,
        client_port=0,
        ws_port=0,
        bus_port=0,
        scripts_dir=os.path.join(workdir, "scripts"),
        data_dir=os.path.join(workdir, "data"),
        log_file=os.path.join(workdir, "service.log"),
        virtual_time=True,
    )
    kernel = RideKernel(cfg)
    kernel.start()
    started = time.monotonic()
    print(f"kernel up on ports {kernel.ports()} (virtual time)")

    sock = socket.create_connection(("127.0.0.1", kernel.ports()["shell"]), timeout=5)
    print(read_until(sock, b">>> ").replace(b"\r\n", b"\n").decode(), end="")

    shell(sock, "robot.tuckBothArms()")
    kernel.advance(2.2)
    print(f"  [t={kernel.sim.now:.2f}s] arms tucked")

    shell(sock, "robot.startJoystickControl()")
    client = socket.create_connection(("127.0.0.1", kernel.ports()["client"]), timeout=5)
    client.sendall(encode(WireFrame(int(MsgType.HELLO), 0, b'{"name":"demo"}')))
    client.sendall(
        encode(
            WireFrame(
                int(MsgType.COMMAND),
                1,
                json.dumps({"cmd": "joy", "vx": 0.1, "vy": 0.0, "vtheta": 0.0}).encode(),
            )
        )
    )
    buf = b""
    while True:
        buf += client.recv(4096)
        frames, buf = decode(buf)
        if any(f.msg_type == int(MsgType.COMMAND_ACK) for f in frames):
            break
    kernel.advance(1.0)
    client.close()
    print(f"  [t={kernel.sim.now:.2f}s] joystick burst moved base to x={kernel.sim.state.base.x:.3f} m")
    shell(sock, "robot.stopJoystickControl()")

    shell(sock, "robot.moveTorsoBy(0.02)")
    kernel.advance(0.5)
    shell(sock, "robot.moveHeadTo('base_link', 5.0, 0.0, 1.2)")
    kernel.advance(0.5)
    head = kernel.sim.state.head
    print(
        f"  [t={kernel.sim.now:.2f}s] torso at {kernel.sim.state.torso.position:.3f} m, "
        f"head pan={head['head_pan'].position:.4f} tilt={head['head_tilt'].position:.4f}"
    )

    shell(sock, "robot.setToMannequinMode(True)")
    shell(sock, "robot.setPoseDirect({'l_elbow_flex': -1.0})")
    shell(sock, "robot.setToMannequinMode(False)")
    shell(sock, "robot.setTiltLaserPeriodic(0.5, 2.0)")
    shell(sock, "robot.startDataRecording(robot.REC_CAM | robot.REC_SCAN | robot.REC_TF)")
    kernel.advance(2.0)
    shell(sock, "robot.stopDataRecording()")
    sock.close()

    bags = [f for f in os.listdir(cfg.data_dir) if f.endswith(".bag")]
    entries = read_bag(os.path.join(cfg.data_dir, bags[0]))
    names = {1: "CAM", 2: "SCAN", 3: "TF"}
    counts = {names[c]: sum(1 for e in entries if e.channel == c) for c in names}
    print(f"bag {bags[0]}: {len(entries)} entries {counts}")
    print(f"scenario completed in {time.monotonic() - started:.2f} s wall time")

    kernel.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
