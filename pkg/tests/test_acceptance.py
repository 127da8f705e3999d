"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import math
import os
import random
import signal
import socket
import subprocess
import sys
import threading
import time
from contextlib import contextmanager

import pytest

from conftest import ProtoClient, json_payload, make_config, read_until, shell_eval
from ride_kernel import protocol
from ride_kernel.kernel import RideKernel
from ride_kernel.protocol import MsgType, ProtocolError, WireFrame, decode_image_payload
from ride_kernel.recorder import (
    CHAN_CAM,
    CHAN_SCAN,
    CHAN_TF,
    MASK_ALL,
    BagWriter,
    RecordEntry,
    TruncatedTail,
    read_bag,
)
from ride_kernel.sim import DT, Simulator, arm_joint_names, tuck_pose
from ride_kernel.telnet import DO, DONT, IAC, WILL, WONT, TelnetDecoder, parse_telnet
from test_telnet import mixed_stream_64, normalize


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\n[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"\n[ACCEPTANCE] {name}: PASS")


@pytest.fixture
def kernel(tmp_path):
    k = RideKernel(make_config(tmp_path))
    k.start()
    yield k
    k.stop()


# -- 1. scenario replay --------------------------------------------------------------


def test_scenario_replay(kernel, tmp_path):
    with criterion("scenario replay (12-step experiment transcript)"):
        started = time.monotonic()
        sock = socket.create_connection(  # step 1: remote shell connection
            ("127.0.0.1", kernel.ports()["shell"]), timeout=5
        )
        read_until(sock, b">>> ")
        torso_before = kernel.sim.state.torso.target

        # step 2: fold the arms
        assert shell_eval(sock, "robot.tuckBothArms()") == b"True\r\n>>> "
        kernel.advance(2.2)

        # steps 3-4: joystick drive via protocol-borne velocity commands
        assert shell_eval(sock, "robot.startJoystickControl()") == b"True\r\n>>> "
        joy = ProtoClient(kernel.ports()["client"])
        joy.handshake()
        joy.send(MsgType.COMMAND, {"cmd": "joy", "vx": 0.1, "vy": 0.0, "vtheta": 0.0})
        joy.recv_until_type(MsgType.COMMAND_ACK)
        kernel.advance(1.0)
        joy.close()
        assert kernel.sim.state.base.x == pytest.approx(0.1, abs=1e-9)
        assert shell_eval(sock, "robot.stopJoystickControl()") == b"True\r\n>>> "

        # step 5: raise the torso
        assert shell_eval(sock, "robot.moveTorsoBy(0.02)") == b"True\r\n>>> "
        kernel.advance(0.5)  # let the torso settle before aiming the head

        # step 6: aim the head
        assert shell_eval(sock, "robot.moveHeadTo('base_link', 5.0, 0.0, 1.2)") == b"True\r\n>>> "
        torso_position = kernel.sim.state.torso.position
        expected_pan = math.atan2(0.0, 5.0)
        expected_tilt = math.atan2(1.2 + torso_position - 1.2, math.hypot(5.0, 0.0))
        kernel.advance(0.5)  # head reaches its pose before mannequin freezes targets

        # steps 7-8: mannequin posing and back to normal control
        assert shell_eval(sock, "robot.setToMannequinMode(True)") == b"True\r\n>>> "
        assert shell_eval(sock, "robot.setPoseDirect({'l_elbow_flex': -1.0})") == b"True\r\n>>> "
        assert shell_eval(sock, "robot.getArmJointPositions('left')['l_elbow_flex']") == b"-1.0\r\n>>> "
        assert shell_eval(sock, "robot.setToMannequinMode(False)") == b"True\r\n>>> "

        # step 9: activate the tilt laser
        assert shell_eval(sock, "robot.setTiltLaserPeriodic(0.5, 2.0)") == b"True\r\n>>> "

        # steps 10-12: record 2 s of sensor data with all channels
        assert (
            shell_eval(sock, "robot.startDataRecording(robot.REC_CAM | robot.REC_SCAN | robot.REC_TF)")
            == b"True\r\n>>> "
        )
        kernel.advance(2.0)  # step 11: predefined actions happen during recording
        assert shell_eval(sock, "robot.stopDataRecording()") == b"True\r\n>>> "
        sock.close()

        # torso target moved by exactly the commanded delta
        assert kernel.sim.state.torso.target - torso_before == pytest.approx(0.02, abs=1e-9)

        # head targets match the analytic look-at oracle
        head = kernel.sim.state.head
        assert head["head_pan"].target == pytest.approx(expected_pan, abs=1e-9)
        assert head["head_tilt"].target == pytest.approx(expected_tilt, abs=1e-9)

        # the bag holds 2 s of all three channels with monotone timestamps
        data_dir = kernel.config.data_dir
        bags = [f for f in os.listdir(data_dir) if f.endswith(".bag")]
        assert len(bags) == 1
        entries = read_bag(os.path.join(data_dir, bags[0]))
        counts = {c: sum(1 for e in entries if e.channel == c) for c in (CHAN_CAM, CHAN_SCAN, CHAN_TF)}
        assert abs(counts[CHAN_CAM] - 20) <= 1, counts
        assert abs(counts[CHAN_SCAN] - 20) <= 1, counts
        assert abs(counts[CHAN_TF] - 20) <= 1, counts
        stamps = [e.timestamp for e in entries]
        assert stamps == sorted(stamps)

        assert time.monotonic() - started < 5.0, "virtual-time replay must finish in under 5 s"


# -- 2. fault isolation -----------------------------------------------------------------


def fuzz_corpus(n: int) -> list[str]:
    rng = random.Random(0xFA17)
    known_bad = [
        "1/0",
        "raise RuntimeError('boom')",
        "import sys; sys.exit(9)",
        "undefined_name_xyz",
        "[][5]",
        "{}['missing']",
        "int('not a number')",
        "def f(:",
        "(((",
        "'''open string",
        "while True",
        "\x00\x01\x02",
        "robot.moveArmWithJointPos('left', 42)",
        "robot.moveTorsoBy('up')",
        "x" * 5000,
        "import os; os.nonexistent()",
        "assert False",
        "bytes(-1)",
        "chr(10**10)",
        "(lambda: 1/0)()",
    ]
    corpus = list(known_bad)
    alphabet = "abc(){}[]'\"\\#!@$%^&*;:.,<>?/~`+-=_| \t\x00\xff\u00e9\u4e16"
    while len(corpus) < n:
        corpus.append("".join(rng.choice(alphabet) for _ in range(rng.randint(1, 80))))
    return corpus[:n]


def test_fault_isolation(tmp_path):
    with criterion("fault isolation (200 hostile inputs, process survives)"):
        shell_port = _free_port()
        config = tmp_path / "svc.conf"
        config.write_text(
            f"shell_port = {shell_port}\n"
            f"client_port = {_free_port()}\n"
            f"ws_port = {_free_port()}\n"
            f"bus_port = {_free_port()}\n"
            f"log_file = {tmp_path / 'svc.log'}\n"
            f"data_dir = {tmp_path / 'data'}\n"
            f"scripts_dir = {tmp_path / 'scripts'}\n"
        )
        proc = subprocess.Popen(
            [sys.executable, "-m", "ride_kernel", "--config", str(config)],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
        )
        try:
            assert "running" in proc.stdout.readline()
            pid_before = _shell_getpid(shell_port)
            assert pid_before == proc.pid

            for source in fuzz_corpus(200):
                # hostile input on its own connection; a crashed line must
                # never take the engine down
                fuzz_sock = socket.create_connection(("127.0.0.1", shell_port), timeout=5)
                read_until(fuzz_sock, b">>> ")
                line = source.replace("\r", " ").replace("\n", " ")
                fuzz_sock.sendall(line.encode("utf-8", "replace") + b"\r\n")
                _drain_briefly(fuzz_sock)
                fuzz_sock.close()

                check = socket.create_connection(("127.0.0.1", shell_port), timeout=5)
                read_until(check, b">>> ")
                assert shell_eval(check, "1+1") == b"2\r\n>>> ", f"dead after {source!r}"
                check.close()
                assert proc.poll() is None, f"process died after {source!r}"

            assert _shell_getpid(shell_port) == pid_before, "PID changed (restart happened)"
        finally:
            proc.send_signal(signal.SIGINT)
            assert proc.wait(timeout=10) == 0


def _free_port() -> int:
    s = socket.socket()
    s.bind(("", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def _shell_getpid(port: int) -> int:
    sock = socket.create_connection(("127.0.0.1", port), timeout=5)
    read_until(sock, b">>> ")
    out = shell_eval(sock, "import os; os.getpid()")
    sock.close()
    return int(out.split(b"\r\n")[0])


def _drain_briefly(sock, window: float = 0.2) -> bytes:
    sock.settimeout(0.05)
    buf = b""
    deadline = time.monotonic() + window
    while time.monotonic() < deadline:
        try:
            chunk = sock.recv(4096)
        except socket.timeout:
            continue
        except OSError:
            break
        if not chunk:
            break
        buf += chunk
    return buf


# -- 3. telnet conformance ---------------------------------------------------------------


def test_telnet_conformance():
    with criterion("telnet conformance (option refusal + resumable parsing)"):
        for option in range(256):
            _, replies = parse_telnet(bytes([IAC, DO, option]))
            assert replies == bytes([IAC, WONT, option])
            _, replies = parse_telnet(bytes([IAC, WILL, option]))
            assert replies == bytes([IAC, DONT, option])

        stream = mixed_stream_64()
        assert len(stream) == 64
        ref_events, ref_replies = parse_telnet(stream)
        reference = normalize(ref_events)
        for cut in range(len(stream) + 1):
            decoder = TelnetDecoder()
            ev_a, rep_a = decoder.feed(stream[:cut])
            ev_b, rep_b = decoder.feed(stream[cut:])
            assert normalize(ev_a + ev_b) == reference
            assert rep_a + rep_b == ref_replies


# -- 4. protocol codec ------------------------------------------------------------------


def test_protocol_codec():
    with criterion("protocol codec (1000-frame round-trip + 10000-buffer fuzz)"):
        rng = random.Random(0xC0DEC)
        frames = [
            WireFrame(
                msg_type=rng.randrange(256),
                seq=rng.randrange(2**32),
                payload=rng.randbytes(rng.randrange(0, 2000)),
            )
            for _ in range(1000)
        ]
        blob = b"".join(protocol.encode(f) for f in frames)
        decoded = []
        buffer = b""
        pos = 0
        while pos < len(blob):
            step = rng.randint(1, 8192)
            buffer += blob[pos : pos + step]
            pos += step
            got, buffer = protocol.decode(buffer)
            decoded.extend(got)
        got, buffer = protocol.decode(buffer)
        decoded.extend(got)
        assert decoded == frames and buffer == b""

        for i in range(10_000):
            if i % 3 == 0:
                noise = rng.randbytes(rng.randrange(0, 64))
            elif i % 3 == 1:
                # corrupt a valid frame at a random byte
                raw = bytearray(
                    protocol.encode(WireFrame(rng.randrange(256), 1, rng.randbytes(8)))
                )
                raw[rng.randrange(len(raw))] ^= 1 + rng.randrange(255)
                noise = bytes(raw)
            else:
                noise = protocol.MAGIC + rng.randbytes(rng.randrange(0, 24))
            try:
                frames_out, rest = protocol.decode(noise)
            except ProtocolError:
                continue  # typed rejection is the allowed outcome
            assert isinstance(frames_out, list)
            assert len(rest) <= len(noise)


# -- 5. telemetry rate and backpressure -------------------------------------------------------


def _stream_images(kernel, client, seconds=5.0):
    images = []
    stop = threading.Event()

    def reader():
        while not stop.is_set():
            for frame in client.drain_frames(0.05):
                if frame.msg_type == int(MsgType.TELEMETRY_IMAGE):
                    images.append(frame)

    thread = threading.Thread(target=reader)
    thread.start()
    for _ in range(int(seconds / 0.5)):
        kernel.advance(0.5)
        time.sleep(0.05)
    time.sleep(0.5)
    stop.set()
    thread.join()
    return images


def test_telemetry_rate_and_backpressure(kernel):
    with criterion("telemetry rate and backpressure (50 +/- 1, stalled isolation)"):
        healthy_only = ProtoClient(kernel.ports()["client"])
        healthy_only.handshake()
        healthy_only.subscribe("image")
        images = _stream_images(kernel, healthy_only, seconds=5.0)
        assert abs(len(images) - 50) <= 1, len(images)
        healthy_only.close()

        stalled = ProtoClient(kernel.ports()["client"])
        stalled.handshake()
        stalled.subscribe("image", "state")
        healthy = ProtoClient(kernel.ports()["client"])
        healthy.handshake()
        healthy.subscribe("image", "state")

        window_start = kernel.sim.now + 1.0
        collected = []
        stop = threading.Event()

        def reader():
            while not stop.is_set():
                collected.extend(healthy.drain_frames(0.05))

        thread = threading.Thread(target=reader)
        thread.start()
        for _ in range(40):
            kernel.advance(1.0)
            stalled.send(MsgType.HEARTBEAT, b"")
            healthy.send(MsgType.HEARTBEAT, b"")
            time.sleep(0.02)
        time.sleep(0.5)
        stop.set()
        thread.join()

        stamps = sorted(
            decode_image_payload(f.payload)[3]
            for f in collected
            if f.msg_type == int(MsgType.TELEMETRY_IMAGE)
        )
        in_window = [t for t in stamps if window_start <= t < window_start + 5.0]
        assert abs(len(in_window) - 50) <= 1, len(in_window)

        dropped = [s for s in kernel.hub.sessions() if s.queue.drops > 0]
        assert dropped, "stalled client recorded no drops"
        assert all(s.alive for s in dropped), "stalled client was disconnected"

        # after the reader resumes, a state frame reports the drop counter
        resumed = []
        deadline = time.monotonic() + 5.0
        while time.monotonic() < deadline:
            resumed.extend(stalled.drain_frames(0.2))
            states = [f for f in resumed if f.msg_type == int(MsgType.TELEMETRY_STATE)]
            if states and any(json_payload(f)["drops"] > 0 for f in states):
                break
        states = [f for f in resumed if f.msg_type == int(MsgType.TELEMETRY_STATE)]
        assert any(json_payload(f)["drops"] > 0 for f in states)

        stalled.close()
        healthy.close()


# -- 6. node bus integration --------------------------------------------------------------


def test_node_bus_integration(kernel):
    with criterion("node bus integration (100 ordered messages, crash containment)"):
        received = []
        kernel.engine.set_callback("onNodeStatusUpdate", lambda s, t, p: received.append(p))
        sock = socket.create_connection(("127.0.0.1", kernel.ports()["bus"]), timeout=5)
        for i in range(100):
            sock.sendall(f"PUB node_status ordered-{i}\n".encode())
            assert read_until(sock, b"\n") == b"OK\n"
        kernel.engine.drain()
        assert received == [f"ordered-{i}" for i in range(100)]

        def explode(source, timestamp, payload):
            raise ValueError("integration handler crash")

        kernel.engine.set_callback("onNodeStatusUpdate", explode)
        for i in range(10):
            sock.sendall(f"PUB node_status crash-{i}\n".encode())
            assert read_until(sock, b"\n") == b"OK\n", "publisher was disconnected"
        kernel.engine.drain()
        sock.sendall(b"PUB node_status final\n")
        assert read_until(sock, b"\n") == b"OK\n"
        sock.close()


# -- 7. motion oracle ---------------------------------------------------------------------


def test_motion_oracle(kernel):
    with criterion("motion oracle (tuck completes at 2.0 +/- 0.04 s; limit fuzz)"):
        completions = []
        kernel.engine.set_callback(
            "onMoveArmActionComplete",
            lambda side, ok: completions.append((side, ok, kernel.sim.now)),
        )
        start = kernel.sim.now
        assert kernel.api.moveArmWithJointPos("left", tuck_pose("left"), 2.0)
        assert kernel.api.moveArmWithJointPos("right", tuck_pose("right"), 2.0)
        for _ in range(int(2.5 / DT)):
            kernel.advance(DT)
        assert len(completions) == 2
        for side, ok, when in completions:
            assert ok is True
            assert when - start == pytest.approx(2.0, abs=0.04), (side, when)

        rng = random.Random(0x11417)
        sides = ("left", "right")
        for _ in range(10_000):
            sim = Simulator()
            for _ in range(rng.randint(1, 6)):
                pick = rng.random()
                if pick < 0.35:
                    side = rng.choice(sides)
                    names = rng.sample(arm_joint_names(side), rng.randint(1, 3))
                    sim.set_joint_targets(
                        side,
                        {n: rng.uniform(-8.0, 8.0) for n in names},
                        rng.uniform(0.01, 4.0),
                    )
                elif pick < 0.5:
                    sim.move_torso_by(rng.uniform(-1.0, 1.0))
                elif pick < 0.6:
                    sim.set_mannequin(rng.random() < 0.5)
                elif pick < 0.7:
                    try:
                        sim.set_pose_direct(
                            {rng.choice(arm_joint_names(rng.choice(sides))): rng.uniform(-8, 8)}
                        )
                    except Exception:
                        pass
                elif pick < 0.8:
                    try:
                        sim.look_at("base_link", rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2))
                    except Exception:
                        pass
                else:
                    for _ in range(rng.randint(0, 5)):
                        sim.tick()
            for _ in range(10):
                sim.tick()
            for joint in sim.state.joints():
                lo, hi = joint.limits
                assert lo <= joint.position <= hi, joint
                assert lo <= joint.target <= hi, joint


# -- 8. recorder round-trip ----------------------------------------------------------------


def test_recorder_round_trip(tmp_path):
    with criterion("recorder round-trip (identity + truncation reporting)"):
        rng = random.Random(0xBA6)
        for case in range(25):
            directory = tmp_path / f"case{case}"
            directory.mkdir()
            entries = []
            ts = 0.0
            for _ in range(rng.randint(0, 60)):
                ts += rng.random()
                entries.append(
                    RecordEntry(
                        timestamp=ts,
                        channel=rng.choice((CHAN_CAM, CHAN_SCAN, CHAN_TF)),
                        payload=rng.randbytes(rng.randrange(0, 400)),
                    )
                )
            writer = BagWriter(str(directory), MASK_ALL)
            for e in entries:
                writer.append(e)
            writer.close()
            assert read_bag(writer.path) == entries

        # truncated files: every complete entry is recovered, tail reported
        directory = tmp_path / "trunc"
        directory.mkdir()
        entries = [
            RecordEntry(float(i), CHAN_CAM, rng.randbytes(rng.randrange(1, 50)))
            for i in range(12)
        ]
        writer = BagWriter(str(directory), MASK_ALL)
        for e in entries:
            writer.append(e)
        writer.close()
        data = open(writer.path, "rb").read()
        boundaries = [8]
        for e in entries:
            boundaries.append(boundaries[-1] + 13 + len(e.payload))
        for _ in range(200):
            cut = rng.randrange(8, len(data))
            clipped = directory / "cut.bag"
            clipped.write_bytes(data[:cut])
            complete = sum(1 for b in boundaries[1:] if b <= cut)
            if cut in boundaries:
                assert read_bag(str(clipped)) == entries[:complete]
            else:
                with pytest.raises(TruncatedTail) as excinfo:
                    read_bag(str(clipped))
                assert excinfo.value.entries == entries[:complete]
