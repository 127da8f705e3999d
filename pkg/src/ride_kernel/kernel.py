"""Service kernel: owns every subsystem and the simulation tick loop.

The tick loop is the single cadence source. Each 20 ms step advances the
simulator, fires motion-completion and timer callbacks, and on telemetry
slots fans camera/state/scan data out to clients, the recorder, and the
node bus. In real-time mode a background thread drives ticks off the
wall clock; in virtual-time mode nothing moves until advance() is
called, which makes every timing-sensitive behavior exactly testable.
"""

from __future__ import annotations

import threading
import time
from typing import Optional

from . import __version__
from . import protocol
from . import recorder as rec
from .api import RobotApi
from .client_server import SERVER_NAME, ClientHub
from .config import ServiceConfig
from .engine import Engine, boot, open_log_sink
from .node_bus import NodeBus
from .recorder import CHAN_CAM, CHAN_SCAN, CHAN_TF, Recorder
from .shell import ShellServer
from .sim import DT, Simulator

import json

SCAN_HZ = 10  # active tilt laser publishes at this fixed rate


class RideKernel:
    def __init__(self, config: Optional[ServiceConfig] = None):
        self.config = config or ServiceConfig()
        cfg = self.config

        self.log = open_log_sink(cfg.log_file)
        self.engine: Engine = boot(self.log, module_name=cfg.host_module)
        self.sim = Simulator()
        self.recorder = Recorder(cfg.data_dir, warn=lambda m: self.log.warn("recorder", m))
        self.bus = NodeBus(self.engine, now=lambda: self.sim.now, log=self.log)
        self.hub = ClientHub(
            engine=self.engine,
            sim=self.sim,
            ticks_now=lambda: self.sim.state.ticks,
            sim_hz=cfg.sim_hz,
            image_hz=cfg.image_hz,
            state_hz=cfg.state_hz,
            log=self.log,
        )
        banner = f"{SERVER_NAME} {__version__} interactive shell (host module: {cfg.host_module})"
        self.shell = ShellServer(self.engine, log=self.log, banner=banner)

        self.api = RobotApi(
            engine=self.engine,
            sim=self.sim,
            recorder=self.recorder,
            send_custom=self.hub.broadcast_custom,
            arm_timer=self._arm_timer,
            cancel_timer=self._cancel_timer,
            log=self.log,
        )
        self.api.install()

        # telemetry cadence in ticks
        self._image_interval = max(1, round(cfg.sim_hz / cfg.image_hz))
        self._state_interval = max(1, round(cfg.sim_hz / cfg.state_hz))
        self._scan_interval = max(1, round(cfg.sim_hz / SCAN_HZ))

        self._timer_lock = threading.Lock()
        self._timer_period_ticks: Optional[int] = None
        self._timer_armed_tick = 0

        self._tick_thread: Optional[threading.Thread] = None
        self._running = False
        self.started = False

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        """Bring up listeners and the tick driver in dependency order."""
        cfg = self.config
        if not cfg.virtual_time:
            self._running = True
            self._tick_thread = threading.Thread(
                target=self._tick_loop, name="sim-tick", daemon=True
            )
            self._tick_thread.start()
        self.bus.start(cfg.bus_port)
        self.hub.start_tcp(cfg.client_port)
        self.hub.start_ws(cfg.ws_port)
        if cfg.shell_enabled:
            self.shell.start(cfg.shell_port)
        self.engine.load_startup_script(cfg.scripts_dir)
        self.started = True
        self.log.info("service", f"service up: {self.ports()}")

    def stop(self) -> None:
        """Reverse-order shutdown; an open bag file is always finalized."""
        if self.config.shell_enabled:
            self.shell.stop()
        self.hub.stop()
        self.bus.stop()
        self._running = False
        if self._tick_thread is not None:
            self._tick_thread.join(timeout=5.0)
            self._tick_thread = None
        if self.recorder.active:
            try:
                summary = self.recorder.stop()
                self.log.info("service", f"open recording finalized: {summary}")
            except rec.BagError:
                pass
        self.engine.shutdown()
        self.log.info("service", "service stopped")
        self.log.close()
        self.started = False

    def ports(self) -> dict:
        return {
            "shell": self.shell.port if self.config.shell_enabled else None,
            "client": self.hub.tcp_port,
            "ws": self.hub.ws_port,
            "bus": self.bus.port,
        }

    # -- time ------------------------------------------------------------------

    def advance(self, seconds: float) -> None:
        """Virtual-time driver: run whole ticks then let scripts catch up."""
        if not self.config.virtual_time:
            raise RuntimeError("advance() is only available in virtual-time mode")
        for _ in range(int(round(seconds / DT))):
            self._tick_once()
        self.engine.drain()

    def _tick_loop(self) -> None:
        next_tick = time.monotonic()
        while self._running:
            self._tick_once()
            next_tick += DT
            delay = next_tick - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_tick = time.monotonic()  # fell behind; don't burst

    def _tick_once(self) -> None:
        for event in self.sim.tick():
            self.engine.invoke_callback("onMoveArmActionComplete", [event.side, event.success])

        tick = self.sim.state.ticks
        self._fire_timer(tick)

        if tick % self._image_interval == 0:
            frame = self.sim.camera_frame(advance=True)
            self.hub.broadcast_image(frame)
            if self.recorder.active:
                payload = protocol.encode_image_payload(
                    frame.width, frame.height, frame.format, frame.timestamp, frame.pixels
                )
                self.recorder.capture(CHAN_CAM, frame.timestamp, payload)

        if tick % self._state_interval == 0:
            snapshot = self.sim.state_snapshot()
            self.hub.broadcast_state(snapshot)
            if self.recorder.active:
                tf = self.sim.tf_snapshot()
                self.recorder.capture(
                    CHAN_TF, self.sim.now, json.dumps(tf).encode("utf-8")
                )

        if tick % self._scan_interval == 0 and self.sim.state.tilt_laser.active:
            scan = self.sim.tilt_scan()
            self.bus.publish_scan(scan)
            if self.recorder.active:
                scan_obj = {
                    "tilt_angle": scan.tilt_angle,
                    "angle_min": scan.angle_min,
                    "angle_max": scan.angle_max,
                    "n": scan.n,
                    "ranges": scan.ranges,
                }
                self.recorder.capture(
                    CHAN_SCAN, self.sim.now, json.dumps(scan_obj).encode("utf-8")
                )

        self.hub.evict_idle()

    # -- script timer -------------------------------------------------------------

    def _arm_timer(self, period: float) -> None:
        with self._timer_lock:
            self._timer_period_ticks = max(1, round(period * self.config.sim_hz))
            self._timer_armed_tick = self.sim.state.ticks

    def _cancel_timer(self) -> None:
        with self._timer_lock:
            self._timer_period_ticks = None

    def _fire_timer(self, tick: int) -> None:
        with self._timer_lock:
            period = self._timer_period_ticks
            armed = self._timer_armed_tick
        if period is None:
            return
        elapsed = tick - armed
        if elapsed > 0 and elapsed % period == 0:
            self.engine.invoke_callback("onTimer", [])
