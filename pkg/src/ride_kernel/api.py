"""Script-facing robot API.

Everything a script can do lands on one flat module-style object exposed
in the engine namespace (default name ``robot``): motion commands, mode
switches, recording control, telemetry, and the five callback slots,
which scripts fill by plain assignment::

    def on_status(source, timestamp, text):
        ...
    robot.onNodeStatusUpdate = on_status

Commands follow a boolean acceptance convention: True means the command
was taken, False means it was refused (wrong mode, bad argument, clamp
engaged) and robot state was left unchanged.
"""

from __future__ import annotations

from typing import Callable, Optional

from . import recorder as rec
from . import sim as simulation
from .engine import CALLBACK_SLOTS, Engine
from .logfile import LogSink, NullSink
from .sim import ControlMode, Simulator


class HostModule:
    """Namespace object scripts see; assignment to a callback name fills
    the engine slot, everything else behaves like a plain attribute."""

    def __init__(self, engine: Engine):
        object.__setattr__(self, "_engine", engine)

    def __setattr__(self, name: str, value) -> None:
        if name in CALLBACK_SLOTS:
            self._engine.set_callback(name, value)
        else:
            object.__setattr__(self, name, value)

    def __getattr__(self, name: str):
        # only reached for names not set on the instance
        if name in CALLBACK_SLOTS:
            return self._engine.get_callback(name)
        raise AttributeError(name)

    def __repr__(self) -> str:
        return f"<robot host module ({self._engine.module_name})>"


class RobotApi:
    """Binds the host module functions to the live subsystems."""

    def __init__(
        self,
        engine: Engine,
        sim: Simulator,
        recorder: rec.Recorder,
        send_custom: Callable[[str, str], int],
        arm_timer: Callable[[float], None],
        cancel_timer: Callable[[], None],
        log: Optional[LogSink] = None,
    ):
        self.engine = engine
        self.sim = sim
        self.recorder = recorder
        self._send_custom = send_custom
        self._arm_timer = arm_timer
        self._cancel_timer = cancel_timer
        self.log = log or NullSink()
        self.module = HostModule(engine)

    def install(self) -> HostModule:
        """Register every operation and expose the module in the namespace."""
        for name in (
            "tuckBothArms",
            "moveArmWithJointPos",
            "getArmJointPositions",
            "moveTorsoBy",
            "moveHeadTo",
            "pointHeadTo",
            "setToMannequinMode",
            "startJoystickControl",
            "stopJoystickControl",
            "setTiltLaserPeriodic",
            "startDataRecording",
            "stopDataRecording",
            "sendCustomTelemetry",
            "setPoseDirect",
            "setTimer",
            "cancelTimer",
        ):
            fn = getattr(self, name)
            self.engine.register_api(name, fn)
            object.__setattr__(self.module, name, fn)
        for const in ("REC_CAM", "REC_SCAN", "REC_TF"):
            object.__setattr__(self.module, const, getattr(rec, const))
        self.engine.bind_module(self.module)
        return self.module

    # -- arm / torso / head ---------------------------------------------------

    def tuckBothArms(self) -> bool:
        if self.sim.mode is not ControlMode.NORMAL:
            return False
        ok_left = self.sim.set_joint_targets("left", simulation.tuck_pose("left"), 2.0)
        ok_right = self.sim.set_joint_targets("right", simulation.tuck_pose("right"), 2.0)
        return ok_left and ok_right

    def moveArmWithJointPos(self, side: str, positions: dict, time_to_reach: float = 2.0) -> bool:
        try:
            return self.sim.set_joint_targets(side, dict(positions), float(time_to_reach))
        except (simulation.UnknownJoint, TypeError, ValueError):
            return False

    def getArmJointPositions(self, side: str) -> dict:
        return self.sim.arm_joint_positions(side)

    def moveTorsoBy(self, delta: float) -> bool:
        try:
            return self.sim.move_torso_by(float(delta))
        except (TypeError, ValueError):
            return False

    def moveHeadTo(self, frame: str, x: float, y: float, z: float) -> bool:
        if self.sim.mode is ControlMode.MANNEQUIN:
            return False  # motor commands are suspended while posable
        try:
            self.sim.look_at(frame, float(x), float(y), float(z))
            return True
        except (simulation.UnsupportedFrame, simulation.DegeneratePoint, TypeError, ValueError):
            return False

    def pointHeadTo(self, frame: str, x: float, y: float, z: float) -> bool:
        # same geometry as moveHeadTo, kept as its own host function
        return self.moveHeadTo(frame, x, y, z)

    def setPoseDirect(self, positions: dict) -> bool:
        try:
            clamped = self.sim.set_pose_direct(dict(positions))
        except (simulation.NotInMannequinMode, simulation.UnknownJoint, TypeError, ValueError):
            return False
        if clamped:
            self.log.warn("host_api", f"pose values clamped to limits: {', '.join(clamped)}")
        return True

    # -- modes ------------------------------------------------------------------

    def setToMannequinMode(self, on: bool) -> bool:
        return self.sim.set_mannequin(bool(on))

    def startJoystickControl(self) -> bool:
        return self.sim.start_joystick()

    def stopJoystickControl(self) -> bool:
        return self.sim.stop_joystick()

    # -- laser / recording / telemetry -------------------------------------------

    def setTiltLaserPeriodic(self, speed: float, amplitude: float) -> bool:
        try:
            return self.sim.set_tilt_laser(float(speed), float(amplitude))
        except (TypeError, ValueError):
            return False

    def startDataRecording(self, mask: int) -> bool:
        try:
            writer = self.recorder.start(int(mask))
        except (rec.BagError, TypeError, ValueError) as exc:
            self.log.warn("host_api", f"startDataRecording refused: {exc}")
            return False
        self.log.info("host_api", f"recording started: {writer.path} (mask {mask})")
        return True

    def stopDataRecording(self) -> bool:
        try:
            summary = self.recorder.stop()
        except rec.BagError as exc:
            self.log.warn("host_api", f"stopDataRecording refused: {exc}")
            return False
        self.log.info("host_api", f"recording stopped: {summary}")
        return True

    def sendCustomTelemetry(self, label: str, payload: str) -> bool:
        if not isinstance(label, str) or not isinstance(payload, str):
            return False
        self._send_custom(label, payload)
        return True

    # -- timer ----------------------------------------------------------------------

    def setTimer(self, period: float) -> bool:
        try:
            period = float(period)
        except (TypeError, ValueError):
            return False
        if period <= 0.0:
            return False
        self._arm_timer(period)
        return True

    def cancelTimer(self) -> bool:
        self._cancel_timer()
        return True
