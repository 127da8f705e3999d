"""Deterministic simulated PR2-like robot.

Fixed 50 Hz kinematic stepping: every joint moves toward its target at a
bounded speed with exact arrival (no overshoot), the base integrates
commanded velocities while joystick control is active, and the tilt laser
sweeps a triangle wave. All state mutation happens under one lock so
script calls and the tick driver interleave safely; readers get plain
snapshot dicts.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from enum import Enum

DT = 0.02  # fixed simulation step, seconds

ARM_JOINT_SUFFIXES = (
    "shoulder_pan",
    "shoulder_lift",
    "upper_arm_roll",
    "elbow_flex",
    "forearm_roll",
    "wrist_flex",
    "wrist_roll",
)

# Plausible PR2-scale motion constants. Arm speed is chosen high enough
# that a tuck from the zero pose is never velocity-capped at the default
# 2 s reach time.
ARM_MAX_VELOCITY = 2.0  # rad/s
ARM_LIMITS = {
    "shoulder_pan": (-3.14, 3.14),
    "shoulder_lift": (-0.52, 1.39),
    "upper_arm_roll": (-3.14, 3.14),
    "elbow_flex": (-2.30, 0.0),
    "forearm_roll": (-3.14, 3.14),
    "wrist_flex": (-3.14, 3.14),
    "wrist_roll": (-3.14, 3.14),
}

TORSO_JOINT = "torso_lift"
TORSO_LIMITS = (0.0, 0.31)  # meters
TORSO_MAX_VELOCITY = 0.05  # m/s

HEAD_PAN_JOINT = "head_pan"
HEAD_TILT_JOINT = "head_tilt"
HEAD_PAN_LIMITS = (-2.8, 2.8)
HEAD_TILT_LIMITS = (-0.37, 1.30)
HEAD_MAX_VELOCITY = 1.0  # rad/s

HEAD_BASE_HEIGHT = 1.2  # meters above base_link at zero torso lift

LASER_MAX_AMPLITUDE = 1.57  # rad
SCAN_ANGLE_MIN = -1.57
SCAN_ANGLE_MAX = 1.57
SCAN_SAMPLES = 100
SCAN_RANGE = 3.0  # flat synthetic scene, meters

CAMERA_WIDTH = 160
CAMERA_HEIGHT = 120
CAMERA_FORMAT_GRAY8 = 1

ARM_MOTION_TIMEOUT = 30.0  # seconds until a pending motion reports failure

# Compact arm pose safe for base motion; mirrored sign per side.
_TUCK_BASE = {
    "shoulder_pan": -0.02,
    "shoulder_lift": 1.31,
    "upper_arm_roll": -1.45,
    "elbow_flex": -2.12,
    "forearm_roll": -1.57,
    "wrist_flex": -1.47,
    "wrist_roll": 0.0,
}
_MIRRORED = {"shoulder_pan", "upper_arm_roll", "forearm_roll"}


def tuck_pose(side: str) -> dict[str, float]:
    sign = 1.0 if side == "left" else -1.0
    prefix = "l_" if side == "left" else "r_"
    return {
        prefix + suffix: (sign * value if suffix in _MIRRORED else value)
        for suffix, value in _TUCK_BASE.items()
    }


def arm_joint_names(side: str) -> list[str]:
    prefix = "l_" if side == "left" else "r_"
    return [prefix + s for s in ARM_JOINT_SUFFIXES]


class ControlMode(Enum):
    NORMAL = "Normal"
    MANNEQUIN = "Mannequin"
    JOYSTICK = "Joystick"


class SimError(Exception):
    pass


class UnknownJoint(SimError):
    pass


class NotInMannequinMode(SimError):
    pass


class UnsupportedFrame(SimError):
    pass


class DegeneratePoint(SimError):
    pass


class LaserInactive(SimError):
    pass


@dataclass
class JointState:
    name: str
    max_velocity: float
    limits: tuple[float, float]
    position: float = 0.0
    target: float = 0.0
    speed: float = 0.0  # active commanded speed; 0 means max_velocity

    def __post_init__(self):
        if self.speed == 0.0:
            self.speed = self.max_velocity

    def clamp(self, value: float) -> float:
        lo, hi = self.limits
        return min(max(value, lo), hi)

    def step(self, dt: float) -> None:
        delta = self.target - self.position
        if delta == 0.0:
            return
        speed = min(self.speed, self.max_velocity)
        move = speed * dt
        # the 1e-12 slack absorbs float accumulation so arrival times stay
        # at their closed-form tick counts
        if abs(delta) <= move + 1e-12:
            self.position = self.target
        else:
            self.position += math.copysign(move, delta)

    def at_target(self) -> bool:
        return self.position == self.target


@dataclass
class TiltLaser:
    active: bool = False
    speed: float = 0.0  # rad/s
    amplitude: float = 0.0  # rad
    ticks: int = 0  # ticks since activation

    @property
    def angle(self) -> float:
        if not self.active or self.amplitude <= 0.0 or self.speed <= 0.0:
            return 0.0
        t = self.ticks * DT
        period = 4.0 * self.amplitude / self.speed
        tau = math.fmod(t, period)
        quarter = period / 4.0
        if tau < quarter:
            return self.speed * tau
        if tau < 3.0 * quarter:
            return self.amplitude - self.speed * (tau - quarter)
        return -self.amplitude + self.speed * (tau - 3.0 * quarter)


@dataclass
class BaseState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vtheta: float = 0.0


@dataclass
class CameraFrame:
    width: int
    height: int
    format: int
    timestamp: float
    pixels: bytes


@dataclass
class TiltScan:
    tilt_angle: float
    angle_min: float = SCAN_ANGLE_MIN
    angle_max: float = SCAN_ANGLE_MAX
    n: int = SCAN_SAMPLES
    ranges: list[float] = field(default_factory=lambda: [SCAN_RANGE] * SCAN_SAMPLES)


@dataclass
class RobotState:
    left_arm: dict[str, JointState]
    right_arm: dict[str, JointState]
    head: dict[str, JointState]
    torso: JointState
    base: BaseState
    tilt_laser: TiltLaser
    mode: ControlMode = ControlMode.NORMAL
    time: float = 0.0
    ticks: int = 0
    frame_index: int = 0

    def joints(self) -> list[JointState]:
        return (
            list(self.left_arm.values())
            + list(self.right_arm.values())
            + list(self.head.values())
            + [self.torso]
        )

    def joint(self, name: str) -> JointState:
        for group in (self.left_arm, self.right_arm, self.head):
            if name in group:
                return group[name]
        if name == TORSO_JOINT:
            return self.torso
        raise UnknownJoint(name)


def _make_arm(side: str) -> dict[str, JointState]:
    return {
        name: JointState(name, ARM_MAX_VELOCITY, ARM_LIMITS[name.split("_", 1)[1]])
        for name in arm_joint_names(side)
    }


def initial_state() -> RobotState:
    return RobotState(
        left_arm=_make_arm("left"),
        right_arm=_make_arm("right"),
        head={
            HEAD_PAN_JOINT: JointState(HEAD_PAN_JOINT, HEAD_MAX_VELOCITY, HEAD_PAN_LIMITS),
            HEAD_TILT_JOINT: JointState(HEAD_TILT_JOINT, HEAD_MAX_VELOCITY, HEAD_TILT_LIMITS),
        },
        torso=JointState(TORSO_JOINT, TORSO_MAX_VELOCITY, TORSO_LIMITS),
        base=BaseState(),
        tilt_laser=TiltLaser(),
    )


# doubled 0..255 ramp so any camera row is a single slice
_PIXEL_TABLE = bytes(range(256)) * 2


def render_camera(frame_index: int, timestamp: float) -> CameraFrame:
    rows = []
    for y in range(CAMERA_HEIGHT):
        start = (y + frame_index) % 256
        rows.append(_PIXEL_TABLE[start : start + CAMERA_WIDTH])
    return CameraFrame(
        width=CAMERA_WIDTH,
        height=CAMERA_HEIGHT,
        format=CAMERA_FORMAT_GRAY8,
        timestamp=timestamp,
        pixels=b"".join(rows),
    )


@dataclass
class _PendingMotion:
    joints: list[str]
    deadline_tick: int


@dataclass
class ArmMotionComplete:
    side: str
    success: bool


class Simulator:
    """Owns a RobotState and serializes every mutation behind one lock."""

    def __init__(self):
        self.state = initial_state()
        self._lock = threading.RLock()
        self._pending: dict[str, _PendingMotion] = {}

    # -- stepping ---------------------------------------------------------

    def tick(self) -> list[ArmMotionComplete]:
        """Advance one fixed 20 ms step; returns completed-motion events."""
        events: list[ArmMotionComplete] = []
        with self._lock:
            st = self.state
            for joint in st.joints():
                joint.step(DT)
            if st.mode is ControlMode.JOYSTICK:
                b = st.base
                cos_t = math.cos(b.theta)
                sin_t = math.sin(b.theta)
                b.x += (b.vx * cos_t - b.vy * sin_t) * DT
                b.y += (b.vx * sin_t + b.vy * cos_t) * DT
                b.theta += b.vtheta * DT
            if st.tilt_laser.active:
                st.tilt_laser.ticks += 1
            st.ticks += 1
            st.time = st.ticks * DT
            for side in list(self._pending):
                motion = self._pending[side]
                if all(self.state.joint(n).at_target() for n in motion.joints):
                    events.append(ArmMotionComplete(side, True))
                    del self._pending[side]
                elif st.ticks >= motion.deadline_tick:
                    events.append(ArmMotionComplete(side, False))
                    del self._pending[side]
        return events

    # -- arm / torso / head commands --------------------------------------

    def set_joint_targets(
        self, side: str, positions: dict[str, float], time_to_reach: float
    ) -> bool:
        self._check_side(side)
        time_to_reach = float(time_to_reach)
        with self._lock:
            arm = self.state.left_arm if side == "left" else self.state.right_arm
            for name in positions:
                if name not in arm:
                    raise UnknownJoint(name)
            wanted = {name: float(value) for name, value in positions.items()}
            if self.state.mode is not ControlMode.NORMAL:
                return False
            for name, value in wanted.items():
                joint = arm[name]
                joint.target = joint.clamp(value)
                delta = abs(joint.target - joint.position)
                if time_to_reach > 0.0 and delta > 0.0:
                    joint.speed = min(delta / time_to_reach, joint.max_velocity)
                else:
                    joint.speed = joint.max_velocity
            deadline = self.state.ticks + int(round(ARM_MOTION_TIMEOUT / DT))
            self._pending[side] = _PendingMotion(list(positions), deadline)
            return True

    def set_pose_direct(self, positions: dict[str, float]) -> list[str]:
        """Mannequin-only instant posing; returns names that hit a limit."""
        with self._lock:
            for name in positions:
                self.state.joint(name)  # raises UnknownJoint before mutation
            wanted = {name: float(value) for name, value in positions.items()}
            if self.state.mode is not ControlMode.MANNEQUIN:
                raise NotInMannequinMode(self.state.mode.value)
            clamped = []
            for name, value in wanted.items():
                joint = self.state.joint(name)
                limited = joint.clamp(value)
                if limited != value:
                    clamped.append(name)
                joint.position = limited
                joint.target = limited
            return clamped

    def move_torso_by(self, delta: float) -> bool:
        with self._lock:
            if self.state.mode is not ControlMode.NORMAL:
                return False
            torso = self.state.torso
            wanted = torso.target + float(delta)
            torso.target = torso.clamp(wanted)
            torso.speed = torso.max_velocity
            return torso.target == wanted

    def look_at(self, frame: str, x: float, y: float, z: float) -> tuple[float, float]:
        if frame != "base_link":
            raise UnsupportedFrame(frame)
        if x * x + y * y < 1e-9:
            raise DegeneratePoint(f"({x}, {y}, {z})")
        with self._lock:
            head_height = HEAD_BASE_HEIGHT + self.state.torso.position
            pan = math.atan2(y, x)
            tilt = math.atan2(head_height - z, math.hypot(x, y))
            pan_joint = self.state.head[HEAD_PAN_JOINT]
            tilt_joint = self.state.head[HEAD_TILT_JOINT]
            pan_joint.target = pan_joint.clamp(pan)
            tilt_joint.target = tilt_joint.clamp(tilt)
            pan_joint.speed = pan_joint.max_velocity
            tilt_joint.speed = tilt_joint.max_velocity
            return pan, tilt

    # -- modes -------------------------------------------------------------

    def set_mannequin(self, on: bool) -> bool:
        with self._lock:
            mode = self.state.mode
            if on:
                if mode is ControlMode.JOYSTICK:
                    return False
                if mode is ControlMode.NORMAL:
                    # freeze: physically posed limbs stay where they are
                    for joint in self.state.joints():
                        joint.target = joint.position
                    self._pending.clear()
                    self.state.mode = ControlMode.MANNEQUIN
                return True
            if mode is ControlMode.MANNEQUIN:
                self.state.mode = ControlMode.NORMAL
            return True

    def start_joystick(self) -> bool:
        with self._lock:
            mode = self.state.mode
            if mode is ControlMode.MANNEQUIN:
                return False
            self.state.mode = ControlMode.JOYSTICK
            return True

    def stop_joystick(self) -> bool:
        with self._lock:
            base = self.state.base
            base.vx = base.vy = base.vtheta = 0.0
            if self.state.mode is ControlMode.JOYSTICK:
                self.state.mode = ControlMode.NORMAL
            return True

    def set_base_velocity(self, vx: float, vy: float, vtheta: float) -> bool:
        with self._lock:
            if self.state.mode is not ControlMode.JOYSTICK:
                return False
            base = self.state.base
            base.vx, base.vy, base.vtheta = float(vx), float(vy), float(vtheta)
            return True

    # -- laser / camera -----------------------------------------------------

    def set_tilt_laser(self, speed: float, amplitude: float) -> bool:
        with self._lock:
            if speed <= 0.0 or amplitude <= 0.0:
                self.state.tilt_laser = TiltLaser()
                return False
            self.state.tilt_laser = TiltLaser(
                active=True,
                speed=float(speed),
                amplitude=min(float(amplitude), LASER_MAX_AMPLITUDE),
            )
            return True

    def camera_frame(self, advance: bool = False) -> CameraFrame:
        with self._lock:
            frame = render_camera(self.state.frame_index, self.state.time)
            if advance:
                self.state.frame_index += 1
            return frame

    def tilt_scan(self) -> TiltScan:
        with self._lock:
            laser = self.state.tilt_laser
            if not laser.active:
                raise LaserInactive("tilt laser is not active")
            return TiltScan(tilt_angle=laser.angle)

    # -- snapshots -----------------------------------------------------------

    def _check_side(self, side: str) -> None:
        if side not in ("left", "right"):
            raise UnknownJoint(f"unknown arm side {side!r}")

    def arm_joint_positions(self, side: str) -> dict[str, float]:
        self._check_side(side)
        with self._lock:
            arm = self.state.left_arm if side == "left" else self.state.right_arm
            return {name: joint.position for name, joint in arm.items()}

    def state_snapshot(self) -> dict:
        with self._lock:
            st = self.state
            joints = {}
            for group in (st.left_arm, st.right_arm):
                for name, joint in group.items():
                    joints[name] = joint.position
            return {
                "joints": joints,
                "torso": {"position": st.torso.position, "target": st.torso.target},
                "head": {
                    "pan": st.head[HEAD_PAN_JOINT].position,
                    "tilt": st.head[HEAD_TILT_JOINT].position,
                    "pan_target": st.head[HEAD_PAN_JOINT].target,
                    "tilt_target": st.head[HEAD_TILT_JOINT].target,
                },
                "base": {"x": st.base.x, "y": st.base.y, "theta": st.base.theta},
                "mode": st.mode.value,
                "laser": {"active": st.tilt_laser.active, "angle": st.tilt_laser.angle},
                "time": st.time,
            }

    def tf_snapshot(self) -> dict:
        with self._lock:
            st = self.state
            return {
                "base": {"x": st.base.x, "y": st.base.y, "theta": st.base.theta},
                "torso": st.torso.position,
                "head": {
                    "pan": st.head[HEAD_PAN_JOINT].position,
                    "tilt": st.head[HEAD_TILT_JOINT].position,
                },
            }

    @property
    def mode(self) -> ControlMode:
        with self._lock:
            return self.state.mode

    @property
    def now(self) -> float:
        with self._lock:
            return self.state.time
