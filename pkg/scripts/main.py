"""Sample startup script, auto-loaded when the service runs from the repo root.

The service looks for <scripts_dir>/main.py on boot (scripts_dir defaults
to ./scripts) and executes it in the engine namespace, where the `robot`
host module is already bound. This one translates the remote-command
vocabulary used by the web console into robot API calls; `joy` is handled
by the service itself and needs no entry here.
"""

import json

print("startup script loaded; registering remote command handlers")

_command_log = []


def _on_remote_command(cmd, args_text):
    _command_log.append(cmd)
    args = json.loads(args_text)
    if cmd == "tuck":
        robot.tuckBothArms()  # noqa: F821 - bound by the engine
    elif cmd == "mannequin":
        robot.setToMannequinMode(bool(args.get("on", True)))  # noqa: F821
    elif cmd == "joy_on":
        robot.startJoystickControl()  # noqa: F821
    elif cmd == "joy_off":
        robot.stopJoystickControl()  # noqa: F821
    elif cmd == "torso":
        robot.moveTorsoBy(float(args.get("delta", 0.0)))  # noqa: F821
    elif cmd == "look":
        robot.moveHeadTo(  # noqa: F821
            "base_link",
            float(args.get("x", 1.0)),
            float(args.get("y", 0.0)),
            float(args.get("z", 1.2)),
        )
    elif cmd == "laser":
        robot.setTiltLaserPeriodic(  # noqa: F821
            float(args.get("speed", 0.5)), float(args.get("amplitude", 1.0))
        )
    elif cmd == "record":
        if args.get("on", True):
            robot.startDataRecording(robot.REC_CAM | robot.REC_SCAN | robot.REC_TF)  # noqa: F821
        else:
            robot.stopDataRecording()  # noqa: F821


def _on_node_status(source, timestamp, payload):
    # surface third-party status strings on the console overlay
    robot.sendCustomTelemetry("node_status", payload)  # noqa: F821


robot.onRemoteCommand = _on_remote_command  # noqa: F821
robot.onNodeStatusUpdate = _on_node_status  # noqa: F821
