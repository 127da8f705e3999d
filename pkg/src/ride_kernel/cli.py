"""Operator command line for the service process."""

from __future__ import annotations

import argparse
import signal
import sys
import threading
from typing import Optional

from . import __version__
from .config import ConfigError, build_config, load_config_file
from .engine import EngineInitFailure
from .kernel import RideKernel
from .tcpserve import BindFailure

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_BAD_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ride-kernel",
        description="Robot middleware service: scripting engine, telnet shell, "
        "client telemetry, recorder, and node bus on a simulated robot.",
    )
    parser.add_argument("--config", metavar="FILE", help="key=value config file")
    parser.add_argument("--shell-port", type=int, metavar="PORT", help="interactive shell port")
    parser.add_argument(
        "--no-shell", action="store_true", help="disable the interactive shell listener"
    )
    parser.add_argument("--scripts-dir", metavar="DIR", help="startup script directory")
    parser.add_argument("--data-dir", metavar="DIR", help="recording output directory")
    parser.add_argument("--log-file", metavar="FILE", help="service log file")
    parser.add_argument(
        "--virtual-time",
        action="store_true",
        help="freeze the simulation clock; ticks only advance programmatically",
    )
    parser.add_argument("--version", action="store_true", help="print version and exit")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.version:
        print(f"ride-kernel {__version__}")
        return EXIT_OK

    overrides: dict = {}
    if args.shell_port is not None:
        overrides["shell_port"] = args.shell_port
    if args.no_shell:
        overrides["shell_enabled"] = False
    if args.scripts_dir is not None:
        overrides["scripts_dir"] = args.scripts_dir
    if args.data_dir is not None:
        overrides["data_dir"] = args.data_dir
    if args.log_file is not None:
        overrides["log_file"] = args.log_file
    if args.virtual_time:
        overrides["virtual_time"] = True

    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = build_config(file_values, overrides)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    try:
        kernel = RideKernel(cfg)
    except EngineInitFailure as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    stop_requested = threading.Event()

    def _on_signal(signum, frame):
        stop_requested.set()

    signal.signal(signal.SIGINT, _on_signal)
    signal.signal(signal.SIGTERM, _on_signal)

    try:
        kernel.start()
    except BindFailure as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        kernel.stop()
        return EXIT_RUNTIME

    print(f"ride-kernel {__version__} running: {kernel.ports()}", flush=True)
    stop_requested.wait()
    kernel.stop()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
