"""Service configuration: defaults, flat key=value config files, flag overrides.

Precedence is flag > file > default. Validation failures raise ConfigError,
which the CLI maps to exit code 2.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(Exception):
    pass


@dataclass
class ServiceConfig:
    shell_port: int = 27005
    client_port: int = 27016
    ws_port: int = 27017
    bus_port: int = 27018
    scripts_dir: str = "scripts"
    data_dir: str = "data"
    log_file: str = "ride-kernel.log"
    shell_enabled: bool = True
    image_hz: int = 10
    state_hz: int = 10
    sim_hz: int = 50
    host_module: str = "robot"
    virtual_time: bool = False


_BOOL_TRUE = {"true", "yes", "on", "1"}
_BOOL_FALSE = {"false", "no", "off", "0"}


def _coerce(key: str, raw: str, kind: type):
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in _BOOL_TRUE:
            return True
        if lowered in _BOOL_FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind is int:
        try:
            return int(raw.strip())
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    return raw.strip()


_FIELD_TYPES = {f.name: f.type for f in fields(ServiceConfig)}
_PY_TYPES = {"int": int, "str": str, "bool": bool}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw, _PY_TYPES[str(_FIELD_TYPES[key])])
    return values


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc


def validate(cfg: ServiceConfig) -> None:
    ports = {
        "shell_port": cfg.shell_port,
        "client_port": cfg.client_port,
        "ws_port": cfg.ws_port,
        "bus_port": cfg.bus_port,
    }
    for name, port in ports.items():
        if not 0 <= port <= 65535:
            raise ConfigError(f"{name} out of range: {port}")
    # port 0 asks the OS for an ephemeral port, so duplicates of 0 are fine
    nonzero = [p for p in ports.values() if p != 0]
    if len(nonzero) != len(set(nonzero)):
        raise ConfigError(f"ports must be pairwise distinct: {ports}")
    for name in ("image_hz", "state_hz", "sim_hz"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.sim_hz < cfg.image_hz or cfg.sim_hz < cfg.state_hz:
        raise ConfigError("sim_hz must be at least every telemetry rate")
    if not cfg.host_module.isidentifier():
        raise ConfigError(f"host_module must be a valid identifier: {cfg.host_module!r}")


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> ServiceConfig:
    cfg = ServiceConfig()
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            if value is not None:
                setattr(cfg, key, value)
    validate(cfg)
    return cfg
