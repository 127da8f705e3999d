"""Length-prefixed binary frame codec for the client link.

Frame layout (all integers big-endian):

    magic   2 bytes  0x52 0x4B
    version u8       currently 1
    type    u8       MsgType
    seq     u32
    len     u32      payload byte count, at most 1 MiB
    payload len bytes

Text-bearing frame types carry UTF-8 JSON; TELEMETRY_IMAGE carries
``width u16, height u16, format u8, timestamp f64`` followed by raw
pixels. The same bytes travel over TCP (stream, hence the resumable
decoder) and over the WebSocket bridge (one frame per binary message).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

MAGIC = b"\x52\x4b"
VERSION = 1
HEADER = struct.Struct(">2sBBII")
HEADER_LEN = HEADER.size  # 12
MAX_PAYLOAD = 1 << 20

IMAGE_HEADER = struct.Struct(">HHBd")


class MsgType(IntEnum):
    HELLO = 1
    WELCOME = 2
    SUBSCRIBE = 3
    UNSUBSCRIBE = 4
    TELEMETRY_IMAGE = 5
    TELEMETRY_STATE = 6
    TELEMETRY_CUSTOM = 7
    COMMAND = 8
    COMMAND_ACK = 9
    HEARTBEAT = 10
    ERROR = 11
    BYE = 12


KNOWN_TYPES = frozenset(int(t) for t in MsgType)


class ProtocolError(Exception):
    pass


class BadMagic(ProtocolError):
    pass


class BadVersion(ProtocolError):
    pass


class OversizePayload(ProtocolError):
    pass


@dataclass
class WireFrame:
    msg_type: int
    seq: int
    payload: bytes
    version: int = VERSION


def encode(frame: WireFrame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise OversizePayload(f"payload of {len(frame.payload)} bytes exceeds 1 MiB")
    header = HEADER.pack(
        MAGIC, frame.version, frame.msg_type, frame.seq & 0xFFFFFFFF, len(frame.payload)
    )
    return header + frame.payload


def decode(buffer: bytes) -> tuple[list[WireFrame], bytes]:
    """Extract every complete frame; the unconsumed tail is returned.

    Raises a typed ProtocolError as soon as a header is provably invalid,
    without waiting for the payload to arrive.
    """
    frames: list[WireFrame] = []
    offset = 0
    total = len(buffer)
    while total - offset >= HEADER_LEN:
        magic, version, msg_type, seq, payload_len = HEADER.unpack_from(buffer, offset)
        if magic != MAGIC:
            raise BadMagic(f"bad frame magic {magic!r}")
        if version != VERSION:
            raise BadVersion(f"unsupported protocol version {version}")
        if payload_len > MAX_PAYLOAD:
            raise OversizePayload(f"declared payload of {payload_len} bytes exceeds 1 MiB")
        end = offset + HEADER_LEN + payload_len
        if end > total:
            break
        frames.append(
            WireFrame(
                msg_type=msg_type,
                seq=seq,
                payload=bytes(buffer[offset + HEADER_LEN : end]),
                version=version,
            )
        )
        offset = end
    return frames, bytes(buffer[offset:])


def encode_image_payload(width: int, height: int, fmt: int, timestamp: float, pixels: bytes) -> bytes:
    return IMAGE_HEADER.pack(width, height, fmt, timestamp) + pixels


def decode_image_payload(payload: bytes) -> tuple[int, int, int, float, bytes]:
    if len(payload) < IMAGE_HEADER.size:
        raise ProtocolError("image payload shorter than its header")
    width, height, fmt, timestamp = IMAGE_HEADER.unpack_from(payload)
    return width, height, fmt, timestamp, payload[IMAGE_HEADER.size :]
