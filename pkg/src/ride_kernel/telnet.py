"""Minimal telnet (NVT) protocol handling for the shell service.

The server refuses every option it is asked about: DO x is answered with
WONT x and WILL x with DONT x, leaving both ends in plain line mode. The
decoder is resumable, so an IAC sequence split across TCP segments parses
exactly like a contiguous one.
"""

from __future__ import annotations

from dataclasses import dataclass

IAC = 255
DONT = 254
DO = 253
WONT = 252
WILL = 251
SB = 250
SE = 240

NEGOTIATION_VERBS = (WILL, WONT, DO, DONT)

KIND_TEXT = "Text"
KIND_NEGOTIATION = "Negotiation"
KIND_COMMAND = "Command"


@dataclass
class TelnetEvent:
    kind: str
    payload: bytes


class TelnetDecoder:
    """Splits a raw telnet byte stream into text and command events.

    feed() may be called with arbitrary chunks; partial IAC sequences are
    carried over to the next call.
    """

    _PLAIN, _SAW_IAC, _SAW_VERB, _IN_SB, _IN_SB_IAC = range(5)

    def __init__(self):
        self._state = self._PLAIN
        self._verb = 0

    def feed(self, data: bytes) -> tuple[list[TelnetEvent], bytes]:
        """Returns (events, reply bytes owed to the peer)."""
        events: list[TelnetEvent] = []
        replies = bytearray()
        text = bytearray()

        def flush_text():
            if text:
                events.append(TelnetEvent(KIND_TEXT, bytes(text)))
                text.clear()

        for byte in data:
            if self._state == self._PLAIN:
                if byte == IAC:
                    self._state = self._SAW_IAC
                else:
                    text.append(byte)
            elif self._state == self._SAW_IAC:
                if byte == IAC:
                    text.append(IAC)  # escaped literal 255
                    self._state = self._PLAIN
                elif byte in NEGOTIATION_VERBS:
                    self._verb = byte
                    self._state = self._SAW_VERB
                elif byte == SB:
                    flush_text()
                    self._state = self._IN_SB
                else:
                    # two-byte command; surfaced for visibility, no reply
                    flush_text()
                    events.append(TelnetEvent(KIND_COMMAND, bytes([byte])))
                    self._state = self._PLAIN
            elif self._state == self._SAW_VERB:
                flush_text()
                events.append(TelnetEvent(KIND_NEGOTIATION, bytes([self._verb, byte])))
                if self._verb == DO:
                    replies += bytes([IAC, WONT, byte])
                elif self._verb == WILL:
                    replies += bytes([IAC, DONT, byte])
                # DONT/WONT acknowledge our own refusals; answering them
                # would loop, so they are dropped.
                self._state = self._PLAIN
            elif self._state == self._IN_SB:
                if byte == IAC:
                    self._state = self._IN_SB_IAC
                # subnegotiation content is discarded: no option is ever on
            elif self._state == self._IN_SB_IAC:
                if byte == SE:
                    self._state = self._PLAIN
                else:
                    self._state = self._IN_SB

        flush_text()
        return events, bytes(replies)


def parse_telnet(data: bytes, decoder: TelnetDecoder | None = None) -> tuple[list[TelnetEvent], bytes]:
    """One-shot convenience wrapper around TelnetDecoder.feed."""
    return (decoder or TelnetDecoder()).feed(data)


def escape_outgoing(data: bytes) -> bytes:
    """Double any literal 255 so it survives the telnet channel."""
    return data.replace(bytes([IAC]), bytes([IAC, IAC])) if IAC in data else data
