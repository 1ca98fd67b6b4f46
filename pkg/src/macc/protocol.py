"""Line-delimited wire protocol: canonical-text frames, one message per line.

Envelope fields are exactly type, session, payload.  The ledger is the
artifact of record, so frames are human-auditable UTF-8 text; throughput
is not a concern at desk scale.  Frames above 1 MiB are rejected; a
malformed frame reports the absolute byte offset where it began.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import canon
from .errors import FrameTooLarge, ProtocolError

MAX_FRAME = 1 << 20  # bytes, excluding the terminating newline
DEFAULT_PORT = 7717

HELLO = "Hello"
WELCOME = "Welcome"
SUBMIT = "Submit"
ACK = "Ack"
QUERY = "Query"
QUERY_RESULT = "QueryResult"
ROUND_START = "RoundStart"
ROUND_RESULT = "RoundResult"
ERROR = "Error"
MESSAGE_TYPES = (HELLO, WELCOME, SUBMIT, ACK, QUERY, QUERY_RESULT,
                 ROUND_START, ROUND_RESULT, ERROR)


@dataclass(frozen=True)
class Message:
    type: str
    payload: dict
    session: str | None = None


def encode(message: Message) -> bytes:
    """One frame: canonical text plus a newline."""
    if message.type not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {message.type!r}")
    line = canon.dumps({
        "type": message.type,
        "session": message.session,
        "payload": message.payload,
    }).encode("utf-8")
    if len(line) > MAX_FRAME:
        raise FrameTooLarge(f"frame of {len(line)} bytes exceeds {MAX_FRAME}")
    return line + b"\n"


def decode(frame: bytes, offset: int = 0) -> Message:
    """Parse one complete frame (no trailing newline required).

    `offset` is the absolute position of the frame start in the stream and
    is folded into error reports.
    """
    if len(frame) > MAX_FRAME:
        raise FrameTooLarge(f"frame of {len(frame)} bytes exceeds {MAX_FRAME}")
    try:
        obj = json.loads(frame.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise ProtocolError(f"invalid UTF-8 at byte {offset + e.start}",
                            offset=offset + e.start) from None
    except json.JSONDecodeError as e:
        raise ProtocolError(f"malformed frame at byte {offset + e.pos}: {e.msg}",
                            offset=offset + e.pos) from None
    if not isinstance(obj, dict) or set(obj) != {"type", "session", "payload"}:
        raise ProtocolError(f"malformed envelope at byte {offset}", offset=offset)
    if not isinstance(obj["type"], str) or not isinstance(obj["payload"], dict):
        raise ProtocolError(f"malformed envelope at byte {offset}", offset=offset)
    if obj["session"] is not None and not isinstance(obj["session"], str):
        raise ProtocolError(f"malformed envelope at byte {offset}", offset=offset)
    return Message(type=obj["type"], payload=obj["payload"], session=obj["session"])


FRAME = "frame"
TOO_LARGE = "too-large"


@dataclass
class FrameReader:
    """Incremental splitter tracking absolute byte offsets.

    feed() yields (FRAME, bytes, start_offset) events for complete lines
    and one (TOO_LARGE, None, start_offset) event for an oversized line,
    whose remaining bytes are then skipped up to the next newline so the
    stream can continue.  A partial trailing line is not an error until
    the stream closes.
    """

    _buffer: bytearray = field(default_factory=bytearray)
    _offset: int = 0  # absolute offset of buffer start
    _discarding: bool = False

    def feed(self, data: bytes) -> list[tuple[str, bytes | None, int]]:
        self._buffer.extend(data)
        events: list[tuple[str, bytes | None, int]] = []
        while True:
            idx = self._buffer.find(b"\n")
            if idx < 0:
                if len(self._buffer) > MAX_FRAME:
                    start = self._offset
                    self._offset += len(self._buffer)
                    self._buffer.clear()
                    if not self._discarding:
                        self._discarding = True
                        events.append((TOO_LARGE, None, start))
                return events
            frame = bytes(self._buffer[:idx])
            start = self._offset
            del self._buffer[: idx + 1]
            self._offset += idx + 1
            if self._discarding:
                self._discarding = False  # tail of the oversized line
                continue
            if len(frame) > MAX_FRAME:
                events.append((TOO_LARGE, None, start))
            else:
                events.append((FRAME, frame, start))

    def pending(self) -> int:
        return len(self._buffer)
