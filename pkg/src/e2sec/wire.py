"""E2-lite message framing.

Every frame is a fixed 10-byte header followed by the payload::

    +--------+---------+----------+----------------+---------+
    | "E2LT" | version | msg_type | payload length | payload |
    |   4 B  |   1 B   |   1 B    |   4 B (BE)     |  n B    |
    +--------+---------+----------+----------------+---------+

Payload helpers for the echo, KPI indication and control messages live here
too, so the benchmark and end-to-end code never hand-pack bytes.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np

MAGIC = b"E2LT"
VERSION = 1
HEADER_LEN = 10
MAX_PAYLOAD = (1 << 24) - 1

_HEADER = struct.Struct("!4sBBI")
_ECHO = struct.Struct("!QQ")
_INDICATION = struct.Struct("!Q")
_CONTROL = struct.Struct("!3B3H")


class WireError(Exception):
    """Base class for codec failures."""


class EncodingError(WireError):
    pass


class FramingError(WireError):
    """The byte stream is not positioned on a frame (bad magic)."""


class ProtocolError(WireError):
    """Header parsed but carries a value the protocol does not allow."""


class MsgType(enum.IntEnum):
    SETUP = 1
    SUBSCRIPTION = 2
    INDICATION = 3
    CONTROL = 4
    ECHO = 5
    ECHO_REPLY = 6
    DATA = 7


@dataclass(frozen=True)
class E2Frame:
    msg_type: MsgType
    payload: bytes = b""
    version: int = VERSION

    def __len__(self) -> int:
        return HEADER_LEN + len(self.payload)


def encode_frame(frame: E2Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise EncodingError(f"payload of {len(frame.payload)} bytes exceeds {MAX_PAYLOAD}")
    if not 0 <= frame.version <= 0xFF:
        raise EncodingError(f"version {frame.version} does not fit one byte")
    return _HEADER.pack(MAGIC, frame.version, int(frame.msg_type), len(frame.payload)) + frame.payload


def decode_frame(data: bytes) -> Optional[Tuple[E2Frame, int]]:
    """Decode the frame at the start of ``data``.

    Returns ``(frame, consumed)`` or ``None`` when ``data`` holds only a
    prefix of a frame and more bytes are needed.
    """
    head = bytes(data[: len(MAGIC)])
    if head != MAGIC[: len(head)]:
        raise FramingError(f"bad magic {head!r}")
    if len(data) < HEADER_LEN:
        return None
    _, version, msg_type, length = _HEADER.unpack_from(data)
    try:
        mtype = MsgType(msg_type)
    except ValueError:
        raise ProtocolError(f"unknown msg_type {msg_type}") from None
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"declared payload length {length} exceeds {MAX_PAYLOAD}")
    end = HEADER_LEN + length
    if len(data) < end:
        return None
    return E2Frame(mtype, bytes(data[HEADER_LEN:end]), version), end


class FrameDecoder:
    """Incremental decoder for a byte stream cut at arbitrary boundaries."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> Iterator[E2Frame]:
        self._buf += chunk
        while True:
            result = decode_frame(self._buf)
            if result is None:
                return
            frame, used = result
            del self._buf[:used]
            yield frame

    @property
    def pending(self) -> int:
        return len(self._buf)


def decode_all(data: bytes) -> list:
    """Decode a buffer of back-to-back frames; trailing partial frames are an error."""
    frames = []
    pos = 0
    view = memoryview(data)
    while pos < len(data):
        result = decode_frame(view[pos:])
        if result is None:
            raise FramingError(f"truncated frame at offset {pos}")
        frame, used = result
        frames.append(frame)
        pos += used
    return frames


# -- payloads ---------------------------------------------------------------

@dataclass(frozen=True)
class EchoPayload:
    seq_no: int
    send_timestamp_ns: int
    padding: bytes = b""

    def to_bytes(self) -> bytes:
        return _ECHO.pack(self.seq_no, self.send_timestamp_ns) + self.padding

    @classmethod
    def from_bytes(cls, data: bytes) -> "EchoPayload":
        if len(data) < _ECHO.size:
            raise ProtocolError("echo payload shorter than 16 bytes")
        seq, ts = _ECHO.unpack_from(data)
        return cls(seq, ts, bytes(data[_ECHO.size:]))

    @classmethod
    def sized(cls, seq_no: int, send_timestamp_ns: int, payload_bytes: int) -> "EchoPayload":
        """Echo payload padded with zeros to exactly ``payload_bytes``."""
        if payload_bytes < _ECHO.size:
            raise EncodingError(f"echo payload needs at least {_ECHO.size} bytes")
        return cls(seq_no, send_timestamp_ns, bytes(payload_bytes - _ECHO.size))


def echo_reply(request: E2Frame) -> E2Frame:
    """Build the ECHO_REPLY for an ECHO, carrying the payload back unchanged."""
    if request.msg_type is not MsgType.ECHO:
        raise ProtocolError(f"cannot reply to {request.msg_type.name}")
    return E2Frame(MsgType.ECHO_REPLY, request.payload, request.version)


def encode_indication(tick: int, kpis: np.ndarray) -> bytes:
    """KPI indication payload: u64 tick + 3x4 big-endian float64 matrix."""
    kpis = np.asarray(kpis, dtype=">f8")
    if kpis.shape != (3, 4):
        raise EncodingError(f"indication expects a 3x4 KPI matrix, got {kpis.shape}")
    return _INDICATION.pack(tick) + kpis.tobytes()


def decode_indication(payload: bytes) -> Tuple[int, np.ndarray]:
    if len(payload) != _INDICATION.size + 96:
        raise ProtocolError(f"indication payload must be 104 bytes, got {len(payload)}")
    (tick,) = _INDICATION.unpack_from(payload)
    kpis = np.frombuffer(payload, dtype=">f8", offset=_INDICATION.size).astype(np.float64)
    return tick, kpis.reshape(3, 4)


def encode_control(scheduling, slicing) -> bytes:
    """Control payload: three u8 scheduling policies then three u16 PRB counts."""
    return _CONTROL.pack(*scheduling, *slicing)


def decode_control(payload: bytes) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    if len(payload) != _CONTROL.size:
        raise ProtocolError(f"control payload must be {_CONTROL.size} bytes")
    values = _CONTROL.unpack(payload)
    return tuple(values[:3]), tuple(values[3:])
