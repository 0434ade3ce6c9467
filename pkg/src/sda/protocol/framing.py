"""Length-prefixed frames on a byte stream.

A frame is a 4-byte big-endian payload length followed by the canonical XML
of one envelope.  The declared length is checked against the configured
maximum before the body is read, so an oversized declaration costs nothing.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

from ..xmlcanon import XmlError, parse
from .envelope import CommandEnvelope, ResponseEnvelope

DEFAULT_MAX_FRAME_BYTES = 4 * 1024 * 1024

_LEN = struct.Struct(">I")


class FrameError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code  # OVERSIZE_FRAME | MALFORMED


def encode_frame(payload: bytes, max_bytes: int = DEFAULT_MAX_FRAME_BYTES) -> bytes:
    if len(payload) > max_bytes:
        raise FrameError("OVERSIZE_FRAME", f"{len(payload)} > {max_bytes}")
    return _LEN.pack(len(payload)) + payload


def decode_frame(data: bytes, max_bytes: int = DEFAULT_MAX_FRAME_BYTES) -> bytes:
    if len(data) < _LEN.size:
        raise FrameError("MALFORMED", "short frame header")
    (declared,) = _LEN.unpack_from(data)
    if declared > max_bytes:
        raise FrameError("OVERSIZE_FRAME", f"declared {declared} > {max_bytes}")
    if declared != len(data) - _LEN.size:
        raise FrameError("MALFORMED", f"declared {declared}, got {len(data) - _LEN.size}")
    return data[_LEN.size :]


def read_frame(stream: BinaryIO, max_bytes: int = DEFAULT_MAX_FRAME_BYTES) -> bytes | None:
    """Read one frame; None on clean EOF before any header byte."""
    header = stream.read(_LEN.size)
    if not header:
        return None
    if len(header) < _LEN.size:
        raise FrameError("MALFORMED", "truncated frame header")
    (declared,) = _LEN.unpack(header)
    if declared > max_bytes:
        raise FrameError("OVERSIZE_FRAME", f"declared {declared} > {max_bytes}")
    payload = b""
    while len(payload) < declared:
        chunk = stream.read(declared - len(payload))
        if not chunk:
            raise FrameError("MALFORMED", "truncated frame body")
        payload += chunk
    return payload


def write_frame(stream: BinaryIO, payload: bytes, max_bytes: int = DEFAULT_MAX_FRAME_BYTES) -> None:
    stream.write(encode_frame(payload, max_bytes))
    stream.flush()


def parse_command(payload: bytes) -> CommandEnvelope:
    try:
        return CommandEnvelope.from_element(parse(payload))
    except XmlError as exc:
        raise FrameError("MALFORMED", str(exc)) from exc


def parse_response(payload: bytes) -> ResponseEnvelope:
    try:
        return ResponseEnvelope.from_element(parse(payload))
    except XmlError as exc:
        raise FrameError("MALFORMED", str(exc)) from exc
