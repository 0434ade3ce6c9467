"""The signed command protocol: envelopes, framing, bodies, transports."""

from .kinds import ADMIN_KINDS, APPLICATION_KINDS, CommandKind
from .envelope import (
    CONTENT_TYPE,
    CommandEnvelope,
    EnvelopeError,
    NonceCache,
    ResponseEnvelope,
    build_envelope,
    build_response,
    verify_envelope,
)
from .framing import FrameError, decode_frame, encode_frame, read_frame, write_frame

__all__ = [
    "ADMIN_KINDS",
    "APPLICATION_KINDS",
    "CommandKind",
    "CONTENT_TYPE",
    "CommandEnvelope",
    "EnvelopeError",
    "NonceCache",
    "ResponseEnvelope",
    "build_envelope",
    "build_response",
    "verify_envelope",
    "FrameError",
    "decode_frame",
    "encode_frame",
    "read_frame",
    "write_frame",
]
