"""Signed command and response envelopes with replay protection.

Every command carries a fresh 128-bit nonce, an issue timestamp, the sender's
role certificate and a signature over the canonical (kind, body, nonce,
issued_at) core.  The platform refuses envelopes outside the replay window
and nonces it has already seen; it signs every response with its own
certificate so clients can verify what they got back.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass

from .. import crypto
from ..crypto import RoleCertificate, SignatureBlock, format_ts, parse_ts
from ..keystore import SoftKeystore
from ..xmlcanon import Element, XmlError, canonicalize
from .kinds import CommandKind

PROTO_VERSION = "1"
CONTENT_TYPE = "application/aida+xml"

RESPONSE_STATUSES = ("OK", "DENIED", "ERROR")

# Error codes DENIED responses may carry.
DENIED_CODES = (
    "UNKNOWN_ROLE",
    "COMMAND_NOT_ALLOWED",
    "TYPE_NOT_ALLOWED",
    "BAD_ENVELOPE_SIGNATURE",
    "REPLAY",
    "STALE_TIMESTAMP",
    "EXPIRED_CERTIFICATE",
)


class EnvelopeError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


def _core_element(kind: CommandKind, body: Element, nonce: str, issued_at: int) -> Element:
    return Element(
        "command",
        attrs={
            "proto": PROTO_VERSION,
            "kind": kind.value,
            "nonce": nonce,
            "issued": format_ts(issued_at),
        },
        children=[Element("body", children=[body])],
    )


@dataclass
class CommandEnvelope:
    kind: CommandKind
    body: Element
    nonce: str
    issued_at: int
    certificate: RoleCertificate
    signature: SignatureBlock

    def core_bytes(self) -> bytes:
        return canonicalize(_core_element(self.kind, self.body, self.nonce, self.issued_at))

    def to_element(self) -> Element:
        el = _core_element(self.kind, self.body, self.nonce, self.issued_at)
        el.children.append(self.certificate.to_element())
        el.children.append(self.signature.to_element())
        return el

    def to_bytes(self) -> bytes:
        return canonicalize(self.to_element())

    @classmethod
    def from_element(cls, el: Element) -> "CommandEnvelope":
        if el.name != "command":
            raise EnvelopeError("MALFORMED", f"expected <command>, got <{el.name}>")
        if el.attr("proto") != PROTO_VERSION:
            raise EnvelopeError("MALFORMED", f"unsupported protocol version {el.attr('proto')!r}")
        try:
            kind = CommandKind(el.require_attr("kind"))
        except ValueError:
            raise EnvelopeError("MALFORMED", f"unknown command kind {el.attr('kind')!r}") from None
        body_el = el.require_child("body")
        if len(body_el.children) != 1:
            raise EnvelopeError("MALFORMED", "body must contain exactly one element")
        try:
            return cls(
                kind=kind,
                body=body_el.children[0],
                nonce=el.require_attr("nonce"),
                issued_at=parse_ts(el.require_attr("issued")),
                certificate=RoleCertificate.from_element(el.require_child("certificate")),
                signature=SignatureBlock.from_element(el.require_child("signature")),
            )
        except (XmlError, crypto.CryptoError) as exc:
            raise EnvelopeError("MALFORMED", str(exc)) from exc


def build_envelope(
    kind: CommandKind,
    body: Element,
    keystore: SoftKeystore,
    pin: str,
    *,
    now: int | None = None,
) -> CommandEnvelope:
    issued_at = int(now if now is not None else time.time())
    nonce = secrets.token_hex(16)
    core = canonicalize(_core_element(kind, body, nonce, issued_at))
    signature = keystore.sign_bytes(pin, core, signed_at=issued_at)
    return CommandEnvelope(
        kind=kind,
        body=body,
        nonce=nonce,
        issued_at=issued_at,
        certificate=keystore.certificate,
        signature=signature,
    )


class NonceCache:
    """Replay guard: check-then-record is atomic under one lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self._seen: dict[str, int] = {}

    def check_and_record(self, nonce: str, now: int, window_seconds: int) -> bool:
        """True if the nonce was unseen (and is now recorded)."""
        with self._lock:
            horizon = now - 2 * window_seconds
            if len(self._seen) > 4096:
                self._seen = {n: t for n, t in self._seen.items() if t >= horizon}
            if nonce in self._seen and self._seen[nonce] >= horizon:
                return False
            self._seen[nonce] = now
            return True


def verify_envelope(
    env: CommandEnvelope,
    now: int,
    nonce_cache: NonceCache,
    replay_window_seconds: int,
) -> str:
    """Authenticate an envelope; returns the sender certificate fingerprint.

    Raises EnvelopeError with BAD_ENVELOPE_SIGNATURE, STALE_TIMESTAMP,
    EXPIRED_CERTIFICATE or REPLAY.
    """
    report = crypto.verify_signature(env.certificate, env.core_bytes(), env.signature)
    if not report.valid:
        raise EnvelopeError("BAD_ENVELOPE_SIGNATURE", report.reason)
    if abs(env.issued_at - now) > replay_window_seconds:
        raise EnvelopeError("STALE_TIMESTAMP", f"issued {format_ts(env.issued_at)}")
    if not (env.certificate.not_before <= now <= env.certificate.not_after):
        raise EnvelopeError("EXPIRED_CERTIFICATE")
    if not nonce_cache.check_and_record(env.nonce, now, replay_window_seconds):
        raise EnvelopeError("REPLAY", f"nonce {env.nonce} already seen")
    return crypto.fingerprint(env.certificate)


# ---------------------------------------------------------------------------
# Responses
# ---------------------------------------------------------------------------

def _response_core(reply_to: str, status: str, error_code: str, payload: Element) -> Element:
    return Element(
        "response",
        attrs={
            "proto": PROTO_VERSION,
            "reply-to": reply_to,
            "status": status,
            "error-code": error_code,
        },
        children=[Element("payload", children=[payload])],
    )


@dataclass
class ResponseEnvelope:
    in_reply_to_nonce: str
    status: str  # OK | DENIED | ERROR
    error_code: str
    payload: Element
    signature: SignatureBlock

    def core_bytes(self) -> bytes:
        return canonicalize(
            _response_core(self.in_reply_to_nonce, self.status, self.error_code, self.payload)
        )

    def to_element(self) -> Element:
        el = _response_core(self.in_reply_to_nonce, self.status, self.error_code, self.payload)
        el.children.append(self.signature.to_element())
        return el

    def to_bytes(self) -> bytes:
        return canonicalize(self.to_element())

    @classmethod
    def from_element(cls, el: Element) -> "ResponseEnvelope":
        if el.name != "response":
            raise EnvelopeError("MALFORMED", f"expected <response>, got <{el.name}>")
        status = el.require_attr("status")
        if status not in RESPONSE_STATUSES:
            raise EnvelopeError("MALFORMED", f"unknown status {status!r}")
        payload_el = el.require_child("payload")
        if len(payload_el.children) != 1:
            raise EnvelopeError("MALFORMED", "payload must contain exactly one element")
        try:
            return cls(
                in_reply_to_nonce=el.require_attr("reply-to"),
                status=status,
                error_code=el.attr("error-code"),
                payload=payload_el.children[0],
                signature=SignatureBlock.from_element(el.require_child("signature")),
            )
        except (XmlError, crypto.CryptoError) as exc:
            raise EnvelopeError("MALFORMED", str(exc)) from exc


def build_response(
    reply_to: str,
    status: str,
    error_code: str,
    payload: Element,
    keystore: SoftKeystore,
    pin: str,
    *,
    now: int | None = None,
) -> ResponseEnvelope:
    ts = int(now if now is not None else time.time())
    core = canonicalize(_response_core(reply_to, status, error_code, payload))
    signature = keystore.sign_bytes(pin, core, signed_at=ts)
    return ResponseEnvelope(
        in_reply_to_nonce=reply_to,
        status=status,
        error_code=error_code,
        payload=payload,
        signature=signature,
    )


def verify_response(resp: ResponseEnvelope, platform_cert: RoleCertificate) -> None:
    report = crypto.verify_signature(platform_cert, resp.core_bytes(), resp.signature)
    if not report.valid:
        raise EnvelopeError("BAD_PLATFORM_SIGNATURE", report.reason)
