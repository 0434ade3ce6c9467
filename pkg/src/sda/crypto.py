"""Keys, role certificates, fingerprints and detached signature blocks.

Certificates use a self-contained canonical-XML encoding rather than ASN.1;
interop with an external PKI is a non-goal.  Signatures are Ed25519 over the
canonical bytes of a small ``signed-info`` element, and every signature block
records the algorithm and canonicalization identifiers so the scheme can
evolve without breaking stored documents.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .xmlcanon import Element, XmlError, canonicalize

import base64

ALGORITHM_ID = "ed25519"
CANONICALIZATION_ID = "sda-c14n-1"
FINGERPRINT_HEX_LEN = 64


class CryptoError(Exception):
    """Key, certificate or signature handling failed."""


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def format_ts(epoch: int) -> str:
    """Render an epoch-seconds timestamp as ISO-8601 UTC (Z suffix)."""
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_ts(text: str) -> int:
    try:
        dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ")
    except ValueError as exc:
        raise CryptoError(f"bad timestamp {text!r}") from exc
    return int(dt.replace(tzinfo=timezone.utc).timestamp())


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as exc:
        raise CryptoError(f"bad base64: {exc}") from exc


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    private_key: bytes


def generate_keypair() -> KeyPair:
    private = Ed25519PrivateKey.generate()
    return KeyPair(
        public_key=_raw_public(private.public_key()),
        private_key=_raw_private(private),
    )


def _raw_private(key: Ed25519PrivateKey) -> bytes:
    from cryptography.hazmat.primitives import serialization

    return key.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )


def _raw_public(key: Ed25519PublicKey) -> bytes:
    from cryptography.hazmat.primitives import serialization

    return key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def sign_raw(private_key: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(private_key).sign(message)


def verify_raw(public_key: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


# ---------------------------------------------------------------------------
# Role certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoleCertificate:
    serial: str
    subject_name: str
    role_name: str
    public_key: bytes
    issuer_fingerprint: str  # empty for self-signed
    not_before: int
    not_after: int
    issuer_signature: bytes

    def to_element(self, include_signature: bool = True) -> Element:
        el = Element(
            "certificate",
            attrs={
                "serial": self.serial,
                "subject": self.subject_name,
                "role": self.role_name,
                "issuer-fingerprint": self.issuer_fingerprint,
                "not-before": format_ts(self.not_before),
                "not-after": format_ts(self.not_after),
            },
            children=[Element("public-key", text=b64(self.public_key))],
        )
        if include_signature:
            el.children.append(Element("issuer-signature", text=b64(self.issuer_signature)))
        return el

    def canonical_bytes(self) -> bytes:
        return canonicalize(self.to_element(include_signature=True))

    def signing_bytes(self) -> bytes:
        """The bytes the issuer signs: every field except the signature itself."""
        return canonicalize(self.to_element(include_signature=False))

    @classmethod
    def from_element(cls, el: Element) -> "RoleCertificate":
        if el.name != "certificate":
            raise XmlError(f"expected <certificate>, got <{el.name}>")
        return cls(
            serial=el.require_attr("serial"),
            subject_name=el.require_attr("subject"),
            role_name=el.require_attr("role"),
            public_key=unb64(el.require_child("public-key").text),
            issuer_fingerprint=el.attr("issuer-fingerprint"),
            not_before=parse_ts(el.require_attr("not-before")),
            not_after=parse_ts(el.require_attr("not-after")),
            issuer_signature=unb64(el.require_child("issuer-signature").text),
        )


def fingerprint(cert: RoleCertificate) -> str:
    """SHA-256 of the canonical certificate encoding, lowercase hex."""
    return sha256_hex(cert.canonical_bytes())


def issue_certificate(
    subject_keypair: KeyPair,
    subject_name: str,
    role_name: str,
    not_before: int,
    not_after: int,
    *,
    issuer: tuple[KeyPair, RoleCertificate] | None = None,
    serial: str | None = None,
) -> RoleCertificate:
    """Issue a role certificate; self-signed when no issuer is given."""
    if not_before >= not_after:
        raise CryptoError("validity window is empty")
    if issuer is None:
        signing_key = subject_keypair.private_key
        issuer_fp = ""
    else:
        issuer_keys, issuer_cert = issuer
        signing_key = issuer_keys.private_key
        issuer_fp = fingerprint(issuer_cert)
    unsigned = RoleCertificate(
        serial=serial or f"rc-{secrets.token_hex(8)}",
        subject_name=subject_name,
        role_name=role_name,
        public_key=subject_keypair.public_key,
        issuer_fingerprint=issuer_fp,
        not_before=not_before,
        not_after=not_after,
        issuer_signature=b"",
    )
    signature = sign_raw(signing_key, unsigned.signing_bytes())
    return replace(unsigned, issuer_signature=signature)


def verify_certificate(cert: RoleCertificate, issuer_cert: RoleCertificate | None = None) -> bool:
    """Check the issuer signature; chain to issuer_cert when given."""
    if cert.not_before >= cert.not_after:
        return False
    if issuer_cert is None:
        if cert.issuer_fingerprint:
            return False
        key = cert.public_key
    else:
        if cert.issuer_fingerprint != fingerprint(issuer_cert):
            return False
        key = issuer_cert.public_key
    return verify_raw(key, cert.issuer_signature, cert.signing_bytes())


# ---------------------------------------------------------------------------
# Signature blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignatureBlock:
    """A detached signature over content bytes, optionally bound to a view.

    The view binding (stylesheet id plus digest of the rendered text shown to
    the signer) is what lets a verifier re-render the document and confirm
    the signer saw exactly what is being verified.
    """

    signer_fingerprint: str
    algorithm_id: str
    canonicalization_id: str
    signed_at: int
    content_digest: str
    view_stylesheet_id: str
    view_digest: str
    signature_value: bytes

    def signed_info_bytes(self) -> bytes:
        el = Element(
            "signed-info",
            attrs={
                "algorithm": self.algorithm_id,
                "canonicalization": self.canonicalization_id,
                "content-digest": self.content_digest,
                "signed-at": format_ts(self.signed_at),
                "view-stylesheet": self.view_stylesheet_id,
                "view-digest": self.view_digest,
            },
        )
        return canonicalize(el)

    def to_element(self) -> Element:
        return Element(
            "signature",
            attrs={
                "signer": self.signer_fingerprint,
                "algorithm": self.algorithm_id,
                "canonicalization": self.canonicalization_id,
                "signed-at": format_ts(self.signed_at),
                "content-digest": self.content_digest,
                "view-stylesheet": self.view_stylesheet_id,
                "view-digest": self.view_digest,
            },
            text=b64(self.signature_value),
        )

    @classmethod
    def from_element(cls, el: Element) -> "SignatureBlock":
        if el.name != "signature":
            raise XmlError(f"expected <signature>, got <{el.name}>")
        block = cls(
            signer_fingerprint=el.require_attr("signer"),
            algorithm_id=el.require_attr("algorithm"),
            canonicalization_id=el.require_attr("canonicalization"),
            signed_at=parse_ts(el.require_attr("signed-at")),
            content_digest=el.require_attr("content-digest"),
            view_stylesheet_id=el.attr("view-stylesheet"),
            view_digest=el.attr("view-digest"),
            signature_value=unb64(el.text),
        )
        if block.view_stylesheet_id and not block.view_digest:
            raise XmlError("view binding without a view digest")
        return block


def make_signature_block(
    private_key: bytes,
    signer_fingerprint: str,
    content: bytes,
    signed_at: int,
    view_binding: tuple[str, str] | None = None,
) -> SignatureBlock:
    stylesheet_id, view_digest = view_binding if view_binding else ("", "")
    if stylesheet_id and not view_digest:
        raise CryptoError("view binding requires a view digest")
    block = SignatureBlock(
        signer_fingerprint=signer_fingerprint,
        algorithm_id=ALGORITHM_ID,
        canonicalization_id=CANONICALIZATION_ID,
        signed_at=int(signed_at),
        content_digest=sha256_hex(content),
        view_stylesheet_id=stylesheet_id,
        view_digest=view_digest,
        signature_value=b"",
    )
    return replace(block, signature_value=sign_raw(private_key, block.signed_info_bytes()))


@dataclass(frozen=True)
class VerificationResult:
    valid: bool
    reason: str = ""


def verify_signature(cert: RoleCertificate, content: bytes, block: SignatureBlock) -> VerificationResult:
    """Report-style verification: failures are returned, never raised."""
    if block.signer_fingerprint != fingerprint(cert):
        return VerificationResult(False, "FINGERPRINT_MISMATCH")
    if block.algorithm_id != ALGORITHM_ID or block.canonicalization_id != CANONICALIZATION_ID:
        return VerificationResult(False, "UNSUPPORTED_ALGORITHM")
    if block.content_digest != sha256_hex(content):
        return VerificationResult(False, "DIGEST_MISMATCH")
    if not verify_raw(cert.public_key, block.signature_value, block.signed_info_bytes()):
        return VerificationResult(False, "BAD_SIGNATURE")
    return VerificationResult(True)
