"""PIN-locked software keystore: a file-backed stand-in for a smart card.

The private key is stored encrypted under a key derived from the PIN with
scrypt; three consecutive wrong PINs lock the keystore permanently (until
re-provisioned), and the failure counter is persisted so lockout survives
process restarts.  The private key is never exposed by any operation; all
signing happens inside :meth:`SoftKeystore.sign_bytes`.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from . import crypto
from .crypto import KeyPair, RoleCertificate, SignatureBlock, b64, unb64
from .xmlcanon import Element, canonicalize, parse

MAX_PIN_FAILURES = 3
_KDF_ID = "scrypt-16384-8-1"
_CIPHER_ID = "aes256-gcm"
_SCRYPT_N = 16384
_SCRYPT_R = 8
_SCRYPT_P = 1


class KeystoreError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


class KeystoreLockedError(KeystoreError):
    def __init__(self):
        super().__init__("KEYSTORE_LOCKED", "keystore is locked; re-provision it")


class WrongPinError(KeystoreError):
    def __init__(self, locked_now: bool):
        code = "LOCKED_AFTER_THIS_ATTEMPT" if locked_now else "WRONG_PIN"
        super().__init__(code)
        self.locked_now = locked_now


def _derive_key(pin: str, salt: bytes) -> bytes:
    kdf = Scrypt(salt=salt, length=32, n=_SCRYPT_N, r=_SCRYPT_R, p=_SCRYPT_P)
    return kdf.derive(pin.encode("utf-8"))


@dataclass
class SoftKeystore:
    """Single-owner stateful object; not safe for concurrent use."""

    key_file_path: Path
    encrypted_private_key: bytes
    pin_salt: bytes
    failure_counter: int
    locked: bool
    certificate: RoleCertificate
    # session cache of (pin, derived key): a correct PIN is presented once
    # per owner session, wrong PINs always pay the full KDF
    _session: tuple[str, bytes] | None = field(default=None, repr=False)

    # -- persistence ---------------------------------------------------

    def to_element(self) -> Element:
        return Element(
            "keystore",
            attrs={
                "cipher": _CIPHER_ID,
                "kdf": _KDF_ID,
                "failures": str(self.failure_counter),
                "locked": "true" if self.locked else "false",
            },
            children=[
                self.certificate.to_element(),
                Element("pin-salt", text=b64(self.pin_salt)),
                Element("encrypted-private-key", text=b64(self.encrypted_private_key)),
            ],
        )

    def save(self) -> None:
        tmp = self.key_file_path.with_suffix(".tmp")
        tmp.write_bytes(canonicalize(self.to_element()))
        os.replace(tmp, self.key_file_path)

    @classmethod
    def load(cls, path: str | Path) -> "SoftKeystore":
        path = Path(path)
        el = parse(path.read_bytes())
        if el.name != "keystore":
            raise KeystoreError("MALFORMED_KEYSTORE", f"expected <keystore>, got <{el.name}>")
        return cls(
            key_file_path=path,
            encrypted_private_key=unb64(el.require_child("encrypted-private-key").text),
            pin_salt=unb64(el.require_child("pin-salt").text),
            failure_counter=int(el.attr("failures", "0")),
            locked=el.attr("locked") == "true",
            certificate=RoleCertificate.from_element(el.require_child("certificate")),
        )

    # -- signing --------------------------------------------------------

    def _unlock(self, pin: str) -> bytes:
        """Return the private key bytes, enforcing PIN and lockout rules."""
        if self.locked:
            raise KeystoreLockedError()
        nonce, ct = self.encrypted_private_key[:12], self.encrypted_private_key[12:]
        if self._session is not None and pin == self._session[0]:
            key = self._session[1]
        else:
            key = _derive_key(pin, self.pin_salt)
        try:
            private = AESGCM(key).decrypt(nonce, ct, None)
        except InvalidTag:
            self._session = None
            self.failure_counter += 1
            if self.failure_counter >= MAX_PIN_FAILURES:
                self.locked = True
            self.save()
            raise WrongPinError(locked_now=self.locked) from None
        if self.failure_counter != 0:
            self.failure_counter = 0
            self.save()
        self._session = (pin, key)
        return private

    def sign_bytes(
        self,
        pin: str,
        message: bytes,
        view_binding: tuple[str, str] | None = None,
        *,
        signed_at: int | None = None,
    ) -> SignatureBlock:
        private = self._unlock(pin)
        ts = signed_at if signed_at is not None else int(time.time())
        return crypto.make_signature_block(
            private,
            crypto.fingerprint(self.certificate),
            message,
            ts,
            view_binding,
        )

    def sign_raw(self, pin: str, message: bytes) -> bytes:
        """Raw signature, used when issuing certificates; same PIN rules."""
        return crypto.sign_raw(self._unlock(pin), message)


def create_keystore(
    path: str | Path,
    keypair: KeyPair,
    certificate: RoleCertificate,
    pin: str,
) -> SoftKeystore:
    """Provision (or re-provision) a keystore file. Resets any lockout."""
    path = Path(path)
    salt = os.urandom(16)
    nonce = os.urandom(12)
    key = _derive_key(pin, salt)
    ct = AESGCM(key).encrypt(nonce, keypair.private_key, None)
    store = SoftKeystore(
        key_file_path=path,
        encrypted_private_key=nonce + ct,
        pin_salt=salt,
        failure_counter=0,
        locked=False,
        certificate=certificate,
    )
    store.save()
    return store
