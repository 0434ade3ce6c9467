"""Desk-scale provisioning helpers: the medical-report type, its stylesheets,
and shortcuts for creating credentialed principals (keypair + certificate +
keystore file) used by the tools, the demo and the test suite.
"""

from __future__ import annotations

from pathlib import Path

from . import crypto
from .crypto import KeyPair, RoleCertificate
from .edoc import DocTypeDefinition, FieldSpec, Stylesheet
from .keystore import SoftKeystore, create_keystore

MEDICAL_REPORT_TYPE = "medical-report"

_EN_TEMPLATE = (
    "MEDICAL REPORT\n"
    "Patient: {field:surname} {field:name}\n"
    "Date of visit: {field:visit_date}\n"
    "Examination: {field:exam_type}\n"
    "\n"
    "Diagnosis:\n"
    "{field:diagnosis}\n"
)

_IT_TEMPLATE = (
    "REFERTO MEDICO\n"
    "Paziente: {field:surname} {field:name}\n"
    "Data della visita: {field:visit_date}\n"
    "Esame: {field:exam_type}\n"
    "\n"
    "Diagnosi:\n"
    "{field:diagnosis}\n"
)


def medical_report_definition(version: int = 1) -> DocTypeDefinition:
    return DocTypeDefinition(
        type_name=MEDICAL_REPORT_TYPE,
        version=version,
        fields=(
            FieldSpec("name", "string", form_label="Name"),
            FieldSpec("surname", "string", form_label="Surname"),
            FieldSpec("visit_date", "date", form_label="Date of visit"),
            FieldSpec("exam_type", "string", form_label="Examination"),
            FieldSpec("diagnosis", "string", form_label="Diagnosis"),
        ),
    )


def medical_report_stylesheets() -> list[Stylesheet]:
    return [
        Stylesheet("medical-report-en", MEDICAL_REPORT_TYPE, "en", _EN_TEMPLATE),
        Stylesheet("medical-report-it", MEDICAL_REPORT_TYPE, "it", _IT_TEMPLATE),
        Stylesheet("medical-report-print", MEDICAL_REPORT_TYPE, "en", _EN_TEMPLATE),
    ]


DEFAULT_VALIDITY_YEARS = 10


def _window(now: int) -> tuple[int, int]:
    return now - 60, now + DEFAULT_VALIDITY_YEARS * 365 * 86400


def make_principal(
    directory: str | Path,
    name: str,
    subject: str,
    role: str,
    pin: str,
    *,
    issuer: tuple[KeyPair, RoleCertificate] | None = None,
    now: int | None = None,
) -> tuple[KeyPair, RoleCertificate, SoftKeystore]:
    """Create keypair + certificate + keystore file for one principal.

    Writes ``<name>.keystore.xml`` and ``<name>.cert.xml`` under *directory*.
    """
    import time

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    now = int(now if now is not None else time.time())
    not_before, not_after = _window(now)
    keys = crypto.generate_keypair()
    cert = crypto.issue_certificate(
        keys, subject, role, not_before, not_after, issuer=issuer
    )
    store = create_keystore(directory / f"{name}.keystore.xml", keys, cert, pin)
    (directory / f"{name}.cert.xml").write_bytes(cert.canonical_bytes())
    return keys, cert, store


def make_principal_issued_by(
    directory: str | Path,
    name: str,
    subject: str,
    role: str,
    pin: str,
    issuer_keystore: SoftKeystore,
    issuer_pin: str,
    *,
    now: int | None = None,
) -> tuple[KeyPair, RoleCertificate, SoftKeystore]:
    """Like make_principal, but the issuer signs through its keystore, so the
    issuer's private key never leaves it."""
    import time
    from dataclasses import replace
    import secrets

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    now = int(now if now is not None else time.time())
    not_before, not_after = _window(now)
    keys = crypto.generate_keypair()
    unsigned = RoleCertificate(
        serial=f"rc-{secrets.token_hex(8)}",
        subject_name=subject,
        role_name=role,
        public_key=keys.public_key,
        issuer_fingerprint=crypto.fingerprint(issuer_keystore.certificate),
        not_before=not_before,
        not_after=not_after,
        issuer_signature=b"",
    )
    signature = issuer_keystore.sign_raw(issuer_pin, unsigned.signing_bytes())
    cert = replace(unsigned, issuer_signature=signature)
    store = create_keystore(directory / f"{name}.keystore.xml", keys, cert, pin)
    (directory / f"{name}.cert.xml").write_bytes(cert.canonical_bytes())
    return keys, cert, store
