from __future__ import annotations

import pytest

from sda import crypto
from sda.provision import medical_report_definition, medical_report_stylesheets

NOT_BEFORE = crypto.parse_ts("2020-01-01T00:00:00Z")
NOT_AFTER = crypto.parse_ts("2035-01-01T00:00:00Z")
NOW = crypto.parse_ts("2026-08-11T10:00:00Z")

ROSSI_VALUES = {
    "name": "Anna",
    "surname": "Rossi",
    "visit_date": "2002-05-21",
    "exam_type": "Doppler",
    "diagnosis": "Mild venous insufficiency; follow-up in six months.",
}


@pytest.fixture
def emr_definition():
    return medical_report_definition()


@pytest.fixture
def emr_stylesheets():
    return {s.stylesheet_id: s for s in medical_report_stylesheets()}


@pytest.fixture
def rossi_values():
    return dict(ROSSI_VALUES)


@pytest.fixture
def signer_factory(tmp_path):
    """Create (cert, keystore) pairs with a fixed PIN for signing tests."""
    from sda.crypto import generate_keypair, issue_certificate
    from sda.keystore import create_keystore

    count = 0

    def make(role: str = "physician", subject: str = "Dr. Test", pin: str = "123456"):
        nonlocal count
        count += 1
        keys = generate_keypair()
        cert = issue_certificate(keys, subject, role, NOT_BEFORE, NOT_AFTER)
        store = create_keystore(tmp_path / f"signer{count}.keystore.xml", keys, cert, pin)
        return cert, store

    return make
