from __future__ import annotations

import pytest

from sda.edoc import attach_signature, create_doc
from sda.crypto import fingerprint
from sda.platform.config import PortConfig
from sda.platform.repos import StoreCorruptError
from sda.platform.server import PlatformServer
from sda.protocol.client import CommandDenied, CommandFailed, PlatformUnreachable
from sda.protocol.kinds import CommandKind
from sda.provision import medical_report_definition, medical_report_stylesheets
from tests.conftest import NOW, ROSSI_VALUES
from tests.helpers import DEFINER_KINDS, PHYSICIAN_KINDS, PIN, VIEWER_KINDS, Desk


@pytest.fixture
def desk(tmp_path):
    d = Desk(tmp_path)
    yield d
    d.stop()


@pytest.fixture
def stocked_desk(desk):
    """Desk with definitions installed and a definer + physician set up."""
    definer = desk.new_principal("definer", "definer")
    desk.install_role(definer, DEFINER_KINDS, None)
    client = desk.client_for(definer)
    client.install_definition(medical_report_definition())
    for sheet in medical_report_stylesheets():
        client.install_stylesheet(sheet)
    physician = desk.new_principal("phys", "physician")
    desk.install_role(physician, PHYSICIAN_KINDS, {"medical-report"})
    return desk, definer, physician


def _signed_emr(desk, physician, values=None):
    doc = create_doc(medical_report_definition(), values or ROSSI_VALUES, now=NOW)
    block = physician.keystore.sign_bytes(PIN, doc.content_bytes(), signed_at=NOW)
    return attach_signature(doc, block)


# -- startup and status --------------------------------------------------------

def test_minimal_startup_status(desk):
    status = desk.client_for(desk.role_set, "administration").status()
    assert status.attr("docs") == "0"
    ports = {p.attr("name"): p.attr("state") for p in status.children_named("port")}
    assert ports == {"scenario": "up", "service": "up", "administration": "up"}


def test_static_attributes_fixed_at_startup(tmp_path):
    desk = Desk(tmp_path, start=False)
    desk.config.static_attributes = {"input-partition": "input", "output-partition": "output"}
    desk.server = PlatformServer(desk.config, clock=desk.clock)
    desk.server.start()
    try:
        status = desk.client_for(desk.role_set, "administration").status()
        statics = {
            a.attr("name"): a.text for a in status.children_named("static-attribute")
        }
        assert statics == {"input-partition": "input", "output-partition": "output"}
    finally:
        desk.stop()


def test_missing_role_set_certificate_fails_startup(tmp_path):
    desk = Desk(tmp_path / "a")
    desk.stop()
    cfg = desk.config
    cfg.role_set_certificate_path = tmp_path / "missing.cert.xml"
    with pytest.raises(Exception):
        PlatformServer(cfg)


def test_restart_preserves_counts(stocked_desk):
    desk, definer, physician = stocked_desk
    client = desk.client_for(physician)
    for _ in range(3):
        client.store_doc(_signed_emr(desk, physician))
    desk.restart()
    status = desk.client_for(desk.role_set, "administration").status()
    assert status.attr("docs") == "3"
    assert status.attr("definitions") == "1"
    assert status.attr("stylesheets") == "3"


# -- port control ----------------------------------------------------------------

def test_stop_and_start_service_port(desk):
    admin = desk.client_for(desk.role_set, "administration")
    service_addr = desk.address("service")
    admin.port_control(CommandKind.STOP_PORT, "service")
    viewer = desk.new_principal("viewer", "wysiwys-viewer")
    desk.install_role(viewer, VIEWER_KINDS, None)
    with pytest.raises(PlatformUnreachable):
        desk.client_for(viewer, address=service_addr).status()
    # scenario port unaffected: the command reaches the platform
    with pytest.raises(CommandFailed) as err:
        desk.client_for(viewer, "scenario").get_doc("d1")
    assert err.value.code == "UNKNOWN_DOC"
    admin.port_control(CommandKind.START_PORT, "service")
    with pytest.raises(CommandFailed) as err2:
        desk.client_for(viewer, "service").get_doc("d1")
    assert err2.value.code == "UNKNOWN_DOC"


def test_port_control_denied_outside_admin_port(desk):
    client = desk.client_for(desk.role_set, "scenario")
    with pytest.raises(CommandDenied) as err:
        client.port_control(CommandKind.STOP_PORT, "service")
    assert err.value.code == "COMMAND_NOT_ALLOWED"


def test_port_control_unknown_port(desk):
    admin = desk.client_for(desk.role_set, "administration")
    with pytest.raises(CommandFailed) as err:
        admin.port_control(CommandKind.STOP_PORT, "backdoor")
    assert err.value.code == "UNKNOWN_PORT"


def test_port_restriction_beats_privileged_role(tmp_path):
    desk = Desk(tmp_path, start=False)
    # service port narrowed to rendering only
    desk.config.port_configs[1] = PortConfig(
        "service", 0, frozenset({CommandKind.RENDER_DOC, CommandKind.VERIFY_DOC})
    )
    desk.server = PlatformServer(desk.config, clock=desk.clock)
    desk.server.start()
    try:
        with pytest.raises(CommandDenied) as err:
            desk.client_for(desk.role_set, "service").status()
        assert err.value.code == "COMMAND_NOT_ALLOWED"
        # same command on the administration port is fine
        desk.client_for(desk.role_set, "administration").status()
    finally:
        desk.stop()


# -- authorization ------------------------------------------------------------------

def test_definer_can_install(stocked_desk):
    desk, definer, _ = stocked_desk
    types = desk.client_for(definer).list_types()
    assert [(t.type_name, t.version) for t in types] == [("medical-report", 1)]
    assert types[0].stylesheet_ids == {
        "medical-report-en", "medical-report-it", "medical-report-print",
    }


def test_non_definer_install_denied(stocked_desk):
    desk, _, physician = stocked_desk
    with pytest.raises(CommandDenied) as err:
        desk.client_for(physician).install_definition(medical_report_definition(2))
    assert err.value.code == "COMMAND_NOT_ALLOWED"


def test_type_restriction(stocked_desk):
    desk, definer, physician = stocked_desk
    from sda.edoc import DocTypeDefinition, FieldSpec

    lab = DocTypeDefinition("lab-order", 1, (FieldSpec("what", "string"),))
    desk.client_for(definer).install_definition(lab)
    with pytest.raises(CommandDenied) as err:
        desk.client_for(physician).create_doc("lab-order", {"what": "panel"})
    assert err.value.code == "TYPE_NOT_ALLOWED"


def test_unknown_fingerprint_denied(desk):
    stranger = desk.new_principal("stranger", "nobody")
    with pytest.raises(CommandDenied) as err:
        desk.client_for(stranger).status()
    assert err.value.code == "UNKNOWN_ROLE"


def test_install_role_requires_role_set(stocked_desk):
    desk, _, physician = stocked_desk
    mallory = desk.new_principal("mallory", "intruder")
    with pytest.raises(CommandDenied) as err:
        desk.client_for(physician).install_role(mallory.certificate, PHYSICIAN_KINDS, None)
    assert err.value.code == "COMMAND_NOT_ALLOWED"


def test_revoked_role_is_unknown(stocked_desk):
    desk, _, physician = stocked_desk
    admin = desk.client_for(desk.role_set, "administration")
    admin.revoke_role(fingerprint(physician.certificate))
    with pytest.raises(CommandDenied) as err:
        desk.client_for(physician).search_docs("medical-report")
    assert err.value.code == "UNKNOWN_ROLE"


# -- document lifecycle ----------------------------------------------------------------

def test_store_signed_doc(stocked_desk):
    desk, _, physician = stocked_desk
    doc_id = desk.client_for(physician).store_doc(_signed_emr(desk, physician))
    assert doc_id == "d1"
    fetched = desk.client_for(physician).get_doc(doc_id)
    assert fetched.field_values == ROSSI_VALUES


def test_store_unsigned_doc_rejected(stocked_desk):
    desk, _, physician = stocked_desk
    doc = create_doc(medical_report_definition(), ROSSI_VALUES, now=NOW)
    with pytest.raises(CommandFailed) as err:
        desk.client_for(physician).store_doc(doc)
    assert err.value.code == "UNSIGNED_DOC"


def test_search_matches_brute_force_oracle(stocked_desk):
    desk, _, physician = stocked_desk
    client = desk.client_for(physician)
    stored: dict[str, dict[str, str]] = {}
    for i, state in enumerate(["pending", "pending", "processed"]):
        values = dict(ROSSI_VALUES, name=f"P{i}")
        doc = _signed_emr(desk, physician, values)
        doc.attributes["state"] = state
        doc_id = client.store_doc(doc)
        stored[doc_id] = doc.attributes
    hits = client.search_docs("medical-report", {"state": "pending"})
    oracle = sorted(
        (i for i, attrs in stored.items() if attrs.get("state") == "pending"),
        key=lambda i: int(i[1:]),
    )
    assert hits == oracle
    assert len(hits) == 2


def test_render_and_attribute_round_trip(stocked_desk):
    desk, _, physician = stocked_desk
    client = desk.client_for(physician)
    doc_id = client.store_doc(_signed_emr(desk, physician))
    view = client.render_doc("medical-report-en", doc_id)
    assert "Patient: Rossi Anna" in view.text
    client2 = desk.client_for(desk.role_set, "administration")
    # attributes via a role allowed to set them
    editor = desk.new_principal("editor", "workflow")
    desk.install_role(editor, {CommandKind.SET_ATTRIBUTE, CommandKind.GET_ATTRIBUTE}, None)
    e = desk.client_for(editor)
    e.set_attribute(doc_id, "state", "pending")
    e.set_attribute(doc_id, "state", "processed")
    assert e.get_attribute(doc_id, "state") == "processed"
    assert e.get_attribute(doc_id, "missing") is None
    # attribute edits never broke the signature
    report = client.verify_doc(doc_id)
    assert report.attr("all-valid") == "true"


def test_viewer_role_least_privilege(stocked_desk):
    desk, _, physician = stocked_desk
    viewer = desk.new_principal("viewer", "wysiwys-viewer")
    desk.install_role(viewer, VIEWER_KINDS, None)
    doc_id = desk.client_for(physician).store_doc(_signed_emr(desk, physician))
    v = desk.client_for(viewer, "service")
    assert v.render_doc("medical-report-it", doc_id).text.startswith("REFERTO MEDICO")
    with pytest.raises(CommandDenied) as err:
        v.store_doc(_signed_emr(desk, physician))
    assert err.value.code == "COMMAND_NOT_ALLOWED"


def test_error_leaves_state_unchanged(stocked_desk):
    desk, _, physician = stocked_desk
    client = desk.client_for(physician)
    client.store_doc(_signed_emr(desk, physician))
    before = client.search_docs("medical-report")
    bad = create_doc(medical_report_definition(), ROSSI_VALUES, now=NOW)
    bad.field_values["diagnosis"] = ""  # will re-sign below with tampered content
    block = physician.keystore.sign_bytes(PIN, b"not the doc", signed_at=NOW)
    bad.signatures.append(block)
    with pytest.raises(CommandFailed):
        client.store_doc(bad)
    assert client.search_docs("medical-report") == before


def test_definition_upgrade_keeps_v1_docs_valid(stocked_desk):
    desk, definer, physician = stocked_desk
    client = desk.client_for(physician)
    doc_id = client.store_doc(_signed_emr(desk, physician))
    v2 = medical_report_definition(2)
    desk.client_for(definer).install_definition(v2)
    report = client.verify_doc(doc_id)
    assert report.attr("all-valid") == "true"
    # v1 doc can still be stored after the upgrade
    assert client.store_doc(_signed_emr(desk, physician)) == "d2"


def test_duplicate_definition_version_rejected(stocked_desk):
    desk, definer, _ = stocked_desk
    with pytest.raises(CommandFailed) as err:
        desk.client_for(definer).install_definition(medical_report_definition(1))
    assert err.value.code == "DUPLICATE_DEFINITION"


# -- durability -----------------------------------------------------------------------

def test_reload_after_abandon(stocked_desk):
    desk, _, physician = stocked_desk
    client = desk.client_for(physician)
    acked = [client.store_doc(_signed_emr(desk, physician)) for _ in range(2)]
    # abandon without clean shutdown; a fresh server reads the same data_dir
    desk.restart()
    client = desk.client_for(physician)
    assert client.search_docs("medical-report") == acked


def test_corrupt_doc_file_refuses_load(stocked_desk):
    desk, _, physician = stocked_desk
    doc_id = desk.client_for(physician).store_doc(_signed_emr(desk, physician))
    path = desk.data_dir / "docs" / f"{doc_id}.edoc.xml"
    path.write_bytes(path.read_bytes()[:40])
    desk.server.stop()
    with pytest.raises(StoreCorruptError) as err:
        PlatformServer(desk.config, clock=desk.clock)
    assert doc_id in str(err.value)
    # restore so teardown has a working config
    desk.server = PlatformServer.__new__(PlatformServer)
    desk.server.stop = lambda: None


def test_hundred_doc_reload_snapshot(stocked_desk):
    desk, _, physician = stocked_desk
    client = desk.client_for(physician)
    for i in range(100):
        doc = _signed_emr(desk, physician, dict(ROSSI_VALUES, name=f"p{i}"))
        doc.attributes["state"] = "pending" if i % 3 else "processed"
        client.store_doc(doc)
    before = client.search_docs("medical-report", {"state": "pending"})
    desk.restart()
    client = desk.client_for(physician)
    assert client.search_docs("medical-report", {"state": "pending"}) == before
    assert desk.server.audit() == []
