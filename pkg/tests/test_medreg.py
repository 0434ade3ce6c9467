from __future__ import annotations

import hashlib
import urllib.request

import pytest

from sda.clienttools.wysiwys import review_and_sign
from sda.medreg.client import MedRegClientError, OfflineError
from sda.medreg.lightdb import LightDb
from sda.medreg.records import RecordError
from tests.helpers import PIN, MedSite

PATIENT_ROSSI = {"name": "Anna", "surname": "Rossi", "patient_code": "pc-001", "origin": "external"}
PATIENT_BIANCHI = {"name": "Carlo", "surname": "Bianchi", "patient_code": "pc-002", "origin": "internal"}
DAY = "2026-08-11"


@pytest.fixture(scope="module")
def site(tmp_path_factory):
    s = MedSite(tmp_path_factory.mktemp("medsite"))
    yield s
    s.stop()


@pytest.fixture
def fresh_site(tmp_path):
    s = MedSite(tmp_path)
    yield s
    s.stop()


def _register(site, patient, physician_id, day=DAY, exam="Doppler"):
    reg = site.medreg_client(site.registrar)
    return reg.register_visit(patient, exam, day, physician_id)


def _sign_emr(client, principal, visit_id):
    doc, view = client.emr_generate(visit_id)
    return review_and_sign(
        doc, view, principal.keystore, PIN, assume_yes=True, display=lambda _: None
    )


# -- registration ----------------------------------------------------------------

def test_register_appears_in_worklist(fresh_site):
    phys = fresh_site.add_physician("dr-pillon", "Dr. Pillon")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-pillon")
    db = fresh_site.medreg_client(phys).checkout(DAY)
    assert visit_id in db.visits
    assert db.visits[visit_id].record.exam_type == "Doppler"


def test_register_unknown_physician(fresh_site):
    with pytest.raises(MedRegClientError) as err:
        _register(fresh_site, PATIENT_ROSSI, "dr-nobody")
    assert err.value.code == "UNKNOWN_PHYSICIAN"


def test_register_requires_registrar_session(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    client = fresh_site.medreg_client(phys)
    with pytest.raises(MedRegClientError) as err:
        client.register_visit(PATIENT_ROSSI, "Doppler", DAY, "dr-a")
    assert err.value.http_status == 403


def test_same_patient_twice_distinct_visits(fresh_site):
    fresh_site.add_physician("dr-a", "Dr. A")
    v1 = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    v2 = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    assert v1 != v2


# -- checkout / offline ------------------------------------------------------------

def test_checkout_filters_by_assignee(fresh_site):
    a = fresh_site.add_physician("dr-a", "Dr. A")
    b = fresh_site.add_physician("dr-b", "Dr. B")
    for i in range(3):
        _register(fresh_site, dict(PATIENT_ROSSI, patient_code=f"pa{i}"), "dr-a")
    for i in range(2):
        _register(fresh_site, dict(PATIENT_BIANCHI, patient_code=f"pb{i}"), "dr-b")
    assert len(fresh_site.medreg_client(a).checkout(DAY).visits) == 3
    assert len(fresh_site.medreg_client(b).checkout(DAY).visits) == 2


def test_history_extracts_downloaded(fresh_site):
    from sda.medreg.records import HistoryEntry

    phys = fresh_site.add_physician("dr-a", "Dr. A")
    for date in ("2025-01-10", "2025-06-02"):
        fresh_site.master.add_history(
            HistoryEntry(PATIENT_ROSSI["patient_code"], date, "Doppler", "prior exam")
        )
    _register(fresh_site, PATIENT_ROSSI, "dr-a")
    db = fresh_site.medreg_client(phys).checkout(DAY)
    assert len(db.history) == 2


def test_checkout_offline_leaves_lightdb_unchanged(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    _register(fresh_site, PATIENT_ROSSI, "dr-a")
    online = fresh_site.medreg_client(phys)
    online.checkout(DAY)
    before = hashlib.sha256(online.lightdb_path.read_bytes()).hexdigest()
    offline = fresh_site.medreg_client(phys, offline=True)
    with pytest.raises(OfflineError):
        offline.checkout(DAY)
    after = hashlib.sha256(online.lightdb_path.read_bytes()).hexdigest()
    assert before == after


# -- diagnosis and sync ----------------------------------------------------------------

def test_offline_diagnosis_master_untouched(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.offline = True
    client.diagnose(visit_id, "Initial finding.")
    assert fresh_site.master.get_visit(visit_id).status == "reserved"
    reloaded = LightDb.load(client.lightdb_path)
    assert reloaded.visits[visit_id].record.status == "diagnosed"
    assert reloaded.visits[visit_id].dirty


def test_rediagnosis_latest_wins(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "first draft")
    client.diagnose(visit_id, "final text")
    client.sync()
    assert fresh_site.master.get_visit(visit_id).diagnosis == "final text"


def test_empty_diagnosis_rejected(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    with pytest.raises(RecordError) as err:
        client.diagnose(visit_id, "   ")
    assert err.value.code == "EMPTY_DIAGNOSIS"


def test_sync_converges(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    ids = [
        _register(fresh_site, dict(PATIENT_ROSSI, patient_code=f"p{i}"), "dr-a") for i in range(3)
    ]
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.offline = True
    for i, visit_id in enumerate(ids):
        client.diagnose(visit_id, f"diagnosis {i}")
    client.offline = False
    results = client.sync()
    assert {r["outcome"] for r in results} == {"OK"}
    db = client.lightdb()
    for visit_id in ids:
        master = fresh_site.master.get_visit(visit_id)
        local = db.visits[visit_id].record
        assert master.diagnosis == local.diagnosis
        assert master.status == "diagnosed" == local.status
        assert master.version == local.version


def test_push_without_lease_rejected(fresh_site):
    phys_a = fresh_site.add_physician("dr-a", "Dr. A")
    phys_b = fresh_site.add_physician("dr-b", "Dr. B")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    # B never checked this visit out; push a handcrafted record through the facade
    client_b = fresh_site.medreg_client(phys_b)
    client_b.connect()
    results = client_b._http(
        "POST",
        "/sync",
        {"records": [{"visit_id": visit_id, "base_version": 0, "diagnosis": "bogus"}]},
    )["results"]
    assert results[0]["outcome"] == "NOT_LEASE_HOLDER"
    assert fresh_site.master.get_visit(visit_id).status == "reserved"
    assert fresh_site.master.get_visit(visit_id).diagnosis == ""


def test_admin_edit_stales_offline_copy(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "offline text")
    fresh_site.master.admin_update_visit(visit_id, room="B-12")
    results = client.sync()
    assert results[0]["outcome"] == "STALE_VERSION"
    master = fresh_site.master.get_visit(visit_id)
    assert master.diagnosis == ""
    assert master.room == "B-12"
    assert client.lightdb().visits[visit_id].stale


def test_status_never_moves_backward(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "text")
    client.sync()
    signed = _sign_emr(client, phys, visit_id)
    client.emr_store(signed)
    assert fresh_site.master.get_visit(visit_id).status == "processed"
    # a later push with the old base version cannot regress the record
    results = client._http(
        "POST",
        "/sync",
        {"records": [{"visit_id": visit_id, "base_version": 1, "diagnosis": "late edit"}]},
    )["results"]
    assert results[0]["outcome"] == "STALE_VERSION"
    assert fresh_site.master.get_visit(visit_id).status == "processed"


# -- e-MR ----------------------------------------------------------------------------

def test_generate_emr_fields_equal_master(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "Doppler normal.")
    client.sync()
    doc, view = client.emr_generate(visit_id)
    master = fresh_site.master.get_visit(visit_id)
    assert doc.field_values == {
        "name": master.patient_name,
        "surname": master.patient_surname,
        "visit_date": master.visit_date,
        "exam_type": master.exam_type,
        "diagnosis": master.diagnosis,
    }
    assert doc.signatures == []
    assert "Doppler normal." in view.text


def test_generate_emr_requires_diagnosis(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    with pytest.raises(MedRegClientError) as err:
        client.emr_generate(visit_id)
    assert err.value.code == "NOT_DIAGNOSED"
    assert err.value.http_status == 409


def test_store_signed_emr_and_search(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "All clear.")
    client.sync()
    signed = _sign_emr(client, phys, visit_id)
    doc_id = client.emr_store(signed)
    master = fresh_site.master.get_visit(visit_id)
    assert master.status == "processed"
    assert master.emr_doc_id == doc_id
    hits = fresh_site.desk.client_for(fresh_site.sa).search_docs(
        "medical-report", {"patient_code": PATIENT_ROSSI["patient_code"]}
    )
    assert hits == [doc_id]
    # stored doc verifies, view binding included
    report = fresh_site.desk.client_for(fresh_site.sa).verify_doc(doc_id)
    assert report.attr("all-valid") == "true"


def test_store_wrong_signer_rejected(fresh_site):
    phys_a = fresh_site.add_physician("dr-a", "Dr. A")
    phys_b = fresh_site.add_physician("dr-b", "Dr. B")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client_a = fresh_site.medreg_client(phys_a)
    client_a.checkout(DAY)
    client_a.diagnose(visit_id, "text")
    client_a.sync()
    doc, view = client_a.emr_generate(visit_id)
    signed_by_b = review_and_sign(
        doc, view, phys_b.keystore, PIN, assume_yes=True, display=lambda _: None
    )
    with pytest.raises(MedRegClientError) as err:
        client_a.emr_store(signed_by_b)
    assert err.value.code == "SIGNER_MISMATCH"


def test_store_retry_is_idempotent(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "text")
    client.sync()
    signed = _sign_emr(client, phys, visit_id)
    first = client.emr_store(signed)
    second = client.emr_store(signed)  # replayed request
    assert first == second
    sa = fresh_site.desk.client_for(fresh_site.sa)
    assert sa.search_docs("medical-report", {"visit_id": visit_id}) == [first]


def test_print_deterministic(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "text")
    client.sync()
    doc_id = client.emr_store(_sign_emr(client, phys, visit_id))
    first = client.print_emr(doc_id)
    second = client.print_emr(doc_id)
    from pathlib import Path

    data = Path(first["path"]).read_bytes()
    assert hashlib.sha256(data).hexdigest() == first["digest"]
    assert first["text"] == second["text"]
    assert data == Path(second["path"]).read_bytes()


def test_purge_rules(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "text")
    client.sync()
    signed = _sign_emr(client, phys, visit_id)
    with pytest.raises(RecordError):
        client.purge("d999")  # unknown id
    doc_id = client.emr_store(signed)
    client.purge(doc_id)
    assert client.lightdb().pending_signed == []
    # platform still has it
    assert fresh_site.desk.client_for(fresh_site.sa).get_doc(doc_id).doc_id == doc_id


def test_pending_upload_queue(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "text")
    client.sync()
    signed = _sign_emr(client, phys, visit_id)
    client.offline = True
    with pytest.raises(OfflineError):
        client.emr_store(signed)
    pending = client.lightdb().pending_signed
    assert len(pending) == 1 and pending[0].doc_id == ""
    with pytest.raises(RecordError) as err:
        client.purge("")
    assert err.value.code == "NOT_UPLOADED"
    client.offline = False
    uploaded = client.retry_pending()
    assert len(uploaded) == 1
    client.purge(uploaded[0][1])
    assert client.lightdb().pending_signed == []


# -- facade behavior --------------------------------------------------------------------

def test_session_required(site):
    req = urllib.request.Request(f"{site.facade.url}/worklist?date={DAY}")
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(req)
    assert err.value.code == 401


def test_no_signing_endpoint_exists(site):
    phys = site.add_physician("dr-x", "Dr. X")
    client = site.medreg_client(phys)
    client.connect()
    with pytest.raises(MedRegClientError) as err:
        client._http("POST", "/emr/sign", {"doc_xml": "<edoc/>"})
    assert err.value.http_status == 404


def test_platform_down_maps_to_503_lightdb_endpoints_still_serve(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "text")
    client.sync()
    fresh_site.desk.server.stop()  # platform down, facade still up
    with pytest.raises(MedRegClientError) as err:
        client.emr_generate(visit_id)
    assert err.value.http_status == 503
    assert err.value.code == "PLATFORM_DOWN"
    # master-db-backed endpoints unaffected
    db = client.checkout(DAY)
    assert visit_id in db.visits


def test_facade_serves_static_console(tmp_path):
    from sda.medreg.facade import FacadeServer, FacadeState

    site = MedSite(tmp_path / "site")
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<!doctype html><title>console</title>")
    (static / "main.js").write_text("export {};")
    server = FacadeServer(("127.0.0.1", 0), FacadeState(site.service, static_dir=static))
    server.start()
    try:
        with urllib.request.urlopen(f"{server.url}/index.html") as resp:
            assert resp.status == 200
            assert b"console" in resp.read()
        with urllib.request.urlopen(f"{server.url}/main.js") as resp:
            assert resp.headers["Content-Type"] == "text/javascript"
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(f"{server.url}/../secrets")
        assert err.value.code in (400, 404)
    finally:
        server.stop()
        site.stop()


def test_master_audit_clean_after_full_flow(fresh_site):
    phys = fresh_site.add_physician("dr-a", "Dr. A")
    visit_id = _register(fresh_site, PATIENT_ROSSI, "dr-a")
    client = fresh_site.medreg_client(phys)
    client.checkout(DAY)
    client.diagnose(visit_id, "text")
    client.sync()
    client.emr_store(_sign_emr(client, phys, visit_id))
    assert fresh_site.master.audit_invariants() == []
    assert fresh_site.desk.server.audit() == []
