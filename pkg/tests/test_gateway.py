from __future__ import annotations

import pytest

from sda.protocol.client import (
    CommandDenied,
    GatewayBadResponse,
    GatewayUnreachable,
    PlatformClient,
)
from sda.protocol.gateway import GatewayServer
from sda.protocol.kinds import CommandKind
from sda.provision import medical_report_definition, medical_report_stylesheets
from tests.conftest import ROSSI_VALUES
from tests.helpers import DEFINER_KINDS, PHYSICIAN_KINDS, Desk


@pytest.fixture
def tunneled_desk(tmp_path):
    desk = Desk(tmp_path)
    gateway = GatewayServer(("127.0.0.1", 0), desk.server.port_address("scenario"))
    gateway.start()
    definer = desk.new_principal("definer", "definer")
    desk.install_role(definer, DEFINER_KINDS, None)
    client = desk.client_for(definer)
    client.install_definition(medical_report_definition())
    for sheet in medical_report_stylesheets():
        client.install_stylesheet(sheet)
    physician = desk.new_principal("phys", "physician")
    desk.install_role(physician, PHYSICIAN_KINDS, {"medical-report"})
    yield desk, gateway, physician
    gateway.stop()
    desk.stop()


def _store_one(desk, physician, via):
    from sda.edoc import attach_signature, create_doc
    from tests.conftest import NOW
    from tests.helpers import PIN

    doc = create_doc(medical_report_definition(), ROSSI_VALUES, now=NOW)
    attach_signature(doc, physician.keystore.sign_bytes(PIN, doc.content_bytes(), signed_at=NOW))
    return via.store_doc(doc)


def test_direct_and_tunneled_round_trips_match(tunneled_desk):
    desk, gateway, physician = tunneled_desk
    direct = desk.client_for(physician)
    tunneled = desk.client_for(physician, address=gateway.url)
    doc_id = _store_one(desk, physician, direct)

    for kind, body_args in [
        ("get_doc", (doc_id,)),
        ("search_docs", ("medical-report",)),
        ("render_doc", ("medical-report-en", doc_id)),
        ("verify_doc", (doc_id,)),
    ]:
        a = getattr(direct, kind)(*body_args)
        b = getattr(tunneled, kind)(*body_args)
        assert a == b, kind


def test_tunneled_denial_matches_direct(tunneled_desk):
    desk, gateway, physician = tunneled_desk
    tunneled = desk.client_for(physician, address=gateway.url)
    direct = desk.client_for(physician)
    for client in (direct, tunneled):
        with pytest.raises(CommandDenied) as err:
            client.install_definition(medical_report_definition(9))
        assert err.value.code == "COMMAND_NOT_ALLOWED"


def test_gateway_to_stopped_port(tunneled_desk):
    desk, gateway, physician = tunneled_desk
    admin = desk.client_for(desk.role_set, "administration")
    admin.port_control(CommandKind.STOP_PORT, "scenario")
    tunneled = desk.client_for(physician, address=gateway.url)
    with pytest.raises(GatewayBadResponse):
        tunneled.search_docs("medical-report")
    admin.port_control(CommandKind.START_PORT, "scenario")


def test_gateway_unreachable(tunneled_desk):
    desk, gateway, physician = tunneled_desk
    dead = PlatformClient(
        "http://127.0.0.1:1/", physician.keystore, physician.pin, clock=desk.clock
    )
    with pytest.raises(GatewayUnreachable):
        dead.search_docs("medical-report")


def test_delayed_envelope_denied_same_as_direct(tunneled_desk):
    # a tunneled envelope arriving past the replay window is rejected with
    # the same code as a direct one; simulate delay with a skewed clock
    desk, gateway, physician = tunneled_desk
    skewed = lambda: desk.clock() - desk.config.replay_window_seconds - 10
    direct = PlatformClient(
        desk.address("scenario"), physician.keystore, physician.pin, clock=skewed
    )
    tunneled = PlatformClient(gateway.url, physician.keystore, physician.pin, clock=skewed)
    codes = []
    for client in (direct, tunneled):
        with pytest.raises(CommandDenied) as err:
            client.search_docs("medical-report")
        codes.append(err.value.code)
    assert codes == ["STALE_TIMESTAMP", "STALE_TIMESTAMP"]
