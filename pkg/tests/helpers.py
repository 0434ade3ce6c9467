"""Shared test scaffolding: a provisioned desk-scale platform installation."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

from sda.crypto import KeyPair, RoleCertificate
from sda.keystore import SoftKeystore
from sda.medreg.client import MedRegClient
from sda.medreg.facade import FacadeServer, FacadeState
from sda.medreg.masterdb import MasterDb
from sda.medreg.service import MedRegService, ServiceConfig
from sda.platform.config import PortConfig, ServerConfig, default_port_kinds
from sda.platform.server import PlatformServer
from sda.protocol.client import PlatformClient
from sda.protocol.kinds import CommandKind
from sda.provision import make_principal, medical_report_definition, medical_report_stylesheets

PIN = "123456"

SA_KINDS = {
    CommandKind.CREATE_DOC,
    CommandKind.STORE_DOC,
    CommandKind.GET_DOC,
    CommandKind.SEARCH_DOCS,
    CommandKind.RENDER_DOC,
    CommandKind.VERIFY_DOC,
    CommandKind.LIST_TYPES,
}

PHYSICIAN_KINDS = {
    CommandKind.CREATE_DOC,
    CommandKind.STORE_DOC,
    CommandKind.GET_DOC,
    CommandKind.SEARCH_DOCS,
    CommandKind.RENDER_DOC,
    CommandKind.VERIFY_DOC,
}

VIEWER_KINDS = {CommandKind.RENDER_DOC, CommandKind.VERIFY_DOC, CommandKind.GET_DOC}

DEFINER_KINDS = {
    CommandKind.INSTALL_DEFINITION,
    CommandKind.INSTALL_STYLESHEET,
    CommandKind.LIST_TYPES,
}


@dataclass
class Principal:
    name: str
    keys: KeyPair
    certificate: RoleCertificate
    keystore: SoftKeystore
    pin: str = PIN


class Desk:
    """One platform server plus credentialed principals, under a tmp dir."""

    def __init__(self, root: Path, *, clock=time.time, start=True, replay_window=300):
        self.root = Path(root)
        self.keys_dir = self.root / "keys"
        self.data_dir = self.root / "data"
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock

        self.role_set = self.new_principal("role-set", "role-set")
        self.platform_identity = self.new_principal("platform", "platform")

        self.config = ServerConfig(
            port_configs=[
                PortConfig("scenario", 0, default_port_kinds("scenario")),
                PortConfig("service", 0, default_port_kinds("service")),
                PortConfig("administration", 0, default_port_kinds("administration"), "local"),
            ],
            role_set_certificate_path=self.keys_dir / "role-set.cert.xml",
            platform_keystore_path=self.keys_dir / "platform.keystore.xml",
            data_dir=self.data_dir,
            log_path=self.root / "platform.log",
            replay_window_seconds=replay_window,
            platform_pin=PIN,
        )
        self.server = PlatformServer(self.config, clock=clock)
        if start:
            self.server.start()

    def new_principal(self, name: str, role: str, pin: str = PIN) -> Principal:
        keys, cert, store = make_principal(
            self.keys_dir, name, f"{name} subject", role, pin, now=int(self.clock())
        )
        return Principal(name=name, keys=keys, certificate=cert, keystore=store, pin=pin)

    def address(self, port: str = "scenario") -> str:
        host, tcp = self.server.port_address(port)
        return f"{host}:{tcp}"

    def client_for(self, principal: Principal, port: str = "scenario", address: str | None = None) -> PlatformClient:
        return PlatformClient(
            address or self.address(port),
            principal.keystore,
            principal.pin,
            platform_certificate=self.server.platform_certificate,
            clock=self.clock,
        )

    def install_role(
        self,
        principal: Principal,
        allowed_kinds: set[CommandKind],
        allowed_doc_types: set[str] | None,
    ) -> None:
        admin = self.client_for(self.role_set, "administration")
        admin.install_role(principal.certificate, allowed_kinds, allowed_doc_types)

    def restart(self) -> None:
        """Simulated crash-restart: abandon the old server object, reload."""
        self.server.stop()
        self.server = PlatformServer(self.config, clock=self.clock)
        self.server.start()

    def stop(self) -> None:
        self.server.stop()


class MedSite:
    """Full scenario stack: platform + master-db + facade + client tooling.

    Physicians get both a platform role (their doc signatures must verify at
    the directory) and a master-db principal row; the registrar only exists
    in the master-db.  The facade's scenario service speaks to the platform
    with its own envelope-signing credential.
    """

    def __init__(self, root: Path, *, clock=time.time):
        self.root = Path(root)
        self.clock = clock
        self.desk = Desk(self.root / "platform", clock=clock)

        definer = self.desk.new_principal("definer", "definer")
        self.desk.install_role(definer, DEFINER_KINDS, None)
        dc = self.desk.client_for(definer)
        dc.install_definition(medical_report_definition())
        for sheet in medical_report_stylesheets():
            dc.install_stylesheet(sheet)

        self.sa = self.desk.new_principal("scenario-app", "scenario-app")
        self.desk.install_role(self.sa, SA_KINDS, {"medical-report"})

        self.master = MasterDb(self.root / "master.sqlite", clock=clock)
        self.registrar = self.desk.new_principal("reception", "registrar")
        self.master.add_principal("reception", "registrar", "Front desk", self.registrar.certificate)

        self.service = MedRegService(
            self.master,
            self.desk.client_for(self.sa, "scenario"),
            ServiceConfig(print_dir=self.root / "printouts"),
            clock=clock,
        )
        self.facade = FacadeServer(("127.0.0.1", 0), FacadeState(self.service))
        self.facade.start()

    def add_physician(self, principal_id: str, display_name: str) -> Principal:
        principal = self.desk.new_principal(principal_id, "physician")
        self.desk.install_role(principal, PHYSICIAN_KINDS, {"medical-report"})
        self.master.add_principal(principal_id, "physician", display_name, principal.certificate)
        return principal

    def medreg_client(self, principal: Principal, *, offline: bool = False) -> MedRegClient:
        return MedRegClient(
            self.facade.url,
            principal.name,
            principal.keystore,
            principal.pin,
            self.root / "clients" / principal.name,
            offline=offline,
        )

    def stop(self) -> None:
        self.facade.stop()
        self.master.close()
        self.desk.stop()
