"""Facade/scenario-service configuration file."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from ..xmlcanon import Element, XmlError, canonicalize, parse


class SiteConfigError(Exception):
    pass


@dataclass
class FacadeConfig:
    listen_host: str
    listen_port: int
    platform_address: str  # host:port or gateway URL
    sa_keystore_path: Path
    master_db_path: Path
    print_dir: Path
    platform_certificate_path: Path | None = None
    static_dir: Path | None = None
    sa_pin: str = ""
    emr_type: str = "medical-report"
    signing_stylesheet: str = "medical-report-en"
    print_stylesheet: str = "medical-report-print"
    lease_ttl_seconds: int = 24 * 3600


def load_facade_config(path: str | Path) -> FacadeConfig:
    path = Path(path)
    try:
        root = parse(path.read_bytes())
    except (OSError, XmlError) as exc:
        raise SiteConfigError(f"cannot read config {path}: {exc}") from exc
    if root.name != "facade-config":
        raise SiteConfigError(f"expected <facade-config>, got <{root.name}>")

    def text_of(name: str, default: str | None = None) -> str:
        child = root.child(name)
        if child is None:
            if default is None:
                raise SiteConfigError(f"missing <{name}>")
            return default
        return child.text

    base = path.parent

    def as_path(text: str) -> Path:
        p = Path(text)
        return p if p.is_absolute() else base / p

    listen = text_of("listen")
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        raise SiteConfigError(f"bad listen address {listen!r}")
    static = text_of("static-dir", "")
    platform_cert = text_of("platform-certificate", "")
    return FacadeConfig(
        listen_host=host,
        listen_port=int(port),
        platform_address=text_of("platform"),
        sa_keystore_path=as_path(text_of("sa-keystore")),
        master_db_path=as_path(text_of("master-db")),
        print_dir=as_path(text_of("print-dir", "printouts")),
        platform_certificate_path=as_path(platform_cert) if platform_cert else None,
        static_dir=as_path(static) if static else None,
        sa_pin=os.environ.get("SDA_SA_PIN") or text_of("sa-pin", ""),
        emr_type=text_of("emr-type", "medical-report"),
        signing_stylesheet=text_of("signing-stylesheet", "medical-report-en"),
        print_stylesheet=text_of("print-stylesheet", "medical-report-print"),
        lease_ttl_seconds=int(text_of("lease-ttl-seconds", str(24 * 3600))),
    )


def write_facade_config(cfg: FacadeConfig, path: str | Path) -> None:
    children = [
        Element("listen", text=f"{cfg.listen_host}:{cfg.listen_port}"),
        Element("platform", text=cfg.platform_address),
        Element("sa-keystore", text=str(cfg.sa_keystore_path)),
        Element("master-db", text=str(cfg.master_db_path)),
        Element("print-dir", text=str(cfg.print_dir)),
        Element("sa-pin", text=cfg.sa_pin),
        Element("emr-type", text=cfg.emr_type),
        Element("signing-stylesheet", text=cfg.signing_stylesheet),
        Element("print-stylesheet", text=cfg.print_stylesheet),
        Element("lease-ttl-seconds", text=str(cfg.lease_ttl_seconds)),
    ]
    if cfg.platform_certificate_path:
        children.append(Element("platform-certificate", text=str(cfg.platform_certificate_path)))
    if cfg.static_dir:
        children.append(Element("static-dir", text=str(cfg.static_dir)))
    Path(path).write_bytes(canonicalize(Element("facade-config", children=children)))


def build_facade(cfg: FacadeConfig):
    """Assemble master-db, service and facade server from a config."""
    from ..crypto import RoleCertificate
    from ..keystore import SoftKeystore
    from ..protocol.client import PlatformClient
    from .facade import FacadeServer, FacadeState
    from .masterdb import MasterDb
    from .service import MedRegService, ServiceConfig

    platform_cert = None
    if cfg.platform_certificate_path:
        platform_cert = RoleCertificate.from_element(
            parse(Path(cfg.platform_certificate_path).read_bytes())
        )
    keystore = SoftKeystore.load(cfg.sa_keystore_path)
    platform = PlatformClient(
        cfg.platform_address, keystore, cfg.sa_pin, platform_certificate=platform_cert
    )
    master = MasterDb(cfg.master_db_path)
    service = MedRegService(
        master,
        platform,
        ServiceConfig(
            emr_type=cfg.emr_type,
            signing_stylesheet=cfg.signing_stylesheet,
            print_stylesheet=cfg.print_stylesheet,
            lease_ttl_seconds=cfg.lease_ttl_seconds,
            print_dir=cfg.print_dir,
        ),
    )
    server = FacadeServer((cfg.listen_host, cfg.listen_port), FacadeState(service, static_dir=cfg.static_dir))
    return master, service, server
