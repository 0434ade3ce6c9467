"""Server configuration: an XML file mirroring ServerConfig.

``SDA_DATA_DIR`` overrides the configured data directory and
``SDA_PLATFORM_PIN`` the keystore PIN, so deployments can keep the PIN out
of the config file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from ..protocol.framing import DEFAULT_MAX_FRAME_BYTES
from ..protocol.kinds import ADMIN_KINDS, APPLICATION_KINDS, CommandKind
from ..xmlcanon import Element, XmlError, canonicalize, parse

PORT_NAMES = ("scenario", "service", "administration")


class ConfigError(Exception):
    pass


@dataclass
class PortConfig:
    port_name: str
    tcp_port: int
    allowed_kinds: frozenset[CommandKind]
    visibility: str = "external"  # local | external

    def bind_host(self) -> str:
        return "127.0.0.1" if self.visibility == "local" else "0.0.0.0"


def default_port_kinds(port_name: str) -> frozenset[CommandKind]:
    """Application ports accept the application set; the administration port
    additionally accepts the port-control commands."""
    if port_name == "administration":
        return frozenset(CommandKind)
    return APPLICATION_KINDS


@dataclass
class ServerConfig:
    port_configs: list[PortConfig]
    role_set_certificate_path: Path
    platform_keystore_path: Path
    data_dir: Path
    log_path: Path
    db_connection: str = ""
    replay_window_seconds: int = 300
    max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES
    platform_pin: str = ""
    # set once at startup, never changed (e.g. document-directory partition labels)
    static_attributes: dict[str, str] = field(default_factory=dict)

    def port(self, name: str) -> PortConfig:
        for p in self.port_configs:
            if p.port_name == name:
                return p
        raise ConfigError(f"no port named {name!r}")

    def validate(self) -> None:
        names = [p.port_name for p in self.port_configs]
        if sorted(names) != sorted(set(names)):
            raise ConfigError("duplicate port names")
        for p in self.port_configs:
            if p.port_name not in PORT_NAMES:
                raise ConfigError(f"unknown port name {p.port_name!r}")
        admins = [p for p in self.port_configs if p.port_name == "administration"]
        if len(admins) != 1:
            raise ConfigError("exactly one administration port is required")
        if admins[0].visibility != "local":
            raise ConfigError("the administration port must be local")
        for p in self.port_configs:
            if p.port_name != "administration" and p.allowed_kinds & ADMIN_KINDS:
                raise ConfigError(f"port-control commands are not allowed on {p.port_name}")
        if not self.role_set_certificate_path.is_file():
            raise ConfigError(f"role-set certificate not found: {self.role_set_certificate_path}")
        if not self.platform_keystore_path.is_file():
            raise ConfigError(f"platform keystore not found: {self.platform_keystore_path}")


def _parse_port(el: Element) -> PortConfig:
    name = el.require_attr("name")
    allows = el.children_named("allow")
    if allows:
        try:
            kinds = frozenset(CommandKind(a.require_attr("kind")) for a in allows)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        kinds = default_port_kinds(name)
    return PortConfig(
        port_name=name,
        tcp_port=int(el.require_attr("tcp-port")),
        allowed_kinds=kinds,
        visibility=el.attr("visibility", "local" if name == "administration" else "external"),
    )


def load_config(path: str | Path) -> ServerConfig:
    path = Path(path)
    try:
        root = parse(path.read_bytes())
    except (OSError, XmlError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if root.name != "server-config":
        raise ConfigError(f"expected <server-config>, got <{root.name}>")

    def text_of(name: str, default: str | None = None) -> str:
        child = root.child(name)
        if child is None:
            if default is None:
                raise ConfigError(f"missing <{name}>")
            return default
        return child.text

    base = path.parent

    def as_path(text: str) -> Path:
        p = Path(text)
        return p if p.is_absolute() else base / p

    data_dir = os.environ.get("SDA_DATA_DIR") or text_of("data-dir")
    cfg = ServerConfig(
        port_configs=[_parse_port(p) for p in root.children_named("port")],
        role_set_certificate_path=as_path(text_of("role-set-certificate")),
        platform_keystore_path=as_path(text_of("platform-keystore")),
        data_dir=as_path(data_dir),
        log_path=as_path(text_of("log-path", "platform.log")),
        db_connection=text_of("db-connection", ""),
        replay_window_seconds=int(text_of("replay-window-seconds", "300")),
        max_frame_bytes=int(text_of("max-frame-bytes", str(DEFAULT_MAX_FRAME_BYTES))),
        platform_pin=os.environ.get("SDA_PLATFORM_PIN") or text_of("platform-pin", ""),
        static_attributes={
            a.require_attr("name"): a.text for a in root.children_named("static-attribute")
        },
    )
    cfg.validate()
    return cfg


def write_config(cfg: ServerConfig, path: str | Path) -> None:
    """Write a config file (used by provisioning and tests)."""
    ports = []
    for p in cfg.port_configs:
        children = []
        if p.allowed_kinds != default_port_kinds(p.port_name):
            children = [Element("allow", attrs={"kind": k.value}) for k in sorted(p.allowed_kinds, key=lambda k: k.value)]
        ports.append(
            Element(
                "port",
                attrs={"name": p.port_name, "tcp-port": str(p.tcp_port), "visibility": p.visibility},
                children=children,
            )
        )
    root = Element(
        "server-config",
        children=ports
        + [
            Element("static-attribute", attrs={"name": n}, text=v)
            for n, v in sorted(cfg.static_attributes.items())
        ]
        + [
            Element("role-set-certificate", text=str(cfg.role_set_certificate_path)),
            Element("platform-keystore", text=str(cfg.platform_keystore_path)),
            Element("data-dir", text=str(cfg.data_dir)),
            Element("log-path", text=str(cfg.log_path)),
            Element("db-connection", text=cfg.db_connection),
            Element("replay-window-seconds", text=str(cfg.replay_window_seconds)),
            Element("max-frame-bytes", text=str(cfg.max_frame_bytes)),
            Element("platform-pin", text=cfg.platform_pin),
        ],
    )
    Path(path).write_bytes(canonicalize(root))
