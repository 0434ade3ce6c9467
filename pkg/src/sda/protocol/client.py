"""Client side of the protocol: direct TCP or HTTP-gateway transport.

Every command is signed with the caller's keystore; when a platform
certificate is supplied the response signature and reply nonce are checked,
so a client can detect a tampered or misdirected reply.
"""

from __future__ import annotations

import http.client
import socket
import time
from urllib.parse import urlsplit

from ..crypto import RoleCertificate
from ..edoc import DocTypeDefinition, EDoc, RenderedView, Stylesheet
from ..keystore import SoftKeystore
from ..xmlcanon import Element
from . import bodies
from .envelope import (
    CONTENT_TYPE,
    CommandEnvelope,
    ResponseEnvelope,
    build_envelope,
    verify_response,
)
from .framing import DEFAULT_MAX_FRAME_BYTES, FrameError, parse_response
from .kinds import CommandKind


class ClientError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


class CommandDenied(ClientError):
    pass


class CommandFailed(ClientError):
    pass


class PlatformUnreachable(ClientError):
    def __init__(self, detail: str = ""):
        super().__init__("PLATFORM_UNREACHABLE", detail)


class GatewayUnreachable(ClientError):
    def __init__(self, detail: str = ""):
        super().__init__("GATEWAY_UNREACHABLE", detail)


class GatewayBadResponse(ClientError):
    def __init__(self, detail: str = ""):
        super().__init__("GATEWAY_BAD_RESPONSE", detail)


def _parse_hostport(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ClientError("BAD_ADDRESS", address)
    return host, int(port)


class PlatformClient:
    """Signed-command client over a platform port or an HTTP gateway.

    *address* is either ``host:port`` (direct) or an ``http://...`` gateway
    URL; the two are semantically identical.
    """

    def __init__(
        self,
        address: str,
        keystore: SoftKeystore,
        pin: str,
        *,
        platform_certificate: RoleCertificate | None = None,
        timeout: float = 10.0,
        max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES,
        clock=time.time,
    ):
        self.address = address
        self.keystore = keystore
        self.pin = pin
        self.platform_certificate = platform_certificate
        self.timeout = timeout
        self.max_frame_bytes = max_frame_bytes
        self.clock = clock
        self._via_gateway = address.startswith("http://") or address.startswith("https://")

    # -- transport -----------------------------------------------------------

    def _round_trip(self, payload: bytes) -> bytes:
        if self._via_gateway:
            return self._via_http(payload)
        host, port = _parse_hostport(self.address)
        try:
            with socket.create_connection((host, port), timeout=self.timeout) as sock:
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                stream = sock.makefile("rwb")
                from .framing import read_frame, write_frame

                write_frame(stream, payload, self.max_frame_bytes)
                reply = read_frame(stream, self.max_frame_bytes)
        except FrameError:
            raise
        except OSError as exc:
            raise PlatformUnreachable(str(exc)) from exc
        if reply is None:
            raise PlatformUnreachable("connection closed before a response arrived")
        return reply

    def _via_http(self, payload: bytes) -> bytes:
        parts = urlsplit(self.address)
        path = parts.path or "/"
        conn_cls = http.client.HTTPConnection
        try:
            conn = conn_cls(parts.hostname, parts.port, timeout=self.timeout)
            conn.connect()
            conn.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn.request("POST", path, body=payload, headers={"Content-Type": CONTENT_TYPE})
            resp = conn.getresponse()
            data = resp.read()
        except OSError as exc:
            raise GatewayUnreachable(str(exc)) from exc
        finally:
            try:
                conn.close()
            except Exception:
                pass
        if resp.status != 200:
            raise GatewayBadResponse(f"HTTP {resp.status}: {data[:200].decode('utf-8', 'replace')}")
        return data

    # -- request --------------------------------------------------------------

    def request(self, kind: CommandKind, body: Element) -> ResponseEnvelope:
        env = build_envelope(kind, body, self.keystore, self.pin, now=int(self.clock()))
        return self._exchange(env)

    def _exchange(self, env: CommandEnvelope) -> ResponseEnvelope:
        reply = self._round_trip(env.to_bytes())
        resp = parse_response(reply)
        if self.platform_certificate is not None:
            verify_response(resp, self.platform_certificate)
        if resp.in_reply_to_nonce and resp.in_reply_to_nonce != env.nonce:
            raise ClientError("BAD_REPLY", "response nonce does not match the request")
        return resp

    def call(self, kind: CommandKind, body: Element) -> Element:
        """Issue a command; return the payload or raise on DENIED/ERROR."""
        resp = self.request(kind, body)
        if resp.status == "DENIED":
            raise CommandDenied(resp.error_code, resp.payload.text)
        if resp.status == "ERROR":
            raise CommandFailed(resp.error_code, resp.payload.text)
        return resp.payload

    # -- convenience wrappers ----------------------------------------------------

    def install_definition(self, defn: DocTypeDefinition) -> None:
        self.call(CommandKind.INSTALL_DEFINITION, bodies.install_definition_body(defn))

    def install_stylesheet(self, sheet: Stylesheet) -> None:
        self.call(CommandKind.INSTALL_STYLESHEET, bodies.install_stylesheet_body(sheet))

    def install_role(
        self,
        cert: RoleCertificate,
        allowed_kinds: set[CommandKind],
        allowed_doc_types: set[str] | None,
    ) -> None:
        self.call(
            CommandKind.INSTALL_ROLE, bodies.install_role_body(cert, allowed_kinds, allowed_doc_types)
        )

    def revoke_role(self, fingerprint: str) -> None:
        self.call(CommandKind.REVOKE_ROLE, bodies.revoke_role_body(fingerprint))

    def create_doc(self, type_name: str, values: dict[str, str], version: int | None = None) -> EDoc:
        payload = self.call(CommandKind.CREATE_DOC, bodies.create_doc_body(type_name, values, version))
        return EDoc.from_element(payload)

    def store_doc(self, doc: EDoc) -> str:
        payload = self.call(CommandKind.STORE_DOC, bodies.store_doc_body(doc))
        return bodies.parse_stored_payload(payload)

    def get_doc(self, doc_id: str) -> EDoc:
        return EDoc.from_element(self.call(CommandKind.GET_DOC, bodies.get_doc_body(doc_id)))

    def search_docs(self, type_name: str, attribute_equals: dict[str, str] | None = None) -> list[str]:
        payload = self.call(CommandKind.SEARCH_DOCS, bodies.search_body(type_name, attribute_equals))
        return bodies.parse_results_payload(payload)

    def render_doc(self, stylesheet_id: str, doc_id: str = "", doc: EDoc | None = None) -> RenderedView:
        payload = self.call(CommandKind.RENDER_DOC, bodies.render_body(stylesheet_id, doc_id, doc))
        return bodies.parse_rendered_payload(payload)

    def verify_doc(self, doc_id: str = "", doc: EDoc | None = None) -> Element:
        return self.call(CommandKind.VERIFY_DOC, bodies.verify_doc_body(doc_id, doc))

    def set_attribute(self, doc_id: str, name: str, value: str) -> None:
        self.call(CommandKind.SET_ATTRIBUTE, bodies.set_attribute_body(doc_id, name, value))

    def get_attribute(self, doc_id: str, name: str) -> str | None:
        payload = self.call(CommandKind.GET_ATTRIBUTE, bodies.get_attribute_body(doc_id, name))
        return payload.text if payload.attr("present") == "true" else None

    def list_types(self) -> list[DocTypeDefinition]:
        return bodies.parse_types_payload(self.call(CommandKind.LIST_TYPES, bodies.list_types_body()))

    def status(self) -> Element:
        return self.call(CommandKind.STATUS, bodies.status_body())

    def port_control(self, action: CommandKind, port_name: str) -> None:
        if action not in (CommandKind.START_PORT, CommandKind.STOP_PORT):
            raise ClientError("BAD_KIND", action.value)
        self.call(action, bodies.port_control_body(port_name))
