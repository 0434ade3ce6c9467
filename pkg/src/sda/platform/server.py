"""The platform server: listeners, authorization, command execution.

The command pipeline is decode -> verify envelope -> authorize -> execute ->
signed response.  All repository mutations are serialized through one writer
lock and are written to disk before the OK response is produced, so a crash
can lose at most un-acknowledged work.  Execution is atomic per command:
in-memory state changes only after the corresponding file write succeeded.
"""

from __future__ import annotations

import logging
import socketserver
import threading
import time
from pathlib import Path

from .. import edoc
from ..crypto import RoleCertificate, fingerprint
from ..edoc import DocValidationError, EdocError
from ..keystore import SoftKeystore
from ..xmlcanon import Element, parse
from ..protocol import bodies
from ..protocol.envelope import (
    CommandEnvelope,
    EnvelopeError,
    NonceCache,
    ResponseEnvelope,
    build_response,
    verify_envelope,
)
from ..protocol.framing import FrameError, read_frame, write_frame
from ..protocol.kinds import CommandKind
from .config import PortConfig, ServerConfig
from .repos import (
    DataStore,
    DefinitionsRepository,
    DocumentDirectory,
    RepositoryError,
    RoleEntry,
    RoleMap,
)

MUTATING_KINDS = frozenset(
    {
        CommandKind.INSTALL_DEFINITION,
        CommandKind.INSTALL_STYLESHEET,
        CommandKind.INSTALL_ROLE,
        CommandKind.REVOKE_ROLE,
        CommandKind.STORE_DOC,
        CommandKind.SET_ATTRIBUTE,
        CommandKind.START_PORT,
        CommandKind.STOP_PORT,
    }
)


class Deny(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(detail or code)
        self.code = code


class Fail(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(detail or code)
        self.code = code


class _Listener(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, platform: "PlatformServer", port_cfg: PortConfig):
        self.platform = platform
        self.port_cfg = port_cfg
        super().__init__((port_cfg.bind_host(), port_cfg.tcp_port), _Handler)


class _Handler(socketserver.StreamRequestHandler):
    disable_nagle_algorithm = True

    def handle(self):
        server: _Listener = self.server  # type: ignore[assignment]
        max_bytes = server.platform.config.max_frame_bytes
        while True:
            try:
                payload = read_frame(self.rfile, max_bytes)
            except FrameError as exc:
                reply = server.platform.frame_error_response(exc)
                try:
                    write_frame(self.wfile, reply, max_bytes)
                except OSError:
                    pass
                return
            if payload is None:
                return
            reply = server.platform.handle_frame(payload, server.port_cfg.port_name)
            try:
                write_frame(self.wfile, reply, max_bytes)
            except OSError:
                return


class PlatformServer:
    def __init__(self, config: ServerConfig, *, clock=time.time):
        self.config = config
        self.clock = clock
        self._write_lock = threading.RLock()
        self._nonce_cache = NonceCache()

        self._keystore = SoftKeystore.load(config.platform_keystore_path)
        self._pin = config.platform_pin
        self.platform_certificate = self._keystore.certificate
        role_set_cert = RoleCertificate.from_element(
            parse(Path(config.role_set_certificate_path).read_bytes())
        )

        self.role_map = RoleMap(role_set_cert)
        self.repository = DefinitionsRepository()
        self.directory = DocumentDirectory(config.static_attributes)
        self.store = DataStore(config.data_dir)
        self.store.load_into(self.repository, self.directory, self.role_map)

        self._listeners: dict[str, _Listener | None] = {}
        self._threads: dict[str, threading.Thread] = {}
        self._started_at = int(self.clock())
        self._log = logging.getLogger(f"sda.platform.{id(self):x}")
        self._log_handler = logging.FileHandler(self.config.log_path)
        self._log_handler.setFormatter(logging.Formatter("%(message)s"))
        self._log.addHandler(self._log_handler)
        self._log.setLevel(logging.INFO)
        self._log.propagate = False

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        """Bind and serve every configured port; raises on bind failure."""
        for port_cfg in self.config.port_configs:
            self._start_port(port_cfg)

    def _start_port(self, port_cfg: PortConfig) -> None:
        if self._listeners.get(port_cfg.port_name) is not None:
            return
        listener = _Listener(self, port_cfg)
        thread = threading.Thread(
            target=lambda: listener.serve_forever(poll_interval=0.05),
            name=f"port-{port_cfg.port_name}",
            daemon=True,
        )
        thread.start()
        self._listeners[port_cfg.port_name] = listener
        self._threads[port_cfg.port_name] = thread

    def _stop_port(self, name: str) -> None:
        listener = self._listeners.get(name)
        if listener is None:
            return
        listener.shutdown()
        listener.server_close()
        self._threads[name].join(timeout=5)
        self._listeners[name] = None

    def stop(self) -> None:
        for name in list(self._listeners):
            self._stop_port(name)
        self._log.removeHandler(self._log_handler)
        self._log_handler.close()

    def port_address(self, name: str) -> tuple[str, int]:
        listener = self._listeners.get(name)
        if listener is None:
            raise RuntimeError(f"port {name!r} is not listening")
        host, port = listener.server_address[:2]
        return ("127.0.0.1" if host in ("0.0.0.0", "") else host, port)

    def port_state(self, name: str) -> str:
        return "up" if self._listeners.get(name) is not None else "stopped"

    # -- pipeline -------------------------------------------------------------

    def _sign_response(self, reply_to: str, status: str, code: str, payload: Element) -> ResponseEnvelope:
        return build_response(
            reply_to, status, code, payload, self._keystore, self._pin, now=int(self.clock())
        )

    def frame_error_response(self, exc: FrameError) -> bytes:
        resp = self._sign_response("", "ERROR", exc.code, bodies.error_payload(exc.code, str(exc)))
        return resp.to_bytes()

    def handle_frame(self, payload: bytes, port_name: str) -> bytes:
        try:
            env = CommandEnvelope.from_element(parse(payload))
        except Exception as exc:
            code = getattr(exc, "code", "MALFORMED")
            resp = self._sign_response("", "ERROR", code, bodies.error_payload(code, str(exc)))
            self._log_line(port_name, "-", "-", resp)
            return resp.to_bytes()
        return self.handle_envelope(env, port_name).to_bytes()

    def handle_envelope(self, env: CommandEnvelope, port_name: str) -> ResponseEnvelope:
        port_cfg = self.config.port(port_name)
        fp = "-"
        try:
            fp = verify_envelope(
                env, int(self.clock()), self._nonce_cache, self.config.replay_window_seconds
            )
            if env.kind not in port_cfg.allowed_kinds:
                raise Deny("COMMAND_NOT_ALLOWED", f"{env.kind.value} not accepted on this port")
            self._authorize(fp, env.kind)
            if env.kind in MUTATING_KINDS:
                with self._write_lock:
                    payload = self._execute(env, fp)
            else:
                payload = self._execute(env, fp)
            resp = self._sign_response(env.nonce, "OK", "", payload)
        except EnvelopeError as exc:
            resp = self._sign_response(env.nonce, "DENIED", exc.code, bodies.error_payload(exc.code, str(exc)))
        except Deny as exc:
            resp = self._sign_response(env.nonce, "DENIED", exc.code, bodies.error_payload(exc.code, str(exc)))
        except (Fail, bodies.BodyError) as exc:
            resp = self._sign_response(env.nonce, "ERROR", exc.code, bodies.error_payload(exc.code, str(exc)))
        except RepositoryError as exc:
            resp = self._sign_response(env.nonce, "ERROR", exc.code, bodies.error_payload(exc.code, str(exc)))
        except OSError as exc:
            resp = self._sign_response(env.nonce, "ERROR", "STORAGE", bodies.error_payload("STORAGE", str(exc)))
        self._log_line(port_name, fp, env.kind.value, resp)
        return resp

    def _log_line(self, port: str, fp: str, kind: str, resp: ResponseEnvelope) -> None:
        self._log.info(
            "%s port=%s fp=%s kind=%s status=%s code=%s",
            time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.clock())),
            port,
            fp[:8],
            kind,
            resp.status,
            resp.error_code,
        )

    def _authorize(self, fp: str, kind: CommandKind, doc_type: str | None = None) -> None:
        deny = self.role_map.authorize(fp, kind, doc_type)
        if deny is not None:
            raise Deny(deny)

    # -- execution ---------------------------------------------------------------

    def _execute(self, env: CommandEnvelope, fp: str) -> Element:
        kind = env.kind
        body = env.body
        if kind is CommandKind.INSTALL_DEFINITION:
            return self._install_definition(fp, body)
        if kind is CommandKind.INSTALL_STYLESHEET:
            return self._install_stylesheet(fp, body)
        if kind is CommandKind.INSTALL_ROLE:
            return self._install_role(body)
        if kind is CommandKind.REVOKE_ROLE:
            return self._revoke_role(body)
        if kind is CommandKind.CREATE_DOC:
            return self._create_doc(fp, body)
        if kind is CommandKind.STORE_DOC:
            return self._store_doc(fp, body)
        if kind is CommandKind.GET_DOC:
            return self._get_doc(fp, body)
        if kind is CommandKind.SEARCH_DOCS:
            return self._search(fp, body)
        if kind is CommandKind.RENDER_DOC:
            return self._render(fp, body)
        if kind is CommandKind.VERIFY_DOC:
            return self._verify(fp, body)
        if kind is CommandKind.SET_ATTRIBUTE:
            return self._set_attribute(fp, body)
        if kind is CommandKind.GET_ATTRIBUTE:
            return self._get_attribute(fp, body)
        if kind is CommandKind.LIST_TYPES:
            return bodies.types_payload(self.repository.list_definitions())
        if kind is CommandKind.STATUS:
            return self._status()
        if kind in (CommandKind.START_PORT, CommandKind.STOP_PORT):
            return self._port_control(kind, body)
        raise Fail("UNSUPPORTED", kind.value)

    def _install_definition(self, fp: str, body: Element) -> Element:
        defn = bodies.parse_install_definition(body)
        self._authorize(fp, CommandKind.INSTALL_DEFINITION, defn.type_name)
        self.repository.install_definition(defn)
        try:
            self.store.save_definition(defn)
        except OSError:
            del self.repository.definitions[(defn.type_name, defn.version)]
            raise
        return bodies.ok_payload()

    def _install_stylesheet(self, fp: str, body: Element) -> Element:
        sheet = bodies.parse_install_stylesheet(body)
        self._authorize(fp, CommandKind.INSTALL_STYLESHEET, sheet.type_name)
        self.repository.install_stylesheet(sheet)
        try:
            self.store.save_stylesheet(sheet)
        except OSError:
            del self.repository.stylesheets[sheet.stylesheet_id]
            raise
        return bodies.ok_payload()

    def _install_role(self, body: Element) -> Element:
        request = bodies.parse_install_role(body)
        from ..crypto import verify_certificate

        role_set_cert = self.role_map.entries[self.role_map.role_set_fingerprint].certificate
        chained = verify_certificate(request.certificate, role_set_cert)
        self_signed = verify_certificate(request.certificate)
        if not (chained or self_signed):
            raise Fail("MALFORMED_CERT", "certificate signature does not verify")
        entry = RoleEntry(
            fingerprint=fingerprint(request.certificate),
            role_name=request.certificate.role_name,
            allowed_kinds=frozenset(request.allowed_kinds),
            allowed_doc_types=(
                None if request.allowed_doc_types is None else frozenset(request.allowed_doc_types)
            ),
            certificate=request.certificate,
        )
        previous = self.role_map.entries.get(entry.fingerprint)
        self.role_map.install(entry)
        try:
            self.store.save_role(entry)
        except OSError:
            if previous is None:
                self.role_map.entries.pop(entry.fingerprint, None)
            else:
                self.role_map.entries[entry.fingerprint] = previous
            raise
        return bodies.ok_payload()

    def _revoke_role(self, body: Element) -> Element:
        fp = bodies.parse_revoke_role(body)
        entry = self.role_map.revoke(fp)
        try:
            self.store.delete_role(fp)
        except OSError:
            self.role_map.entries[fp] = entry
            raise
        return bodies.ok_payload()

    def _definition_or_fail(self, type_name: str, version: int | None) -> "edoc.DocTypeDefinition":
        defn = self.repository.definition(type_name, version)
        if defn is None:
            raise Fail("UNKNOWN_TYPE", f"{type_name} v{version if version else 'latest'}")
        return defn

    def _create_doc(self, fp: str, body: Element) -> Element:
        type_name, version, values = bodies.parse_create_doc(body)
        self._authorize(fp, CommandKind.CREATE_DOC, type_name)
        defn = self._definition_or_fail(type_name, version)
        try:
            doc = edoc.create_doc(defn, values, now=int(self.clock()))
        except DocValidationError as exc:
            raise Fail("VALIDATION_FAILED", str(exc)) from exc
        except EdocError as exc:
            raise Fail(exc.code, str(exc)) from exc
        return doc.to_element()

    def _store_doc(self, fp: str, body: Element) -> Element:
        doc = bodies.parse_store_doc(body)
        self._authorize(fp, CommandKind.STORE_DOC, doc.type_name)
        if doc.doc_id:
            raise Fail("DOC_ID_SET", "documents are assigned their id at store time")
        defn = self.repository.definition(doc.type_name, doc.type_version)
        if defn is None:
            raise Fail("UNKNOWN_TYPE", f"{doc.type_name} v{doc.type_version}")
        report = edoc.validate_doc(defn, doc)
        if not report.ok:
            raise Fail("VALIDATION_FAILED", "; ".join(f"{v.code}({v.field_name})" for v in report.violations))
        if not doc.signatures:
            raise Fail("UNSIGNED_DOC", "the document directory stores signed e-docs only")
        verification = edoc.verify_doc(doc, self.role_map.certificates())
        if not all(c.valid for c in verification.per_signature):
            reasons = ", ".join(c.reason for c in verification.per_signature if not c.valid)
            raise Fail("INVALID_SIGNATURE", reasons)
        doc.doc_id = self.directory.assign_id()
        try:
            self.store.save_doc(doc)
        except OSError:
            doc.doc_id = ""
            self.directory.unassign_last()
            raise
        self.directory.docs[doc.doc_id] = doc
        return bodies.stored_payload(doc.doc_id)

    def _doc_or_fail(self, doc_id: str) -> "edoc.EDoc":
        doc = self.directory.get(doc_id)
        if doc is None:
            raise Fail("UNKNOWN_DOC", doc_id)
        return doc

    def _get_doc(self, fp: str, body: Element) -> Element:
        doc = self._doc_or_fail(bodies.parse_get_doc(body))
        self._authorize(fp, CommandKind.GET_DOC, doc.type_name)
        return doc.to_element()

    def _search(self, fp: str, body: Element) -> Element:
        type_name, filters = bodies.parse_search(body)
        self._authorize(fp, CommandKind.SEARCH_DOCS, type_name)
        return bodies.results_payload(self.directory.search(type_name, filters))

    def _render(self, fp: str, body: Element) -> Element:
        stylesheet_id, doc_id, inline = bodies.parse_render(body)
        doc = inline if inline is not None else self._doc_or_fail(doc_id)
        self._authorize(fp, CommandKind.RENDER_DOC, doc.type_name)
        sheet = self.repository.stylesheets.get(stylesheet_id)
        if sheet is None:
            raise Fail("UNKNOWN_STYLESHEET", stylesheet_id)
        try:
            view = edoc.render(doc, sheet)
        except EdocError as exc:
            raise Fail("RENDER_FAILED", str(exc)) from exc
        return bodies.rendered_payload(view)

    def _verify(self, fp: str, body: Element) -> Element:
        doc_id, inline = bodies.parse_verify_doc(body)
        doc = inline if inline is not None else self._doc_or_fail(doc_id)
        self._authorize(fp, CommandKind.VERIFY_DOC, doc.type_name)
        report = edoc.verify_doc(doc, self.role_map.certificates(), self.repository.stylesheets)
        return bodies.verification_payload(report)

    def _set_attribute(self, fp: str, body: Element) -> Element:
        doc_id, name, value = bodies.parse_set_attribute(body)
        doc = self._doc_or_fail(doc_id)
        self._authorize(fp, CommandKind.SET_ATTRIBUTE, doc.type_name)
        if not name:
            raise Fail("BAD_ATTRIBUTE", "attribute name must be nonempty")
        previous = dict(doc.attributes)
        doc.attributes[name] = value
        try:
            self.store.save_doc(doc)
        except OSError:
            doc.attributes.clear()
            doc.attributes.update(previous)
            raise
        return bodies.ok_payload()

    def _get_attribute(self, fp: str, body: Element) -> Element:
        doc_id, name = bodies.parse_get_attribute(body)
        doc = self._doc_or_fail(doc_id)
        self._authorize(fp, CommandKind.GET_ATTRIBUTE, doc.type_name)
        return bodies.attribute_payload(name, doc.attributes.get(name))

    def _status(self) -> Element:
        ports = []
        for p in self.config.port_configs:
            state = self.port_state(p.port_name)
            try:
                tcp = self.port_address(p.port_name)[1]
            except RuntimeError:
                tcp = p.tcp_port
            ports.append(
                Element(
                    "port",
                    attrs={
                        "name": p.port_name,
                        "state": state,
                        "tcp-port": str(tcp),
                        "visibility": p.visibility,
                    },
                )
            )
        statics = [
            Element("static-attribute", attrs={"name": n}, text=v)
            for n, v in sorted(self.directory.static_attributes.items())
        ]
        return Element(
            "platform-status",
            attrs={
                "docs": str(len(self.directory.docs)),
                "definitions": str(len(self.repository.definitions)),
                "stylesheets": str(len(self.repository.stylesheets)),
                "roles": str(len(self.role_map.entries)),
                "uptime": str(int(self.clock()) - self._started_at),
            },
            children=ports + statics,
        )

    def _port_control(self, kind: CommandKind, body: Element) -> Element:
        name = bodies.parse_port_control(body)
        try:
            self.config.port(name)
        except Exception:
            raise Fail("UNKNOWN_PORT", name) from None
        if name == "administration":
            raise Fail("CANNOT_CONTROL_ADMIN_PORT", "the administration port cannot be stopped")
        if kind is CommandKind.STOP_PORT:
            self._stop_port(name)
        else:
            self._start_port(self.config.port(name))
        return bodies.ok_payload()

    # -- maintenance ------------------------------------------------------------

    def audit(self) -> list[str]:
        """Re-verify every stored document; returns doc ids that fail."""
        bad = []
        certs = self.role_map.certificates()
        for doc_id, doc in self.directory.docs.items():
            report = edoc.verify_doc(doc, certs)
            if not all(c.valid for c in report.per_signature) or not doc.signatures:
                bad.append(doc_id)
        return bad
