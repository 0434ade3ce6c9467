"""HTTP facade for the scenario service.

Sessions are established by proving possession of a principal's keystore:
the facade issues a challenge, the client returns a signature block over it
made with the keystore, and the facade checks it against the certificate
registered for that principal.  The facade holds no content-signing keys;
e-MRs arrive here already signed on the client side.

Bodies are JSON; denials and conflicts map onto HTTP status codes (401 no
session, 403 denied, 409 stale/conflict, 503 platform down).
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from .. import crypto
from ..crypto import SignatureBlock, unb64
from ..edoc import parse_doc, serialize_doc
from ..xmlcanon import XmlError, parse
from .records import RecordError
from .service import MedRegService, ServiceError

CHALLENGE_TTL_SECONDS = 120


@dataclass
class _Session:
    principal_id: str
    kind: str
    display_name: str


class FacadeState:
    """Shared mutable state behind the handler: sessions and challenges."""

    def __init__(self, service: MedRegService, *, static_dir: Path | None = None):
        self.service = service
        self.static_dir = static_dir
        self._lock = threading.Lock()
        self._challenges: dict[str, tuple[str, float]] = {}  # challenge -> (principal, expiry)
        self._sessions: dict[str, _Session] = {}

    def new_challenge(self, principal_id: str) -> str:
        challenge = secrets.token_hex(16)
        with self._lock:
            self._challenges[challenge] = (principal_id, time.time() + CHALLENGE_TTL_SECONDS)
        return challenge

    def redeem_challenge(
        self, principal_id: str, challenge: str, block: SignatureBlock
    ) -> tuple[str, _Session]:
        with self._lock:
            entry = self._challenges.pop(challenge, None)
        if entry is None or entry[0] != principal_id or entry[1] < time.time():
            raise ServiceError("BAD_CHALLENGE", "unknown or expired challenge", http_status=401)
        principal = self.service.master.get_principal(principal_id)
        if principal is None:
            raise ServiceError("UNKNOWN_PRINCIPAL", principal_id, http_status=401)
        kind, display_name, cert = principal
        report = crypto.verify_signature(cert, challenge.encode("ascii"), block)
        if not report.valid:
            raise ServiceError("BAD_CHALLENGE_SIGNATURE", report.reason, http_status=401)
        token = secrets.token_hex(16)
        session = _Session(principal_id, kind, display_name)
        with self._lock:
            self._sessions[token] = session
        return token, session

    def session(self, token: str) -> _Session | None:
        with self._lock:
            return self._sessions.get(token)


class _FacadeHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True

    def log_message(self, fmt, *args):
        pass

    # -- plumbing ---------------------------------------------------------

    @property
    def state(self) -> FacadeState:
        return self.server.state  # type: ignore[attr-defined]

    def _json_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8")) if raw else {}
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ServiceError("MALFORMED", "body is not valid JSON", http_status=400) from None
        if not isinstance(body, dict):
            raise ServiceError("MALFORMED", "body must be a JSON object", http_status=400)
        return body

    def _reply(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _reply_error(self, exc: ServiceError) -> None:
        self._reply(exc.http_status, {"error": exc.code, "detail": str(exc)})

    def _require_session(self, kind: str | None = None) -> _Session:
        token = self.headers.get("X-Session-Token", "")
        session = self.state.session(token) if token else None
        if session is None:
            raise ServiceError("NO_SESSION", "establish a session first", http_status=401)
        if kind is not None and session.kind != kind:
            raise ServiceError("DENIED", f"a {kind} session is required", http_status=403)
        return session

    # -- dispatch -----------------------------------------------------------

    def do_POST(self):
        self._dispatch("POST")

    def do_GET(self):
        self._dispatch("GET")

    def _dispatch(self, method: str) -> None:
        parts = urlsplit(self.path)
        segments = [s for s in parts.path.split("/") if s]
        try:
            handler = self._route(method, segments, parse_qs(parts.query))
        except ServiceError as exc:
            self._reply_error(exc)
            return
        except RecordError as exc:
            self._reply(400, {"error": exc.code, "detail": str(exc)})
            return
        except (XmlError, crypto.CryptoError) as exc:
            self._reply(400, {"error": "MALFORMED", "detail": str(exc)})
            return

    def _route(self, method: str, segments: list[str], query: dict) -> None:
        if method == "POST" and segments == ["session"]:
            return self._post_session()
        if method == "GET" and segments == ["worklist"]:
            return self._get_worklist(query)
        if method == "POST" and segments == ["visits"]:
            return self._post_visits()
        if method == "POST" and segments == ["sync"]:
            return self._post_sync()
        if method == "POST" and segments == ["emr", "generate"]:
            return self._post_emr_generate()
        if method == "POST" and segments == ["emr", "store"]:
            return self._post_emr_store()
        if method == "GET" and len(segments) == 3 and segments[0] == "emr" and segments[2] == "print":
            return self._get_print(segments[1])
        if method == "GET" and len(segments) == 2 and segments[0] == "history":
            return self._get_history(segments[1])
        if method == "GET" and self.state.static_dir is not None:
            return self._get_static(segments)
        raise ServiceError("NOT_FOUND", "/".join(segments), http_status=404)

    # -- endpoints -------------------------------------------------------------

    def _post_session(self) -> None:
        body = self._json_body()
        principal_id = body.get("principal", "")
        if not principal_id:
            raise ServiceError("MALFORMED", "principal is required", http_status=400)
        if "signature_block" not in body:
            if self.state.service.master.get_principal(principal_id) is None:
                raise ServiceError("UNKNOWN_PRINCIPAL", principal_id, http_status=401)
            self._reply(200, {"challenge": self.state.new_challenge(principal_id)})
            return
        block = SignatureBlock.from_element(parse(unb64(body["signature_block"])))
        token, session = self.state.redeem_challenge(principal_id, body.get("challenge", ""), block)
        self._reply(
            200,
            {"token": token, "kind": session.kind, "display_name": session.display_name},
        )

    def _get_worklist(self, query: dict) -> None:
        session = self._require_session("physician")
        date = (query.get("date") or [""])[0]
        if not date:
            raise ServiceError("MALFORMED", "date query parameter is required", http_status=400)
        result = self.state.service.checkout(session.principal_id, date)
        self._reply(
            200,
            {
                "visits": [v.to_dict() for v in result.visits],
                "history": [h.to_dict() for h in result.history],
                "snapshot_time": result.snapshot_time,
            },
        )

    def _post_visits(self) -> None:
        session = self._require_session("registrar")
        body = self._json_body()
        visit = self.state.service.register_visit(
            session.principal_id,
            body.get("patient", {}),
            body.get("exam_type", ""),
            body.get("visit_date", ""),
            body.get("physician_id", ""),
            body.get("room", ""),
        )
        self._reply(200, {"visit_id": visit.visit_id, "version": visit.version})

    def _post_sync(self) -> None:
        session = self._require_session("physician")
        body = self._json_body()
        records = body.get("records", [])
        if not isinstance(records, list):
            raise ServiceError("MALFORMED", "records must be a list", http_status=400)
        results = self.state.service.sync_push(session.principal_id, records)
        self._reply(200, {"results": results})

    def _post_emr_generate(self) -> None:
        session = self._require_session("physician")
        body = self._json_body()
        doc, view = self.state.service.generate_emr(session.principal_id, body.get("visit_id", ""))
        self._reply(
            200,
            {
                "doc_xml": serialize_doc(doc).decode("utf-8"),
                "rendered_text": view.text,
                "view_digest": view.view_digest,
                "stylesheet_id": view.stylesheet_id,
                "locale": view.locale,
            },
        )

    def _post_emr_store(self) -> None:
        session = self._require_session("physician")
        body = self._json_body()
        doc = parse_doc(body.get("doc_xml", "").encode("utf-8"))
        doc_id = self.state.service.store_signed_emr(session.principal_id, doc)
        self._reply(200, {"doc_id": doc_id})

    def _get_print(self, doc_id: str) -> None:
        session = self._require_session()
        path, view = self.state.service.print_emr(session.principal_id, doc_id)
        self._reply(200, {"path": str(path), "text": view.text, "digest": view.view_digest})

    def _get_history(self, patient_code: str) -> None:
        self._require_session()
        entries = self.state.service.history(patient_code)
        self._reply(200, {"entries": [h.to_dict() for h in entries]})

    def _get_static(self, segments: list[str]) -> None:
        base = self.state.static_dir.resolve()
        name = "/".join(segments) or "index.html"
        target = (base / name).resolve()
        if not str(target).startswith(str(base)) or not target.is_file():
            raise ServiceError("NOT_FOUND", name, http_status=404)
        data = target.read_bytes()
        ctype = {
            ".html": "text/html", ".js": "text/javascript", ".css": "text/css",
            ".json": "application/json",
        }.get(target.suffix, "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class FacadeServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, listen: tuple[str, int], state: FacadeState):
        self.state = state
        self._thread: threading.Thread | None = None
        super().__init__(listen, _FacadeHandler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        host = "127.0.0.1" if host in ("0.0.0.0", "") else host
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(
            target=lambda: self.serve_forever(poll_interval=0.05), name="facade", daemon=True
        )
        self._thread.start()

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join(timeout=5)
