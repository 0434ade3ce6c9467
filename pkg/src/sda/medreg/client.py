"""Physician/registrar-side client for the facade, with the local light-db.

Local-first: the worklist and diagnosis entry work entirely off the light-db
file; only checkout, sync and the e-MR operations need the facade.  Any
server-requiring call made while the transport is disabled (or the facade is
unreachable) fails with OFFLINE and leaves the light-db file untouched.
"""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request
from pathlib import Path

from ..crypto import b64
from ..edoc import EDoc, RenderedView, parse_doc, serialize_doc
from ..keystore import SoftKeystore
from .lightdb import LightDb
from .records import HistoryEntry, VisitRecord


class MedRegClientError(Exception):
    def __init__(self, code: str, detail: str = "", http_status: int = 0):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail
        self.http_status = http_status


class OfflineError(MedRegClientError):
    def __init__(self, detail: str = ""):
        super().__init__("OFFLINE", detail)


class MedRegClient:
    def __init__(
        self,
        facade_url: str,
        principal_id: str,
        keystore: SoftKeystore,
        pin: str,
        data_dir: str | Path,
        *,
        offline: bool = False,
        timeout: float = 10.0,
    ):
        self.facade_url = facade_url.rstrip("/")
        self.principal_id = principal_id
        self.keystore = keystore
        self.pin = pin
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.offline = offline
        self.timeout = timeout
        self._token: str | None = None

    # -- HTTP -----------------------------------------------------------------

    def _http(self, method: str, path: str, body: dict | None = None) -> dict:
        if self.offline:
            raise OfflineError("transport disabled")
        url = f"{self.facade_url}{path}"
        data = json.dumps(body).encode("utf-8") if body is not None else None
        request = urllib.request.Request(url, data=data, method=method)
        request.add_header("Content-Type", "application/json")
        if self._token:
            request.add_header("X-Session-Token", self._token)
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            try:
                payload = json.loads(exc.read().decode("utf-8"))
            except Exception:
                payload = {"error": "HTTP_ERROR", "detail": str(exc)}
            raise MedRegClientError(
                payload.get("error", "HTTP_ERROR"), payload.get("detail", ""), exc.code
            ) from exc
        except (urllib.error.URLError, socket.timeout, ConnectionError, OSError) as exc:
            raise OfflineError(str(exc)) from exc

    def connect(self) -> dict:
        """Establish a session by signing the facade's challenge."""
        challenge = self._http("POST", "/session", {"principal": self.principal_id})["challenge"]
        block = self.keystore.sign_bytes(self.pin, challenge.encode("ascii"))
        from ..xmlcanon import canonicalize

        reply = self._http(
            "POST",
            "/session",
            {
                "principal": self.principal_id,
                "challenge": challenge,
                "signature_block": b64(canonicalize(block.to_element())),
            },
        )
        self._token = reply["token"]
        return reply

    def _ensure_session(self) -> None:
        if self._token is None:
            self.connect()

    # -- light-db ----------------------------------------------------------------

    @property
    def lightdb_path(self) -> Path:
        return self.data_dir / f"lightdb-{self.principal_id}.xml"

    def lightdb(self) -> LightDb:
        return LightDb.open_or_create(self.lightdb_path, self.principal_id)

    # -- workflow -------------------------------------------------------------------

    def checkout(self, visit_date: str) -> LightDb:
        """Download the day's worklist and rebase the light-db onto it."""
        db = self.lightdb()  # loaded before any network so failures change nothing
        self._ensure_session()
        reply = self._http("GET", f"/worklist?date={visit_date}")
        visits = [VisitRecord.from_dict(v) for v in reply["visits"]]
        history = [HistoryEntry.from_dict(h) for h in reply["history"]]
        db.rebase(visits, history, int(reply["snapshot_time"]))
        return db

    def diagnose(self, visit_id: str, text: str) -> None:
        """Record a diagnosis locally; works fully offline."""
        db = self.lightdb()
        db.record_diagnosis(visit_id, text)

    def sync(self) -> list[dict]:
        db = self.lightdb()
        dirty = db.dirty_records()
        if not dirty:
            return []
        self._ensure_session()
        records = [
            {
                "visit_id": lv.record.visit_id,
                "base_version": lv.record.version,
                "diagnosis": lv.record.diagnosis,
            }
            for lv in dirty
        ]
        results = self._http("POST", "/sync", {"records": records})["results"]
        for item in results:
            db.apply_sync_outcome(item["visit_id"], item["outcome"], int(item["version"]))
        db.save()
        return results

    def emr_generate(self, visit_id: str) -> tuple[EDoc, RenderedView]:
        self._ensure_session()
        reply = self._http("POST", "/emr/generate", {"visit_id": visit_id})
        doc = parse_doc(reply["doc_xml"].encode("utf-8"))
        view = RenderedView(
            stylesheet_id=reply["stylesheet_id"],
            locale=reply.get("locale", ""),
            text=reply["rendered_text"],
            view_digest=reply["view_digest"],
        )
        return doc, view

    def emr_store(self, doc: EDoc) -> str:
        db = self.lightdb()
        try:
            self._ensure_session()
            reply = self._http("POST", "/emr/store", {"doc_xml": serialize_doc(doc).decode("utf-8")})
        except OfflineError:
            db.add_pending(doc)
            raise
        doc_id = reply["doc_id"]
        db.note_uploaded(doc, doc_id)
        return doc_id

    def retry_pending(self) -> list[tuple[str, str]]:
        """Upload every still-unacknowledged pending doc; returns (digest, doc_id)."""
        db = self.lightdb()
        out = []
        self._ensure_session()
        for pending in list(db.pending_signed):
            if pending.doc_id:
                continue
            reply = self._http(
                "POST", "/emr/store", {"doc_xml": serialize_doc(pending.doc).decode("utf-8")}
            )
            db.note_uploaded(pending.doc, reply["doc_id"])
            out.append((pending.doc.content_digest(), reply["doc_id"]))
        return out

    def print_emr(self, doc_id: str) -> dict:
        self._ensure_session()
        return self._http("GET", f"/emr/{doc_id}/print")

    def history(self, patient_code: str) -> list[HistoryEntry]:
        self._ensure_session()
        reply = self._http("GET", f"/history/{patient_code}")
        return [HistoryEntry.from_dict(h) for h in reply["entries"]]

    def purge(self, doc_id: str) -> None:
        self.lightdb().purge_signed(doc_id)

    def register_visit(
        self, patient: dict, exam_type: str, visit_date: str, physician_id: str, room: str = ""
    ) -> str:
        self._ensure_session()
        reply = self._http(
            "POST",
            "/visits",
            {
                "patient": patient,
                "exam_type": exam_type,
                "visit_date": visit_date,
                "physician_id": physician_id,
                "room": room,
            },
        )
        return reply["visit_id"]
