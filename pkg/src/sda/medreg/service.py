"""The scenario service: workflow logic between clients and the platform.

Owns the master register and the platform client credential.  Document
content is never signed here; physicians sign on their own devices and this
service verifies, stores and links the results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

from .. import crypto
from ..edoc import EDoc, RenderedView
from ..protocol.client import (
    CommandDenied,
    CommandFailed,
    GatewayBadResponse,
    GatewayUnreachable,
    PlatformClient,
    PlatformUnreachable,
)
from .masterdb import MasterDb, MasterDbError
from .records import HistoryEntry, VisitRecord

EMR_FIELDS = ("name", "surname", "visit_date", "exam_type", "diagnosis")


class ServiceError(Exception):
    def __init__(self, code: str, message: str = "", http_status: int = 400):
        super().__init__(message or code)
        self.code = code
        self.http_status = http_status


class PlatformDown(ServiceError):
    def __init__(self, detail: str = ""):
        super().__init__("PLATFORM_DOWN", detail, http_status=503)


@dataclass
class ServiceConfig:
    emr_type: str = "medical-report"
    signing_stylesheet: str = "medical-report-en"
    print_stylesheet: str = "medical-report-print"
    lease_ttl_seconds: int = 24 * 3600
    print_dir: Path = Path("printouts")


@dataclass
class CheckoutResult:
    visits: list[VisitRecord]
    history: list[HistoryEntry]
    snapshot_time: int


class MedRegService:
    def __init__(
        self,
        master: MasterDb,
        platform: PlatformClient,
        config: ServiceConfig | None = None,
        *,
        clock=time.time,
    ):
        self.master = master
        self.platform = platform
        self.config = config or ServiceConfig()
        self.clock = clock

    # -- error translation ------------------------------------------------------

    def _platform_call(self, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (PlatformUnreachable, GatewayUnreachable, GatewayBadResponse) as exc:
            raise PlatformDown(str(exc)) from exc
        except CommandDenied as exc:
            raise ServiceError(exc.code, exc.detail, http_status=403) from exc
        except CommandFailed as exc:
            raise ServiceError(exc.code, exc.detail, http_status=502) from exc

    def _require(self, principal_id: str, kind: str):
        principal = self.master.get_principal(principal_id)
        if principal is None:
            raise ServiceError("UNKNOWN_PRINCIPAL", principal_id, http_status=401)
        if principal[0] != kind:
            raise ServiceError("DENIED", f"{principal_id} is not a {kind}", http_status=403)
        return principal

    # -- registration -------------------------------------------------------------

    def register_visit(
        self,
        registrar_id: str,
        patient: dict,
        exam_type: str,
        visit_date: str,
        physician_id: str,
        room: str = "",
    ) -> VisitRecord:
        self._require(registrar_id, "registrar")
        try:
            return self.master.register_visit(patient, exam_type, visit_date, physician_id, room)
        except MasterDbError as exc:
            raise ServiceError(exc.code, str(exc)) from exc

    # -- worklist / sync -------------------------------------------------------------

    def checkout(self, physician_id: str, visit_date: str) -> CheckoutResult:
        self._require(physician_id, "physician")
        visits = self.master.visits_for(physician_id, visit_date)
        self.master.take_leases(
            physician_id, [v.visit_id for v in visits], self.config.lease_ttl_seconds
        )
        history: list[HistoryEntry] = []
        seen: set[str] = set()
        for v in visits:
            if v.patient_code not in seen:
                seen.add(v.patient_code)
                history.extend(self.master.history_for(v.patient_code))
        return CheckoutResult(visits=visits, history=history, snapshot_time=int(self.clock()))

    def sync_push(self, physician_id: str, records: list[dict]) -> list[dict]:
        self._require(physician_id, "physician")
        results = []
        for rec in records:
            try:
                outcome, version = self.master.apply_diagnosis(
                    rec["visit_id"], physician_id, rec["diagnosis"], int(rec["base_version"])
                )
            except MasterDbError as exc:
                outcome, version = exc.code, -1
            results.append({"visit_id": rec["visit_id"], "outcome": outcome, "version": version})
        return results

    # -- e-MR lifecycle -----------------------------------------------------------------

    def _visit_for_physician(self, physician_id: str, visit_id: str) -> VisitRecord:
        visit = self.master.get_visit(visit_id)
        if visit is None:
            raise ServiceError("UNKNOWN_VISIT", visit_id, http_status=404)
        if visit.physician_id != physician_id:
            raise ServiceError("DENIED", "not the assigned physician", http_status=403)
        return visit

    def generate_emr(self, physician_id: str, visit_id: str) -> tuple[EDoc, RenderedView]:
        """CREATE_DOC on the platform from the master record's five fields,
        plus the platform rendering the signer will review."""
        self._require(physician_id, "physician")
        visit = self._visit_for_physician(physician_id, visit_id)
        if visit.status == "reserved":
            raise ServiceError("NOT_DIAGNOSED", visit_id, http_status=409)
        values = {
            "name": visit.patient_name,
            "surname": visit.patient_surname,
            "visit_date": visit.visit_date,
            "exam_type": visit.exam_type,
            "diagnosis": visit.diagnosis,
        }
        doc = self._platform_call(self.platform.create_doc, self.config.emr_type, values)
        doc.attributes.update(
            {"visit_id": visit.visit_id, "patient_code": visit.patient_code, "partition": "output"}
        )
        view = self._platform_call(self.platform.render_doc, self.config.signing_stylesheet, doc=doc)
        return doc, view

    def store_signed_emr(self, physician_id: str, doc: EDoc) -> str:
        """Verify the physician's signature, store, link and mark processed.

        Idempotent on retries: the same (visit, content) resolves to the
        already-linked doc id without storing a duplicate.
        """
        _, _, cert = self._require(physician_id, "physician")
        visit_id = doc.attributes.get("visit_id", "")
        visit = self._visit_for_physician(physician_id, visit_id)

        if not doc.signatures:
            raise ServiceError("BAD_SIGNATURE", "unsigned document", http_status=403)
        expected_fp = crypto.fingerprint(cert)
        block = doc.signatures[0]
        if block.signer_fingerprint != expected_fp:
            raise ServiceError("SIGNER_MISMATCH", "signed by a different identity", http_status=403)
        report = crypto.verify_signature(cert, doc.content_bytes(), block)
        if not report.valid:
            raise ServiceError("BAD_SIGNATURE", report.reason, http_status=403)

        if visit.status == "processed":
            stored = self._platform_call(self.platform.get_doc, visit.emr_doc_id)
            if stored.content_digest() == doc.content_digest():
                return visit.emr_doc_id  # retry of an acknowledged store
            raise ServiceError("ALREADY_PROCESSED", visit_id, http_status=409)
        if visit.status != "diagnosed":
            raise ServiceError("NOT_DIAGNOSED", visit_id, http_status=409)

        expected = {
            "name": visit.patient_name,
            "surname": visit.patient_surname,
            "visit_date": visit.visit_date,
            "exam_type": visit.exam_type,
            "diagnosis": visit.diagnosis,
        }
        if doc.field_values != expected:
            raise ServiceError("FIELD_MISMATCH", "e-MR does not match the master record", 409)

        doc.attributes["state"] = "processed"
        doc.attributes["patient_code"] = visit.patient_code
        doc.attributes["partition"] = "output"
        doc_id = self._platform_call(self.platform.store_doc, doc)
        self.master.mark_processed(visit_id, doc_id)
        return doc_id

    def print_emr(self, principal_id: str, doc_id: str) -> tuple[Path, RenderedView]:
        principal = self.master.get_principal(principal_id)
        if principal is None:
            raise ServiceError("UNKNOWN_PRINCIPAL", principal_id, http_status=401)
        view = self._platform_call(self.platform.render_doc, self.config.print_stylesheet, doc_id)
        self.config.print_dir.mkdir(parents=True, exist_ok=True)
        path = self.config.print_dir / f"{doc_id}.txt"
        path.write_bytes(view.text.encode("utf-8"))
        return path, view

    def history(self, patient_code: str) -> list[HistoryEntry]:
        return self.master.history_for(patient_code)
