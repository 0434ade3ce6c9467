"""Visit records shared by the master register, the offline snapshot and the
facade wire format."""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date

VISIT_STATUSES = ("reserved", "diagnosed", "processed")
ORIGINS = ("internal", "external")


class RecordError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


@dataclass
class VisitRecord:
    visit_id: str
    patient_name: str
    patient_surname: str
    patient_code: str
    origin: str
    exam_type: str
    visit_date: str  # ISO day
    physician_id: str
    room: str = ""
    status: str = "reserved"
    diagnosis: str = ""
    emr_doc_id: str = ""
    version: int = 0

    def __post_init__(self):
        if self.status not in VISIT_STATUSES:
            raise RecordError("BAD_STATUS", self.status)
        if self.origin not in ORIGINS:
            raise RecordError("BAD_ORIGIN", self.origin)
        try:
            date.fromisoformat(self.visit_date)
        except ValueError:
            raise RecordError("BAD_DATE", self.visit_date) from None

    def check_invariants(self) -> list[str]:
        problems = []
        if self.status == "processed" and not self.emr_doc_id:
            problems.append(f"{self.visit_id}: processed without an e-MR doc id")
        if self.status in ("diagnosed", "processed") and not self.diagnosis:
            problems.append(f"{self.visit_id}: {self.status} without a diagnosis")
        if self.version < 0:
            problems.append(f"{self.visit_id}: negative version")
        return problems

    def to_dict(self) -> dict:
        return {
            "visit_id": self.visit_id,
            "patient_name": self.patient_name,
            "patient_surname": self.patient_surname,
            "patient_code": self.patient_code,
            "origin": self.origin,
            "exam_type": self.exam_type,
            "visit_date": self.visit_date,
            "physician_id": self.physician_id,
            "room": self.room,
            "status": self.status,
            "diagnosis": self.diagnosis,
            "emr_doc_id": self.emr_doc_id,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VisitRecord":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    def copy(self) -> "VisitRecord":
        return replace(self)


@dataclass(frozen=True)
class HistoryEntry:
    patient_code: str
    visit_date: str
    exam_type: str
    summary: str

    def to_dict(self) -> dict:
        return {
            "patient_code": self.patient_code,
            "visit_date": self.visit_date,
            "exam_type": self.exam_type,
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HistoryEntry":
        return cls(**{k: data[k] for k in ("patient_code", "visit_date", "exam_type", "summary")})
