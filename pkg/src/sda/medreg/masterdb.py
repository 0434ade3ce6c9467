"""The central visit register (master-db): an embedded relational store.

Single-writer: all mutations run under one lock.  Optimistic versioning plus
per-visit leases give the machine-checked single-writer guarantee the
offline workflow relies on: a push is accepted only if the pusher holds the
lease and the master version still equals the version it checked out.
"""

from __future__ import annotations

import sqlite3
import threading
import time
from pathlib import Path

from ..crypto import RoleCertificate
from ..xmlcanon import parse
from .records import HistoryEntry, RecordError, VisitRecord

_SCHEMA = """
CREATE TABLE IF NOT EXISTS principals (
  principal_id TEXT PRIMARY KEY,
  kind TEXT NOT NULL,
  display_name TEXT NOT NULL,
  certificate_xml TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS visits (
  visit_id TEXT PRIMARY KEY,
  patient_name TEXT NOT NULL,
  patient_surname TEXT NOT NULL,
  patient_code TEXT NOT NULL,
  origin TEXT NOT NULL,
  exam_type TEXT NOT NULL,
  visit_date TEXT NOT NULL,
  physician_id TEXT NOT NULL,
  room TEXT NOT NULL DEFAULT '',
  status TEXT NOT NULL,
  diagnosis TEXT NOT NULL DEFAULT '',
  emr_doc_id TEXT NOT NULL DEFAULT '',
  version INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS history (
  patient_code TEXT NOT NULL,
  visit_date TEXT NOT NULL,
  exam_type TEXT NOT NULL,
  summary TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS leases (
  visit_id TEXT PRIMARY KEY,
  physician_id TEXT NOT NULL,
  expires_at INTEGER NOT NULL
);
"""

_VISIT_COLS = (
    "visit_id", "patient_name", "patient_surname", "patient_code", "origin",
    "exam_type", "visit_date", "physician_id", "room", "status", "diagnosis",
    "emr_doc_id", "version",
)


class MasterDbError(RecordError):
    pass


class MasterDb:
    def __init__(self, path: str | Path = ":memory:", *, clock=time.time):
        self._lock = threading.RLock()
        self.clock = clock
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    # -- principals ----------------------------------------------------------

    def add_principal(self, principal_id: str, kind: str, display_name: str, certificate: RoleCertificate) -> None:
        if kind not in ("physician", "registrar"):
            raise MasterDbError("BAD_KIND", kind)
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO principals VALUES (?, ?, ?, ?)",
                (principal_id, kind, display_name, certificate.canonical_bytes().decode("utf-8")),
            )
            self._conn.commit()

    def get_principal(self, principal_id: str) -> tuple[str, str, RoleCertificate] | None:
        row = self._conn.execute(
            "SELECT kind, display_name, certificate_xml FROM principals WHERE principal_id = ?",
            (principal_id,),
        ).fetchone()
        if row is None:
            return None
        return row[0], row[1], RoleCertificate.from_element(parse(row[2].encode("utf-8")))

    # -- visits ----------------------------------------------------------------

    def _row_to_visit(self, row) -> VisitRecord:
        return VisitRecord(**dict(zip(_VISIT_COLS, row)))

    def register_visit(
        self,
        patient: dict,
        exam_type: str,
        visit_date: str,
        physician_id: str,
        room: str = "",
    ) -> VisitRecord:
        principal = self.get_principal(physician_id)
        if principal is None or principal[0] != "physician":
            raise MasterDbError("UNKNOWN_PHYSICIAN", physician_id)
        with self._lock:
            (n,) = self._conn.execute(
                "SELECT COALESCE(MAX(CAST(SUBSTR(visit_id, 2) AS INTEGER)), 0) FROM visits"
            ).fetchone()
            visit = VisitRecord(
                visit_id=f"v{n + 1}",
                patient_name=patient["name"],
                patient_surname=patient["surname"],
                patient_code=patient["patient_code"],
                origin=patient.get("origin", "external"),
                exam_type=exam_type,
                visit_date=visit_date,
                physician_id=physician_id,
                room=room,
            )
            self._conn.execute(
                f"INSERT INTO visits VALUES ({','.join('?' * len(_VISIT_COLS))})",
                tuple(getattr(visit, c) for c in _VISIT_COLS),
            )
            self._conn.commit()
        return visit

    def get_visit(self, visit_id: str) -> VisitRecord | None:
        row = self._conn.execute(
            f"SELECT {','.join(_VISIT_COLS)} FROM visits WHERE visit_id = ?", (visit_id,)
        ).fetchone()
        return self._row_to_visit(row) if row else None

    def visits_for(self, physician_id: str, visit_date: str) -> list[VisitRecord]:
        rows = self._conn.execute(
            f"SELECT {','.join(_VISIT_COLS)} FROM visits"
            " WHERE physician_id = ? AND visit_date = ? ORDER BY visit_id",
            (physician_id, visit_date),
        ).fetchall()
        return [self._row_to_visit(r) for r in rows]

    def all_visits(self) -> list[VisitRecord]:
        rows = self._conn.execute(f"SELECT {','.join(_VISIT_COLS)} FROM visits ORDER BY visit_id").fetchall()
        return [self._row_to_visit(r) for r in rows]

    # -- leases ---------------------------------------------------------------

    def take_leases(self, physician_id: str, visit_ids: list[str], ttl_seconds: int) -> None:
        expires = int(self.clock()) + ttl_seconds
        with self._lock:
            for visit_id in visit_ids:
                self._conn.execute(
                    "INSERT OR REPLACE INTO leases VALUES (?, ?, ?)",
                    (visit_id, physician_id, expires),
                )
            self._conn.commit()

    def lease_holder(self, visit_id: str) -> str | None:
        row = self._conn.execute(
            "SELECT physician_id, expires_at FROM leases WHERE visit_id = ?", (visit_id,)
        ).fetchone()
        if row is None or row[1] < int(self.clock()):
            return None
        return row[0]

    # -- mutations ----------------------------------------------------------------

    def apply_diagnosis(
        self, visit_id: str, physician_id: str, diagnosis: str, base_version: int
    ) -> tuple[str, int]:
        """Returns (outcome, version) with outcome OK | STALE_VERSION |
        NOT_LEASE_HOLDER; the master is only changed on OK."""
        with self._lock:
            visit = self.get_visit(visit_id)
            if visit is None:
                raise MasterDbError("UNKNOWN_VISIT", visit_id)
            if self.lease_holder(visit_id) != physician_id or visit.physician_id != physician_id:
                return "NOT_LEASE_HOLDER", visit.version
            if visit.version != base_version or visit.status == "processed":
                return "STALE_VERSION", visit.version
            new_version = visit.version + 1
            self._conn.execute(
                "UPDATE visits SET status = 'diagnosed', diagnosis = ?, version = ? WHERE visit_id = ?",
                (diagnosis, new_version, visit_id),
            )
            self._conn.commit()
            return "OK", new_version

    def mark_processed(self, visit_id: str, emr_doc_id: str) -> VisitRecord:
        with self._lock:
            visit = self.get_visit(visit_id)
            if visit is None:
                raise MasterDbError("UNKNOWN_VISIT", visit_id)
            if visit.status != "diagnosed":
                raise MasterDbError("NOT_DIAGNOSED", f"{visit_id} is {visit.status}")
            self._conn.execute(
                "UPDATE visits SET status = 'processed', emr_doc_id = ?, version = ? WHERE visit_id = ?",
                (emr_doc_id, visit.version + 1, visit_id),
            )
            self._conn.execute(
                "INSERT INTO history VALUES (?, ?, ?, ?)",
                (visit.patient_code, visit.visit_date, visit.exam_type, visit.diagnosis),
            )
            self._conn.commit()
            return self.get_visit(visit_id)  # type: ignore[return-value]

    def admin_update_visit(self, visit_id: str, **fields) -> VisitRecord:
        """Out-of-band register correction; bumps the version so stale
        offline snapshots are refused at push time."""
        allowed = {"exam_type", "room", "visit_date", "diagnosis", "status"}
        bad = set(fields) - allowed
        if bad:
            raise MasterDbError("BAD_FIELD", ", ".join(sorted(bad)))
        with self._lock:
            visit = self.get_visit(visit_id)
            if visit is None:
                raise MasterDbError("UNKNOWN_VISIT", visit_id)
            sets = ", ".join(f"{k} = ?" for k in fields)
            self._conn.execute(
                f"UPDATE visits SET {sets}, version = ? WHERE visit_id = ?",
                (*fields.values(), visit.version + 1, visit_id),
            )
            self._conn.commit()
            return self.get_visit(visit_id)  # type: ignore[return-value]

    # -- history -------------------------------------------------------------------

    def add_history(self, entry: HistoryEntry) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO history VALUES (?, ?, ?, ?)",
                (entry.patient_code, entry.visit_date, entry.exam_type, entry.summary),
            )
            self._conn.commit()

    def history_for(self, patient_code: str) -> list[HistoryEntry]:
        rows = self._conn.execute(
            "SELECT patient_code, visit_date, exam_type, summary FROM history"
            " WHERE patient_code = ? ORDER BY visit_date",
            (patient_code,),
        ).fetchall()
        return [HistoryEntry(*r) for r in rows]

    # -- audit ------------------------------------------------------------------------

    def audit_invariants(self) -> list[str]:
        problems: list[str] = []
        for visit in self.all_visits():
            problems.extend(visit.check_invariants())
        rows = self._conn.execute(
            "SELECT l.visit_id FROM leases l LEFT JOIN visits v ON v.visit_id = l.visit_id"
            " WHERE v.visit_id IS NULL"
        ).fetchall()
        problems.extend(f"lease on unknown visit {r[0]}" for r in rows)
        rows = self._conn.execute(
            "SELECT l.visit_id FROM leases l JOIN visits v ON v.visit_id = l.visit_id"
            " WHERE l.physician_id != v.physician_id"
        ).fetchall()
        problems.extend(f"lease holder is not the assignee on {r[0]}" for r in rows)
        return problems
