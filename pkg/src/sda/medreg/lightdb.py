"""The per-physician offline snapshot (light-db): one canonical-XML file.

Holds the leased worklist with the master versions seen at checkout, the
patient history extracts, and signed e-MRs awaiting (or acknowledged after)
upload.  Every mutation is written to the file before it is reported done,
so diagnoses recorded in a dead spot survive a device restart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..crypto import format_ts, parse_ts
from ..edoc import EDoc
from ..xmlcanon import Element, canonicalize, parse
from .records import HistoryEntry, RecordError, VisitRecord


@dataclass
class LocalVisit:
    record: VisitRecord  # record.version is the master version at checkout/rebase
    dirty: bool = False  # diagnosed locally, not pushed yet
    stale: bool = False  # push refused; needs re-checkout


@dataclass
class PendingDoc:
    doc: EDoc
    doc_id: str = ""  # set once the upload has been acknowledged


@dataclass
class LightDb:
    path: Path
    physician_id: str
    snapshot_time: int = 0
    visits: dict[str, LocalVisit] = field(default_factory=dict)
    history: list[HistoryEntry] = field(default_factory=list)
    pending_signed: list[PendingDoc] = field(default_factory=list)

    # -- persistence -----------------------------------------------------------

    def to_element(self) -> Element:
        visit_els = []
        for lv in (self.visits[k] for k in sorted(self.visits)):
            el = Element(
                "visit",
                attrs={
                    **{k: str(v) for k, v in lv.record.to_dict().items() if k != "diagnosis"},
                    "dirty": "true" if lv.dirty else "false",
                    "stale": "true" if lv.stale else "false",
                },
                children=[Element("diagnosis", text=lv.record.diagnosis)],
            )
            visit_els.append(el)
        history_els = [
            Element(
                "entry",
                attrs={"patient-code": h.patient_code, "visit-date": h.visit_date, "exam-type": h.exam_type},
                text=h.summary,
            )
            for h in self.history
        ]
        pending_els = []
        for p in self.pending_signed:
            wrapper = Element("pending-doc", attrs={"doc-id": p.doc_id}, children=[p.doc.to_element()])
            pending_els.append(wrapper)
        return Element(
            "light-db",
            attrs={"physician": self.physician_id, "snapshot": format_ts(self.snapshot_time)},
            children=[
                Element("visits", children=visit_els),
                Element("history", children=history_els),
                Element("pending", children=pending_els),
            ],
        )

    def save(self) -> None:
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_bytes(canonicalize(self.to_element()))
        tmp.replace(self.path)

    @classmethod
    def load(cls, path: str | Path) -> "LightDb":
        path = Path(path)
        root = parse(path.read_bytes())
        if root.name != "light-db":
            raise RecordError("MALFORMED", f"expected <light-db>, got <{root.name}>")
        db = cls(path=path, physician_id=root.require_attr("physician"),
                 snapshot_time=parse_ts(root.require_attr("snapshot")))
        for el in root.require_child("visits").children_named("visit"):
            data = dict(el.attrs)
            dirty = data.pop("dirty", "false") == "true"
            stale = data.pop("stale", "false") == "true"
            data["version"] = int(data["version"])
            data["diagnosis"] = el.require_child("diagnosis").text
            db.visits[data["visit_id"]] = LocalVisit(VisitRecord.from_dict(data), dirty, stale)
        for el in root.require_child("history").children_named("entry"):
            db.history.append(
                HistoryEntry(
                    el.require_attr("patient-code"), el.require_attr("visit-date"),
                    el.require_attr("exam-type"), el.text,
                )
            )
        for el in root.require_child("pending").children_named("pending-doc"):
            db.pending_signed.append(
                PendingDoc(EDoc.from_element(el.require_child("edoc")), el.attr("doc-id"))
            )
        return db

    @classmethod
    def open_or_create(cls, path: str | Path, physician_id: str) -> "LightDb":
        path = Path(path)
        if path.exists():
            db = cls.load(path)
            if db.physician_id != physician_id:
                raise RecordError("WRONG_OWNER", f"light-db belongs to {db.physician_id}")
            return db
        db = cls(path=path, physician_id=physician_id)
        return db

    # -- local operations ----------------------------------------------------------

    def rebase(self, visits: list[VisitRecord], history: list[HistoryEntry], snapshot_time: int) -> None:
        """Replace the worklist with a fresh checkout; pending uploads are kept."""
        self.visits = {v.visit_id: LocalVisit(v.copy()) for v in visits}
        self.history = list(history)
        self.snapshot_time = snapshot_time
        self.save()

    def record_diagnosis(self, visit_id: str, text: str) -> LocalVisit:
        """Fully offline: update the local record and persist before returning."""
        if not text.strip():
            raise RecordError("EMPTY_DIAGNOSIS")
        lv = self.visits.get(visit_id)
        if lv is None:
            raise RecordError("UNKNOWN_VISIT", visit_id)
        if lv.record.status == "processed":
            raise RecordError("ALREADY_PROCESSED", visit_id)
        lv.record.diagnosis = text
        lv.record.status = "diagnosed"
        lv.dirty = True
        self.save()
        return lv

    def dirty_records(self) -> list[LocalVisit]:
        return [lv for lv in self.visits.values() if lv.dirty]

    def apply_sync_outcome(self, visit_id: str, outcome: str, version: int) -> None:
        lv = self.visits.get(visit_id)
        if lv is None:
            return
        if outcome == "OK":
            lv.dirty = False
            lv.stale = False
            lv.record.version = version
        else:
            lv.stale = True

    def note_uploaded(self, doc: EDoc, doc_id: str) -> None:
        digest = doc.content_digest()
        for p in self.pending_signed:
            if p.doc.content_digest() == digest:
                p.doc_id = doc_id
                self.save()
                return
        self.pending_signed.append(PendingDoc(doc, doc_id))
        self.save()

    def add_pending(self, doc: EDoc) -> None:
        self.pending_signed.append(PendingDoc(doc))
        self.save()

    def purge_signed(self, doc_id: str) -> None:
        """Free device space; refuses to drop anything not yet acknowledged."""
        for i, p in enumerate(self.pending_signed):
            if p.doc_id == doc_id and doc_id:
                del self.pending_signed[i]
                self.save()
                return
        raise RecordError("NOT_UPLOADED", doc_id)
