/**
 * Device-side session state: the cached worklist (the browser's light-db,
 * persisted in localStorage so ward dead spots survive reloads), dirty
 * diagnosis tracking, and the connectivity toggle.
 */

import { HistoryRow, SyncOutcome, VisitRow, WorklistReply } from "./facade.js";

export interface LocalVisit {
  record: VisitRow;
  dirty: boolean;
  stale: boolean;
}

export interface CacheShape {
  physicianId: string;
  snapshotTime: number;
  visits: LocalVisit[];
  history: HistoryRow[];
  storedDocs: { visitId: string; docId: string }[];
}

function storageKey(physicianId: string): string {
  return `sda-lightdb-${physicianId}`;
}

export class ConsoleStore {
  physicianId: string;
  snapshotTime = 0;
  visits = new Map<string, LocalVisit>();
  history: HistoryRow[] = [];
  storedDocs = new Map<string, string>(); // visit -> doc id

  constructor(physicianId: string) {
    this.physicianId = physicianId;
    this.loadCache();
  }

  private loadCache(): void {
    try {
      const raw = localStorage.getItem(storageKey(this.physicianId));
      if (!raw) return;
      const cache = JSON.parse(raw) as CacheShape;
      this.snapshotTime = cache.snapshotTime;
      this.history = cache.history;
      for (const lv of cache.visits) this.visits.set(lv.record.visit_id, lv);
      for (const entry of cache.storedDocs) this.storedDocs.set(entry.visitId, entry.docId);
    } catch {
      // a corrupt cache behaves like no cache
    }
  }

  save(): void {
    const cache: CacheShape = {
      physicianId: this.physicianId,
      snapshotTime: this.snapshotTime,
      visits: Array.from(this.visits.values()),
      history: this.history,
      storedDocs: Array.from(this.storedDocs, ([visitId, docId]) => ({ visitId, docId })),
    };
    try {
      localStorage.setItem(storageKey(this.physicianId), JSON.stringify(cache));
    } catch {
      // persistence is best effort in the browser
    }
  }

  get hasCache(): boolean {
    return this.visits.size > 0 || this.snapshotTime > 0;
  }

  rebase(reply: WorklistReply): void {
    this.visits = new Map(
      reply.visits.map((v) => [v.visit_id, { record: v, dirty: false, stale: false }]),
    );
    this.history = reply.history;
    this.snapshotTime = reply.snapshot_time;
    this.save();
  }

  recordDiagnosis(visitId: string, text: string): LocalVisit {
    const lv = this.visits.get(visitId);
    if (!lv) throw new Error(`unknown visit ${visitId}`);
    if (!text.trim()) throw new Error("diagnosis must not be empty");
    if (lv.record.status === "processed") throw new Error("visit already processed");
    lv.record.diagnosis = text;
    lv.record.status = "diagnosed";
    lv.dirty = true;
    this.save();
    return lv;
  }

  dirtyRecords(): LocalVisit[] {
    return Array.from(this.visits.values()).filter((lv) => lv.dirty);
  }

  applyOutcomes(outcomes: SyncOutcome[]): void {
    for (const outcome of outcomes) {
      const lv = this.visits.get(outcome.visit_id);
      if (!lv) continue;
      if (outcome.outcome === "OK") {
        lv.dirty = false;
        lv.stale = false;
        lv.record.version = outcome.version;
      } else {
        lv.stale = true;
      }
    }
    this.save();
  }

  noteStored(visitId: string, docId: string): void {
    const lv = this.visits.get(visitId);
    if (lv) {
      lv.record.status = "processed";
      lv.record.emr_doc_id = docId;
      lv.dirty = false;
    }
    this.storedDocs.set(visitId, docId);
    this.save();
  }

  historyFor(patientCode: string): HistoryRow[] {
    return this.history.filter((h) => h.patient_code === patientCode);
  }
}
