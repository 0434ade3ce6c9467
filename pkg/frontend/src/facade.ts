/**
 * Typed client for the records facade. The console talks to nothing else.
 */

import { b64encode, utf8 } from "./crypto.js";
import { canonicalBytes } from "./xmlmini.js";
import { KeystoreHandle } from "./keystore.js";

export interface VisitRow {
  visit_id: string;
  patient_name: string;
  patient_surname: string;
  patient_code: string;
  origin: string;
  exam_type: string;
  visit_date: string;
  physician_id: string;
  room: string;
  status: string;
  diagnosis: string;
  emr_doc_id: string;
  version: number;
}

export interface HistoryRow {
  patient_code: string;
  visit_date: string;
  exam_type: string;
  summary: string;
}

export interface WorklistReply {
  visits: VisitRow[];
  history: HistoryRow[];
  snapshot_time: number;
}

export interface SyncOutcome {
  visit_id: string;
  outcome: "OK" | "STALE_VERSION" | "NOT_LEASE_HOLDER";
  version: number;
}

export interface GenerateReply {
  doc_xml: string;
  rendered_text: string;
  view_digest: string;
  stylesheet_id: string;
  locale: string;
}

export class FacadeError extends Error {
  constructor(public code: string, public httpStatus: number, detail?: string) {
    super(detail ? `${code}: ${detail}` : code);
  }
}

type FetchLike = typeof fetch;

export class FacadeClient {
  private token: string | null = null;

  constructor(
    public readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["X-Session-Token"] = this.token;
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new FacadeError("OFFLINE", 0, String(err));
    }
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new FacadeError(payload.error ?? "HTTP_ERROR", response.status, payload.detail);
    }
    return payload;
  }

  /** Prove keystore possession: challenge, sign, redeem for a token. */
  async connect(principal: string, keystore: KeystoreHandle, pin: string): Promise<void> {
    const { challenge } = await this.request("POST", "/session", { principal });
    const block = await keystore.sign(pin, utf8(challenge), Math.floor(Date.now() / 1000));
    const reply = await this.request("POST", "/session", {
      principal,
      challenge,
      signature_block: b64encode(canonicalBytes(block)),
    });
    this.token = reply.token;
  }

  get connected(): boolean {
    return this.token !== null;
  }

  worklist(date: string): Promise<WorklistReply> {
    return this.request("GET", `/worklist?date=${encodeURIComponent(date)}`);
  }

  async sync(records: { visit_id: string; base_version: number; diagnosis: string }[]): Promise<SyncOutcome[]> {
    const reply = await this.request("POST", "/sync", { records });
    return reply.results;
  }

  emrGenerate(visitId: string): Promise<GenerateReply> {
    return this.request("POST", "/emr/generate", { visit_id: visitId });
  }

  async emrStore(docXml: string): Promise<string> {
    const reply = await this.request("POST", "/emr/store", { doc_xml: docXml });
    return reply.doc_id;
  }

  print(docId: string): Promise<{ path: string; text: string; digest: string }> {
    return this.request("GET", `/emr/${encodeURIComponent(docId)}/print`);
  }

  async history(patientCode: string): Promise<HistoryRow[]> {
    const reply = await this.request("GET", `/history/${encodeURIComponent(patientCode)}`);
    return reply.entries;
  }
}
