/**
 * Physician console: worklist checkout, offline diagnosis entry, sync,
 * review-and-sign, archive. Talks only to the records facade.
 *
 * Every control that needs the facade carries `data-requires-server` and is
 * disabled exactly while the connectivity toggle is off; diagnosis entry
 * and the cached worklist keep working offline. The signing panel displays
 * the platform rendering verbatim and the signature's view binding is
 * computed from the text actually in the DOM.
 */

import { sha256hex, utf8 } from "./crypto.js";
import { attachSignature, contentBytes, parseDoc, serializeDoc } from "./edoc.js";
import { FacadeClient, FacadeError } from "./facade.js";
import { KeystoreHandle, KeystoreError, MAX_PIN_FAILURES } from "./keystore.js";
import { ConsoleStore, LocalVisit } from "./state.js";
import { XElement } from "./xmlmini.js";

export interface ConsoleOptions {
  fetchImpl?: typeof fetch;
  now?: () => number;
}

function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  props: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(props)) {
    if (key === "text") node.textContent = value;
    else node.setAttribute(key, value);
  }
  for (const childNode of children) node.append(childNode);
  return node;
}

export class ConsoleApp {
  facade: FacadeClient | null = null;
  keystore: KeystoreHandle | null = null;
  store: ConsoleStore | null = null;
  offline = false;
  selectedVisit: string | null = null;
  /** last async UI operation; tests await this after dispatching events */
  busy: Promise<void> = Promise.resolve();
  private pendingDoc: { visitId: string; docXml: string; stylesheetId: string } | null = null;
  private readonly tabId = Math.random().toString(36).slice(2);
  private keystoreXml: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly options: ConsoleOptions = {},
  ) {
    this.render();
    window.addEventListener("storage", (event) => {
      if (event.key === "sda-tab-claim" && event.newValue && event.newValue !== this.tabId) {
        this.freeze("This session was claimed by another tab.");
      }
    });
  }

  private now(): number {
    return this.options.now ? this.options.now() : Math.floor(Date.now() / 1000);
  }

  private $(selector: string): HTMLElement {
    const node = this.root.querySelector(selector);
    if (!node) throw new Error(`missing element ${selector}`);
    return node as HTMLElement;
  }

  private input(selector: string): HTMLInputElement {
    return this.$(selector) as HTMLInputElement;
  }

  // -- layout -----------------------------------------------------------

  private render(): void {
    this.root.replaceChildren(
      h("header", {}, [
        h("h1", { text: "Physician console" }),
        h("label", { class: "toggle" }, [
          h("input", { type: "checkbox", id: "offline-toggle" }),
          " work offline",
        ]),
        h("span", { id: "banner", class: "banner", text: "" }),
      ]),
      h("section", { id: "login-panel" }, [
        h("h2", { text: "Sign in" }),
        h("input", { id: "facade-url", placeholder: "facade URL", value: "" }),
        h("input", { id: "principal", placeholder: "physician id" }),
        h("input", { id: "keystore-file", type: "file" }),
        h("input", { id: "login-pin", type: "password", placeholder: "PIN" }),
        h("button", { id: "connect", "data-requires-server": "" , text: "Connect" }),
        h("div", { id: "login-status", text: "" }),
      ]),
      h("section", { id: "worklist-panel", hidden: "" }, [
        h("h2", { text: "Worklist" }),
        h("input", { id: "worklist-date", type: "date" }),
        h("button", { id: "checkout", "data-requires-server": "", text: "Check out worklist" }),
        h("div", { id: "worklist-empty", text: "Nothing checked out yet." }),
        h("table", {}, [h("tbody", { id: "worklist-rows" })]),
      ]),
      h("section", { id: "editor-panel", hidden: "" }, [
        h("h2", { text: "Visit" }),
        h("div", { id: "patient-info" }),
        h("h3", { text: "Prior exams" }),
        h("ul", { id: "history-list" }),
        h("textarea", { id: "diagnosis-text", rows: "5" }),
        h("button", { id: "save-diagnosis", text: "Save diagnosis (local)" }),
        h("div", { id: "editor-status", text: "" }),
      ]),
      h("section", { id: "sync-panel", hidden: "" }, [
        h("h2", { text: "Synchronize" }),
        h("button", { id: "sync", "data-requires-server": "", text: "Sync diagnoses" }),
        h("ul", { id: "sync-results" }),
      ]),
      h("section", { id: "sign-panel", hidden: "" }, [
        h("h2", { text: "Review and sign" }),
        h("button", { id: "review", "data-requires-server": "", text: "Fetch report for review" }),
        h("pre", { id: "render-text" }),
        h("div", { id: "sign-area", hidden: "" }, [
          h("input", { id: "sign-pin", type: "password", placeholder: "PIN" }),
          h("button", { id: "sign", "data-requires-server": "", text: "Sign and upload" }),
          h("div", { id: "pin-warning", text: "" }),
        ]),
        h("div", { id: "sign-result", text: "" }),
      ]),
      h("section", { id: "archive-panel", hidden: "" }, [
        h("h2", { text: "Archive" }),
        h("ul", { id: "archive-list" }),
      ]),
    );

    this.$("#offline-toggle").addEventListener("change", () => {
      this.offline = (this.$("#offline-toggle") as HTMLInputElement).checked;
      this.applyConnectivity();
    });
    this.$("#connect").addEventListener("click", () => {
      this.busy = this.connect();
    });
    this.$("#checkout").addEventListener("click", () => {
      this.busy = this.checkout();
    });
    this.$("#save-diagnosis").addEventListener("click", () => {
      this.saveDiagnosis();
    });
    this.$("#sync").addEventListener("click", () => {
      this.busy = this.sync();
    });
    this.$("#review").addEventListener("click", () => {
      this.busy = this.review();
    });
    this.$("#sign").addEventListener("click", () => {
      this.busy = this.sign();
    });
    this.input("#keystore-file").addEventListener("change", () => {
      const file = this.input("#keystore-file").files?.[0];
      if (file) {
        this.busy = file.text().then((xml) => {
          this.keystoreXml = xml;
        });
      }
    });
    this.applyConnectivity();
  }

  /** Disable exactly the server-requiring controls while offline. */
  private applyConnectivity(): void {
    for (const node of Array.from(this.root.querySelectorAll("[data-requires-server]"))) {
      (node as HTMLButtonElement).disabled = this.offline;
    }
    this.$("#banner").textContent = this.offline ? "offline" : "";
  }

  private freeze(message: string): void {
    this.$("#banner").textContent = message;
    for (const node of Array.from(this.root.querySelectorAll("button, input, textarea"))) {
      (node as HTMLButtonElement).disabled = true;
    }
  }

  private status(selector: string, message: string): void {
    this.$(selector).textContent = message;
  }

  // -- session ------------------------------------------------------------

  /** Used by tests and by the file input handler. */
  async loadKeystoreXml(xml: string): Promise<void> {
    this.keystoreXml = xml;
  }

  async connect(): Promise<void> {
    try {
      if (this.offline) throw new FacadeError("OFFLINE", 0);
      if (!this.keystoreXml) throw new Error("choose a keystore file first");
      const principal = this.input("#principal").value.trim();
      const pin = this.input("#login-pin").value;
      this.keystore = await KeystoreHandle.load(this.keystoreXml);
      const base = this.input("#facade-url").value.trim() || window.location.origin;
      this.facade = new FacadeClient(base, this.options.fetchImpl);
      await this.facade.connect(principal, this.keystore, pin);
      localStorage.setItem("sda-tab-claim", this.tabId);
      this.store = new ConsoleStore(principal);
      this.input("#login-pin").value = "";
      this.status("#login-status", `connected as ${principal}`);
      this.$("#login-panel").hidden = true;
      for (const id of ["#worklist-panel", "#editor-panel", "#sync-panel", "#sign-panel", "#archive-panel"]) {
        this.$(id).hidden = false;
      }
      this.renderWorklist();
    } catch (err) {
      this.status("#login-status", this.describe(err));
    }
  }

  private describe(err: unknown): string {
    if (err instanceof KeystoreError) {
      if (err.code === "KEYSTORE_LOCKED" || err.code === "LOCKED_AFTER_THIS_ATTEMPT") {
        return "keystore locked: re-provision it before signing again";
      }
      if (err.code === "WRONG_PIN") {
        const left = MAX_PIN_FAILURES - (this.keystore?.failures ?? 0);
        return left <= 1 ? `wrong PIN: one attempt left before lockout` : `wrong PIN (${left} attempts left)`;
      }
      return err.code;
    }
    if (err instanceof FacadeError) return err.code === "OFFLINE" ? "offline" : err.message;
    return err instanceof Error ? err.message : String(err);
  }

  // -- worklist ----------------------------------------------------------------

  async checkout(): Promise<void> {
    if (!this.facade || !this.store || this.offline) return;
    try {
      const date = this.input("#worklist-date").value;
      this.store.rebase(await this.facade.worklist(date));
      this.renderWorklist();
    } catch (err) {
      this.status("#banner", this.describe(err));
    }
  }

  private renderWorklist(): void {
    if (!this.store) return;
    const rows = this.$("#worklist-rows");
    rows.replaceChildren();
    const visits = Array.from(this.store.visits.values());
    this.$("#worklist-empty").hidden = visits.length > 0;
    for (const lv of visits) {
      const record = lv.record;
      const row = h("tr", { "data-visit": record.visit_id }, [
        h("td", { text: record.visit_id }),
        h("td", { text: `${record.patient_surname} ${record.patient_name}` }),
        h("td", { text: record.exam_type }),
        h("td", {}, [h("span", { class: `badge ${record.status}`, text: record.status })]),
        h("td", { text: lv.stale ? "re-checkout needed" : lv.dirty ? "not synced" : "" }),
      ]);
      row.addEventListener("click", () => this.selectVisit(record.visit_id));
      rows.append(row);
    }
  }

  selectVisit(visitId: string): void {
    if (!this.store) return;
    const lv = this.store.visits.get(visitId);
    if (!lv) return;
    this.selectedVisit = visitId;
    const record = lv.record;
    this.$("#patient-info").replaceChildren(
      h("div", { text: `Patient: ${record.patient_surname} ${record.patient_name} (${record.patient_code})` }),
      h("div", { text: `Examination: ${record.exam_type} on ${record.visit_date}` }),
      h("div", { text: record.room ? `Room: ${record.room}` : "" }),
    );
    const history = this.$("#history-list");
    history.replaceChildren(
      ...this.store
        .historyFor(record.patient_code)
        .map((entry) => h("li", { text: `${entry.visit_date} [${entry.exam_type}] ${entry.summary}` })),
    );
    (this.$("#diagnosis-text") as HTMLTextAreaElement).value = record.diagnosis;
    this.$("#render-text").textContent = "";
    this.$("#sign-area").hidden = true;
    this.pendingDoc = null;
  }

  // -- diagnosis (local) ----------------------------------------------------------

  saveDiagnosis(): void {
    if (!this.store || !this.selectedVisit) return;
    const text = (this.$("#diagnosis-text") as HTMLTextAreaElement).value;
    try {
      this.store.recordDiagnosis(this.selectedVisit, text);
      this.status("#editor-status", "saved locally");
      this.renderWorklist();
    } catch (err) {
      // the typed text stays in the textarea on failure
      this.status("#editor-status", this.describe(err));
    }
  }

  // -- sync -------------------------------------------------------------------------

  async sync(): Promise<void> {
    if (!this.facade || !this.store || this.offline) return;
    const results = this.$("#sync-results");
    try {
      const dirty = this.store.dirtyRecords().map((lv) => ({
        visit_id: lv.record.visit_id,
        base_version: lv.record.version,
        diagnosis: lv.record.diagnosis,
      }));
      const outcomes = await this.facade.sync(dirty);
      this.store.applyOutcomes(outcomes);
      results.replaceChildren(
        ...outcomes.map((o) =>
          h("li", {
            "data-outcome": o.outcome,
            text:
              o.outcome === "OK"
                ? `${o.visit_id}: OK`
                : `${o.visit_id}: ${o.outcome} — check the worklist out again`,
          }),
        ),
      );
      this.renderWorklist();
    } catch (err) {
      results.replaceChildren(h("li", { text: this.describe(err) }));
    }
  }

  // -- review and sign -----------------------------------------------------------------

  async review(): Promise<void> {
    if (!this.facade || !this.selectedVisit || this.offline) return;
    try {
      const reply = await this.facade.emrGenerate(this.selectedVisit);
      // the signing panel shows the platform rendering verbatim
      this.$("#render-text").textContent = reply.rendered_text;
      this.pendingDoc = {
        visitId: this.selectedVisit,
        docXml: reply.doc_xml,
        stylesheetId: reply.stylesheet_id,
      };
      this.$("#sign-area").hidden = false;
      this.status("#sign-result", "");
    } catch (err) {
      this.status("#sign-result", this.describe(err));
    }
  }

  async sign(): Promise<void> {
    if (!this.facade || !this.store || !this.keystore || !this.pendingDoc || this.offline) return;
    const pin = this.input("#sign-pin").value;
    try {
      const displayed = this.$("#render-text").textContent ?? "";
      const viewDigest = await sha256hex(utf8(displayed));
      const doc: XElement = parseDoc(this.pendingDoc.docXml);
      const block = await this.keystore.sign(pin, contentBytes(doc), this.now(), {
        stylesheetId: this.pendingDoc.stylesheetId,
        viewDigest,
      });
      attachSignature(doc, block);
      const docId = await this.facade.emrStore(serializeDoc(doc));
      this.store.noteStored(this.pendingDoc.visitId, docId);
      this.input("#sign-pin").value = "";
      this.status("#pin-warning", "");
      this.status("#sign-result", `stored as ${docId}`);
      this.appendArchiveRow(this.pendingDoc.visitId, docId);
      this.pendingDoc = null;
      this.$("#sign-area").hidden = true;
      this.renderWorklist();
    } catch (err) {
      this.status("#pin-warning", this.describe(err));
    }
  }

  private appendArchiveRow(visitId: string, docId: string): void {
    const item = h("li", { "data-doc": docId }, [
      `${visitId} -> ${docId} `,
      h("button", { class: "print", "data-requires-server": "", text: "Print view" }),
      h("pre", { class: "print-text" }),
    ]);
    item.querySelector("button")!.addEventListener("click", () => {
      this.busy = this.printDoc(docId, item.querySelector("pre")!);
    });
    this.$("#archive-list").append(item);
    this.applyConnectivity();
  }

  private async printDoc(docId: string, target: HTMLElement): Promise<void> {
    if (!this.facade || this.offline) return;
    try {
      const reply = await this.facade.print(docId);
      target.textContent = reply.text;
    } catch (err) {
      target.textContent = this.describe(err);
    }
  }
}

export function initConsole(root: HTMLElement, options: ConsoleOptions = {}): ConsoleApp {
  return new ConsoleApp(root, options);
}
