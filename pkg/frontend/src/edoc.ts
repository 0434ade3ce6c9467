/**
 * E-doc helpers over the generic element model: the signed content region,
 * signature attachment and serialization, mirroring the platform's format.
 */

import { sha256hex } from "./crypto.js";
import {
  XElement,
  canonicalBytes,
  canonicalize,
  child,
  childrenNamed,
  el,
  parseXml,
  requireChild,
} from "./xmlmini.js";

export function parseDoc(xml: string): XElement {
  const doc = parseXml(xml);
  if (doc.name !== "edoc") throw new Error(`expected <edoc>, got <${doc.name}>`);
  return doc;
}

export function fieldValues(doc: XElement): Record<string, string> {
  const values: Record<string, string> = {};
  for (const field of childrenNamed(requireChild(doc, "fields"), "field")) {
    values[field.attrs["name"] ?? ""] = field.text;
  }
  return values;
}

/** Canonical bytes of the signed region: type pin plus field values only. */
export function contentBytes(doc: XElement): Uint8Array {
  const fields = childrenNamed(requireChild(doc, "fields"), "field")
    .slice()
    .sort((a, b) => (a.attrs["name"] ?? "").localeCompare(b.attrs["name"] ?? ""));
  const content = el(
    "edoc",
    { type: doc.attrs["type"] ?? "", version: doc.attrs["version"] ?? "" },
    "",
    [el("fields", {}, "", fields.map((f) => el("field", { name: f.attrs["name"] ?? "" }, f.text)))],
  );
  return canonicalBytes(content);
}

export async function contentDigest(doc: XElement): Promise<string> {
  return sha256hex(contentBytes(doc));
}

export function attachSignature(doc: XElement, signature: XElement): XElement {
  let signatures = child(doc, "signatures");
  if (!signatures) {
    signatures = el("signatures");
    doc.children.push(signatures);
  }
  signatures.children.push(signature);
  return doc;
}

export function serializeDoc(doc: XElement): string {
  return canonicalize(doc);
}
