/**
 * Restricted XML model mirroring the server's canonical byte form.
 *
 * Canonical rules: UTF-8, NFC-normalized text and attribute values,
 * attributes sorted by name, no whitespace between elements, the five
 * characters & < > " ' always escaped, tab/newline/CR in attribute values
 * and CR in text written as numeric character references. An element holds
 * either child elements or text, never both.
 */

export interface XElement {
  name: string;
  attrs: Record<string, string>;
  text: string;
  children: XElement[];
}

export class XmlError extends Error {}

const NAME_RE = /^[A-Za-z_][A-Za-z0-9_.\-]*$/;

export function el(
  name: string,
  attrs: Record<string, string> = {},
  text = "",
  children: XElement[] = [],
): XElement {
  return { name, attrs, text, children };
}

export function child(e: XElement, name: string): XElement | undefined {
  return e.children.find((c) => c.name === name);
}

export function requireChild(e: XElement, name: string): XElement {
  const c = child(e, name);
  if (!c) throw new XmlError(`missing <${name}> in <${e.name}>`);
  return c;
}

export function childrenNamed(e: XElement, name: string): XElement[] {
  return e.children.filter((c) => c.name === name);
}

export function requireAttr(e: XElement, name: string): string {
  const value = e.attrs[name];
  if (value === undefined) throw new XmlError(`missing attribute ${name} on <${e.name}>`);
  return value;
}

function checkName(name: string): string {
  if (!NAME_RE.test(name)) throw new XmlError(`invalid name: ${name}`);
  return name;
}

function escapeText(value: string): string {
  return value.replace(/[&<>"'\r]/g, (ch) =>
    ch === "&" ? "&amp;" : ch === "<" ? "&lt;" : ch === ">" ? "&gt;"
    : ch === '"' ? "&quot;" : ch === "'" ? "&apos;" : "&#xD;",
  );
}

function escapeAttr(value: string): string {
  return escapeText(value).replace(/\t/g, "&#x9;").replace(/\n/g, "&#xA;");
}

function write(e: XElement, out: string[]): void {
  checkName(e.name);
  out.push("<", e.name);
  for (const name of Object.keys(e.attrs).sort()) {
    const value = (e.attrs[name] ?? "").normalize("NFC");
    out.push(" ", checkName(name), '="', escapeAttr(value), '"');
  }
  if (e.children.length === 0 && e.text === "") {
    out.push("/>");
    return;
  }
  out.push(">");
  if (e.children.length > 0) {
    if (e.text.trim() !== "") throw new XmlError(`mixed content in <${e.name}>`);
    for (const c of e.children) write(c, out);
  } else {
    out.push(escapeText(e.text.normalize("NFC")));
  }
  out.push("</", e.name, ">");
}

/** Canonical form as a string; digest inputs are its UTF-8 bytes. */
export function canonicalize(e: XElement): string {
  const out: string[] = [];
  write(e, out);
  return out.join("");
}

export function canonicalBytes(e: XElement): Uint8Array {
  return new TextEncoder().encode(canonicalize(e));
}

function convert(node: Element): XElement {
  const name = checkName(node.tagName);
  const attrs: Record<string, string> = {};
  for (const attr of Array.from(node.attributes)) {
    attrs[checkName(attr.name)] = attr.value.normalize("NFC");
  }
  const elements = Array.from(node.children);
  if (elements.length > 0) {
    for (const n of Array.from(node.childNodes)) {
      if (n.nodeType === 3 && (n.textContent ?? "").trim() !== "") {
        throw new XmlError(`mixed content in <${name}>`);
      }
    }
    return el(name, attrs, "", elements.map(convert));
  }
  return el(name, attrs, (node.textContent ?? "").normalize("NFC"));
}

export function parseXml(xml: string): XElement {
  const doc = new DOMParser().parseFromString(xml, "application/xml");
  const error = doc.querySelector("parsererror");
  if (error || !doc.documentElement) {
    throw new XmlError(`malformed XML: ${error?.textContent ?? "no document element"}`);
  }
  return convert(doc.documentElement);
}
