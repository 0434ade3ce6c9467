import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { join } from "node:path";

import { contentBytes, fieldValues, parseDoc } from "../src/edoc.js";
import { canonicalize, el, parseXml } from "../src/xmlmini.js";

const fixture = JSON.parse(
  readFileSync(join(__dirname, "fixtures", "interop.json"), "utf-8"),
);

describe("canonical form parity with the platform", () => {
  it("re-canonicalizing platform output is byte-identical", () => {
    for (const xml of [fixture.unsigned_doc_xml, fixture.signed_doc_xml, fixture.certificate_xml]) {
      expect(canonicalize(parseXml(xml))).toBe(xml);
    }
  });

  it("content region bytes match", () => {
    const doc = parseDoc(fixture.unsigned_doc_xml);
    expect(new TextDecoder().decode(contentBytes(doc))).toBe(fixture.content_bytes);
  });

  it("field values parse", () => {
    const doc = parseDoc(fixture.unsigned_doc_xml);
    expect(fieldValues(doc)["name"]).toBe("Anna");
    expect(fieldValues(doc)["diagnosis"]).toContain("venous");
  });
});

describe("canonicalization rules", () => {
  it("sorts attributes and escapes", () => {
    const node = el("e", { zeta: "1", alpha: 'quote" <x>' }, "a & b");
    expect(canonicalize(node)).toBe(
      '<e alpha="quote&quot; &lt;x&gt;" zeta="1">a &amp; b</e>',
    );
  });

  it("normalizes NFC", () => {
    const decomposed = el("e", {}, "café");
    const composed = el("e", {}, "café");
    expect(canonicalize(decomposed)).toBe(canonicalize(composed));
  });

  it("drops whitespace between elements, keeps leaf text", () => {
    const a = parseXml("<a>\n  <b>  keep  </b>\n</a>");
    expect(canonicalize(a)).toBe("<a><b>  keep  </b></a>");
  });

  it("rejects mixed content", () => {
    expect(() => parseXml("<a>text<b/></a>")).toThrow();
  });
});
