"""Builders and parsers for the kind-specific command bodies and payloads.

The element names here are normative; docs/protocol.md is the reference.
Builders are used by clients, parsers by the platform, and both by tests.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..crypto import RoleCertificate
from ..edoc import DocTypeDefinition, EDoc, RenderedView, Stylesheet
from ..xmlcanon import Element, XmlError
from .kinds import CommandKind


class BodyError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


# -- definitions / stylesheets ------------------------------------------------

def install_definition_body(defn: DocTypeDefinition) -> Element:
    return defn.to_element()


def parse_install_definition(body: Element) -> DocTypeDefinition:
    try:
        return DocTypeDefinition.from_element(body)
    except XmlError as exc:
        raise BodyError("MALFORMED", str(exc)) from exc


def install_stylesheet_body(sheet: Stylesheet) -> Element:
    return sheet.to_element()


def parse_install_stylesheet(body: Element) -> Stylesheet:
    try:
        return Stylesheet.from_element(body)
    except XmlError as exc:
        raise BodyError("MALFORMED", str(exc)) from exc


# -- roles ---------------------------------------------------------------------

def install_role_body(
    cert: RoleCertificate,
    allowed_kinds: set[CommandKind],
    allowed_doc_types: set[str] | None,
) -> Element:
    children: list[Element] = [cert.to_element()]
    children += [Element("allow", attrs={"kind": k.value}) for k in sorted(allowed_kinds, key=lambda k: k.value)]
    if allowed_doc_types is None:
        children.append(Element("all-doc-types"))
    else:
        children += [Element("doc-type", attrs={"name": t}) for t in sorted(allowed_doc_types)]
    return Element("install-role", children=children)


@dataclass
class RoleInstallRequest:
    certificate: RoleCertificate
    allowed_kinds: set[CommandKind]
    allowed_doc_types: set[str] | None  # None means all types


def parse_install_role(body: Element) -> RoleInstallRequest:
    if body.name != "install-role":
        raise BodyError("MALFORMED", f"expected <install-role>, got <{body.name}>")
    try:
        cert = RoleCertificate.from_element(body.require_child("certificate"))
    except (XmlError, Exception) as exc:
        raise BodyError("MALFORMED_CERT", str(exc)) from exc
    try:
        kinds = {CommandKind(a.require_attr("kind")) for a in body.children_named("allow")}
    except ValueError as exc:
        raise BodyError("MALFORMED", str(exc)) from exc
    if body.child("all-doc-types") is not None:
        types: set[str] | None = None
    else:
        types = {t.require_attr("name") for t in body.children_named("doc-type")}
    return RoleInstallRequest(cert, kinds, types)


def revoke_role_body(fingerprint: str) -> Element:
    return Element("revoke-role", attrs={"fingerprint": fingerprint})


def parse_revoke_role(body: Element) -> str:
    if body.name != "revoke-role":
        raise BodyError("MALFORMED", f"expected <revoke-role>, got <{body.name}>")
    return body.require_attr("fingerprint")


# -- documents -------------------------------------------------------------------

def create_doc_body(type_name: str, values: dict[str, str], version: int | None = None) -> Element:
    attrs = {"type": type_name}
    if version is not None:
        attrs["version"] = str(version)
    return Element(
        "create",
        attrs=attrs,
        children=[Element("value", attrs={"field": n}, text=v) for n, v in sorted(values.items())],
    )


def parse_create_doc(body: Element) -> tuple[str, int | None, dict[str, str]]:
    if body.name != "create":
        raise BodyError("MALFORMED", f"expected <create>, got <{body.name}>")
    values = {v.require_attr("field"): v.text for v in body.children_named("value")}
    version = int(body.attrs["version"]) if "version" in body.attrs else None
    return body.require_attr("type"), version, values


def store_doc_body(doc: EDoc) -> Element:
    return Element("store", children=[doc.to_element()])


def parse_store_doc(body: Element) -> EDoc:
    if body.name != "store":
        raise BodyError("MALFORMED", f"expected <store>, got <{body.name}>")
    try:
        return EDoc.from_element(body.require_child("edoc"))
    except (XmlError, Exception) as exc:
        raise BodyError("MALFORMED", str(exc)) from exc


def get_doc_body(doc_id: str) -> Element:
    return Element("get", attrs={"doc-id": doc_id})


def parse_get_doc(body: Element) -> str:
    if body.name != "get":
        raise BodyError("MALFORMED", f"expected <get>, got <{body.name}>")
    return body.require_attr("doc-id")


def search_body(type_name: str, attribute_equals: dict[str, str] | None = None) -> Element:
    return Element(
        "search",
        attrs={"type": type_name},
        children=[
            Element("where", attrs={"attribute": k, "equals": v})
            for k, v in sorted((attribute_equals or {}).items())
        ],
    )


def parse_search(body: Element) -> tuple[str, dict[str, str]]:
    if body.name != "search":
        raise BodyError("MALFORMED", f"expected <search>, got <{body.name}>")
    filters = {
        w.require_attr("attribute"): w.require_attr("equals") for w in body.children_named("where")
    }
    return body.require_attr("type"), filters


def render_body(stylesheet_id: str, doc_id: str = "", doc: EDoc | None = None) -> Element:
    attrs = {"stylesheet": stylesheet_id}
    children: list[Element] = []
    if doc is not None:
        children.append(doc.to_element())
    else:
        attrs["doc-id"] = doc_id
    return Element("render", attrs=attrs, children=children)


def parse_render(body: Element) -> tuple[str, str, EDoc | None]:
    if body.name != "render":
        raise BodyError("MALFORMED", f"expected <render>, got <{body.name}>")
    inline = body.child("edoc")
    doc = EDoc.from_element(inline) if inline is not None else None
    doc_id = body.attr("doc-id")
    if doc is None and not doc_id:
        raise BodyError("MALFORMED", "render needs a doc-id or an inline document")
    return body.require_attr("stylesheet"), doc_id, doc


def verify_doc_body(doc_id: str = "", doc: EDoc | None = None) -> Element:
    attrs = {}
    children: list[Element] = []
    if doc is not None:
        children.append(doc.to_element())
    else:
        attrs["doc-id"] = doc_id
    return Element("verify", attrs=attrs, children=children)


def parse_verify_doc(body: Element) -> tuple[str, EDoc | None]:
    if body.name != "verify":
        raise BodyError("MALFORMED", f"expected <verify>, got <{body.name}>")
    inline = body.child("edoc")
    doc = EDoc.from_element(inline) if inline is not None else None
    doc_id = body.attr("doc-id")
    if doc is None and not doc_id:
        raise BodyError("MALFORMED", "verify needs a doc-id or an inline document")
    return doc_id, doc


def set_attribute_body(doc_id: str, name: str, value: str) -> Element:
    return Element("set-attribute", attrs={"doc-id": doc_id, "name": name}, text=value)


def parse_set_attribute(body: Element) -> tuple[str, str, str]:
    if body.name != "set-attribute":
        raise BodyError("MALFORMED", f"expected <set-attribute>, got <{body.name}>")
    return body.require_attr("doc-id"), body.require_attr("name"), body.text


def get_attribute_body(doc_id: str, name: str) -> Element:
    return Element("get-attribute", attrs={"doc-id": doc_id, "name": name})


def parse_get_attribute(body: Element) -> tuple[str, str]:
    if body.name != "get-attribute":
        raise BodyError("MALFORMED", f"expected <get-attribute>, got <{body.name}>")
    return body.require_attr("doc-id"), body.require_attr("name")


def list_types_body() -> Element:
    return Element("list-types")


def status_body() -> Element:
    return Element("status")


def port_control_body(port_name: str) -> Element:
    return Element("port-control", attrs={"port": port_name})


def parse_port_control(body: Element) -> str:
    if body.name != "port-control":
        raise BodyError("MALFORMED", f"expected <port-control>, got <{body.name}>")
    return body.require_attr("port")


# -- payloads ---------------------------------------------------------------------

def ok_payload() -> Element:
    return Element("ok")


def error_payload(code: str, detail: str = "") -> Element:
    return Element("error", attrs={"code": code}, text=detail)


def stored_payload(doc_id: str) -> Element:
    return Element("stored", attrs={"doc-id": doc_id})


def parse_stored_payload(payload: Element) -> str:
    return payload.require_attr("doc-id")


def results_payload(doc_ids: list[str]) -> Element:
    return Element("results", children=[Element("result", attrs={"doc-id": i}) for i in doc_ids])


def parse_results_payload(payload: Element) -> list[str]:
    return [r.require_attr("doc-id") for r in payload.children_named("result")]


def rendered_payload(view: RenderedView) -> Element:
    return Element(
        "rendered",
        attrs={"stylesheet": view.stylesheet_id, "locale": view.locale, "digest": view.view_digest},
        text=view.text,
    )


def parse_rendered_payload(payload: Element) -> RenderedView:
    return RenderedView(
        stylesheet_id=payload.require_attr("stylesheet"),
        locale=payload.attr("locale"),
        text=payload.text,
        view_digest=payload.require_attr("digest"),
    )


def verification_payload(report) -> Element:
    sig_els = [
        Element(
            "signature-check",
            attrs={
                "index": str(c.index),
                "signer": c.signer_fingerprint,
                "valid": "true" if c.valid else "false",
                "reason": c.reason,
            },
        )
        for c in report.per_signature
    ]
    view_els = [
        Element(
            "view-check",
            attrs={
                "index": str(c.index),
                "stylesheet": c.stylesheet_id,
                "ok": "true" if c.ok else "false",
                "reason": c.reason,
            },
        )
        for c in report.view_binding_checks
    ]
    return Element(
        "verification",
        attrs={"all-valid": "true" if report.all_valid else "false"},
        children=sig_els + view_els,
    )


def attribute_payload(name: str, value: str | None) -> Element:
    return Element(
        "attribute",
        attrs={"name": name, "present": "true" if value is not None else "false"},
        text=value or "",
    )


def types_payload(definitions: list[DocTypeDefinition]) -> Element:
    children = []
    for d in definitions:
        el = d.to_element()
        el.children += [Element("stylesheet-ref", attrs={"id": s}) for s in sorted(d.stylesheet_ids)]
        children.append(el)
    return Element("types", children=children)


def parse_types_payload(payload: Element) -> list[DocTypeDefinition]:
    out = []
    for el in payload.children_named("definition"):
        refs = frozenset(r.require_attr("id") for r in el.children_named("stylesheet-ref"))
        base = Element(el.name, attrs=el.attrs, children=el.children_named("field"))
        defn = DocTypeDefinition.from_element(base)
        out.append(
            DocTypeDefinition(defn.type_name, defn.version, defn.fields, stylesheet_ids=refs)
        )
    return out
