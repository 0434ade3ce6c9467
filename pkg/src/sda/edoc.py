"""Typed e-documents: schemas, instances, rendering, signatures, attributes.

An e-doc pins the (type name, version) of the definition it was validated
against, so installing a newer definition never retro-invalidates stored
documents.  The signed content region covers only the type pin and the field
values; dynamic attributes, the store-assigned doc id and the creation
timestamp live outside it, which is what lets the workflow engine mutate
status attributes on stored, signed documents and lets the store assign ids
after signing without breaking any signature.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from datetime import date

from .crypto import RoleCertificate, SignatureBlock, format_ts, parse_ts, sha256_hex, verify_signature
from .xmlcanon import Element, XmlError, canonicalize, parse

FIELD_KINDS = ("string", "date", "integer", "enum")

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_INT_RE = re.compile(r"^(0|-?[1-9][0-9]*)$")
_PLACEHOLDER_RE = re.compile(r"\{field:([A-Za-z_][A-Za-z0-9_.\-]*)\}")

_ESCAPES = {"&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&apos;"}


def xml_escape(value: str) -> str:
    """The fixed escaping applied to field values substituted into views."""
    return re.sub("[&<>\"']", lambda m: _ESCAPES[m.group(0)], value)


class EdocError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    required: bool = True
    default: str | None = None
    form_label: str = ""
    enum_values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise EdocError("BAD_KIND", f"unknown field kind {self.kind!r}")
        if self.kind == "enum" and not self.enum_values:
            raise EdocError("BAD_KIND", f"enum field {self.name!r} needs values")
        if self.default is not None and not value_conforms(self, self.default):
            raise EdocError("BAD_DEFAULT", f"default for {self.name!r} does not conform")


def value_conforms(spec: FieldSpec, value: str) -> bool:
    if spec.kind == "string":
        return True
    if spec.kind == "date":
        if not _DATE_RE.match(value):
            return False
        try:
            date.fromisoformat(value)
            return True
        except ValueError:
            return False
    if spec.kind == "integer":
        return bool(_INT_RE.match(value))
    return value in spec.enum_values


@dataclass(frozen=True)
class DocTypeDefinition:
    type_name: str
    version: int
    fields: tuple[FieldSpec, ...]
    stylesheet_ids: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.version < 1:
            raise EdocError("BAD_VERSION", "definition versions start at 1")
        names = [f.name for f in self.fields]
        if len(names) != len(set(names)):
            raise EdocError("DUPLICATE_FIELD", f"duplicate field names in {self.type_name}")

    def field_map(self) -> dict[str, FieldSpec]:
        return {f.name: f for f in self.fields}

    def to_element(self) -> Element:
        children = []
        for f in self.fields:
            attrs = {"name": f.name, "kind": f.kind, "required": "true" if f.required else "false"}
            if f.form_label:
                attrs["label"] = f.form_label
            if f.default is not None:
                attrs["default"] = f.default
            options = [Element("option", attrs={"value": v}) for v in f.enum_values]
            children.append(Element("field", attrs=attrs, children=options))
        return Element(
            "definition",
            attrs={"type": self.type_name, "version": str(self.version)},
            children=children,
        )

    @classmethod
    def from_element(cls, el: Element) -> "DocTypeDefinition":
        if el.name != "definition":
            raise XmlError(f"expected <definition>, got <{el.name}>")
        specs = []
        for f in el.children_named("field"):
            specs.append(
                FieldSpec(
                    name=f.require_attr("name"),
                    kind=f.require_attr("kind"),
                    required=f.attr("required", "true") == "true",
                    default=f.attrs.get("default"),
                    form_label=f.attr("label"),
                    enum_values=tuple(o.require_attr("value") for o in f.children_named("option")),
                )
            )
        return cls(
            type_name=el.require_attr("type"),
            version=int(el.require_attr("version")),
            fields=tuple(specs),
        )


@dataclass(frozen=True)
class Stylesheet:
    stylesheet_id: str
    type_name: str
    locale: str
    template: str
    escaping_mode: str = "xml"

    def placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.template)

    def to_element(self) -> Element:
        return Element(
            "stylesheet",
            attrs={"id": self.stylesheet_id, "type": self.type_name, "locale": self.locale},
            text=self.template,
        )

    @classmethod
    def from_element(cls, el: Element) -> "Stylesheet":
        if el.name != "stylesheet":
            raise XmlError(f"expected <stylesheet>, got <{el.name}>")
        return cls(
            stylesheet_id=el.require_attr("id"),
            type_name=el.require_attr("type"),
            locale=el.attr("locale", "en"),
            template=el.text,
        )


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------

@dataclass
class EDoc:
    type_name: str
    type_version: int
    field_values: dict[str, str]
    created_at: int
    doc_id: str = ""
    attributes: dict[str, str] = field(default_factory=dict)
    signatures: list[SignatureBlock] = field(default_factory=list)

    def content_element(self) -> Element:
        fields_el = Element(
            "fields",
            children=[
                Element("field", attrs={"name": n}, text=v)
                for n, v in sorted(self.field_values.items())
            ],
        )
        return Element(
            "edoc",
            attrs={"type": self.type_name, "version": str(self.type_version)},
            children=[fields_el],
        )

    def content_bytes(self) -> bytes:
        """Canonical bytes of the signed content region."""
        return canonicalize(self.content_element())

    def content_digest(self) -> str:
        return sha256_hex(self.content_bytes())

    def to_element(self) -> Element:
        el = self.content_element()
        el.attrs["id"] = self.doc_id
        el.attrs["created"] = format_ts(self.created_at)
        el.children.append(
            Element(
                "attributes",
                children=[
                    Element("attribute", attrs={"name": n}, text=v)
                    for n, v in sorted(self.attributes.items())
                ],
            )
        )
        el.children.append(Element("signatures", children=[s.to_element() for s in self.signatures]))
        return el

    @classmethod
    def from_element(cls, el: Element) -> "EDoc":
        if el.name != "edoc":
            raise XmlError(f"expected <edoc>, got <{el.name}>")
        values: dict[str, str] = {}
        for f in el.require_child("fields").children_named("field"):
            name = f.require_attr("name")
            if name in values:
                raise XmlError(f"duplicate field {name!r}")
            values[name] = f.text
        attrs: dict[str, str] = {}
        attrs_el = el.child("attributes")
        if attrs_el is not None:
            for a in attrs_el.children_named("attribute"):
                attrs[a.require_attr("name")] = a.text
        sigs_el = el.child("signatures")
        sigs = [SignatureBlock.from_element(s) for s in sigs_el.children] if sigs_el else []
        return cls(
            type_name=el.require_attr("type"),
            type_version=int(el.require_attr("version")),
            field_values=values,
            created_at=parse_ts(el.attr("created", "1970-01-01T00:00:00Z")),
            doc_id=el.attr("id"),
            attributes=attrs,
            signatures=sigs,
        )


def serialize_doc(doc: EDoc) -> bytes:
    return canonicalize(doc.to_element())


def parse_doc(data: bytes) -> EDoc:
    return EDoc.from_element(parse(data))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str  # MISSING_FIELD | BAD_VALUE | UNKNOWN_FIELD
    field_name: str
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...] = ()


class DocValidationError(EdocError):
    def __init__(self, report: ValidationReport):
        detail = "; ".join(f"{v.code}({v.field_name})" for v in report.violations)
        super().__init__("VALIDATION_FAILED", detail)
        self.report = report


def validate_doc(defn: DocTypeDefinition, doc: EDoc) -> ValidationReport:
    if doc.type_name != defn.type_name:
        raise EdocError("TYPE_MISMATCH", f"{doc.type_name!r} != {defn.type_name!r}")
    if doc.type_version != defn.version:
        raise EdocError("VERSION_MISMATCH", f"doc pins v{doc.type_version}, definition is v{defn.version}")
    violations: list[Violation] = []
    specs = defn.field_map()
    for name, spec in specs.items():
        if name not in doc.field_values:
            if spec.required:
                violations.append(Violation("MISSING_FIELD", name))
            continue
        if not value_conforms(spec, doc.field_values[name]):
            violations.append(Violation("BAD_VALUE", name, doc.field_values[name]))
    for name in doc.field_values:
        if name not in specs:
            violations.append(Violation("UNKNOWN_FIELD", name))
    return ValidationReport(ok=not violations, violations=tuple(violations))


def _coerce(value) -> str:
    if isinstance(value, bool):
        raise EdocError("BAD_VALUE", "boolean field values are not supported")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, str):
        return unicodedata.normalize("NFC", value)
    raise EdocError("BAD_VALUE", f"unsupported value type {type(value).__name__}")


def create_doc(defn: DocTypeDefinition, values: dict, *, now: int) -> EDoc:
    """Build an unsigned document, applying defaults and validating."""
    merged = {name: _coerce(v) for name, v in values.items()}
    for spec in defn.fields:
        if spec.name not in merged and spec.default is not None:
            merged[spec.name] = spec.default
    doc = EDoc(
        type_name=defn.type_name,
        type_version=defn.version,
        field_values=merged,
        created_at=int(now),
    )
    report = validate_doc(defn, doc)
    if not report.ok:
        raise DocValidationError(report)
    return doc


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenderedView:
    stylesheet_id: str
    locale: str
    text: str
    view_digest: str


def render(doc: EDoc, sheet: Stylesheet) -> RenderedView:
    """Deterministic text rendering; byte-identical across calls."""
    if sheet.type_name != doc.type_name:
        raise EdocError("TYPE_MISMATCH", f"stylesheet is for {sheet.type_name!r}")

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in doc.field_values:
            raise EdocError("MISSING_FIELD", f"placeholder {name!r} not in document")
        return xml_escape(doc.field_values[name])

    text = _PLACEHOLDER_RE.sub(substitute, sheet.template)
    return RenderedView(
        stylesheet_id=sheet.stylesheet_id,
        locale=sheet.locale,
        text=text,
        view_digest=sha256_hex(text.encode("utf-8")),
    )


# ---------------------------------------------------------------------------
# Signatures and attributes
# ---------------------------------------------------------------------------

def attach_signature(doc: EDoc, block: SignatureBlock) -> EDoc:
    """Append a signature block; prior blocks are untouched (multi-signer)."""
    if block.content_digest != doc.content_digest():
        raise EdocError("NON_VERIFYING_BLOCK", "content digest does not match this document")
    doc.signatures.append(block)
    return doc


def set_attribute(doc: EDoc, name: str, value: str) -> EDoc:
    if not name:
        raise EdocError("BAD_ATTRIBUTE", "attribute name must be nonempty")
    doc.attributes[name] = value
    return doc


def get_attribute(doc: EDoc, name: str) -> str | None:
    return doc.attributes.get(name)


@dataclass(frozen=True)
class SignatureCheck:
    index: int
    signer_fingerprint: str
    valid: bool
    reason: str = ""


@dataclass(frozen=True)
class ViewCheck:
    index: int
    stylesheet_id: str
    ok: bool
    reason: str = ""


@dataclass(frozen=True)
class DocVerification:
    all_valid: bool
    per_signature: tuple[SignatureCheck, ...]
    view_binding_checks: tuple[ViewCheck, ...]


def verify_doc(
    doc: EDoc,
    certs: dict[str, RoleCertificate],
    stylesheets: dict[str, Stylesheet] | None = None,
) -> DocVerification:
    """Verify every signature; re-render and re-check each view binding."""
    stylesheets = stylesheets or {}
    content = doc.content_bytes()
    sig_checks: list[SignatureCheck] = []
    view_checks: list[ViewCheck] = []
    for i, block in enumerate(doc.signatures):
        cert = certs.get(block.signer_fingerprint)
        if cert is None:
            sig_checks.append(SignatureCheck(i, block.signer_fingerprint, False, "UNKNOWN_SIGNER"))
        else:
            result = verify_signature(cert, content, block)
            sig_checks.append(SignatureCheck(i, block.signer_fingerprint, result.valid, result.reason))
        if block.view_stylesheet_id:
            sheet = stylesheets.get(block.view_stylesheet_id)
            if sheet is None:
                view_checks.append(ViewCheck(i, block.view_stylesheet_id, False, "STYLESHEET_UNAVAILABLE"))
                continue
            try:
                view = render(doc, sheet)
            except EdocError:
                view_checks.append(ViewCheck(i, block.view_stylesheet_id, False, "RENDER_ERROR"))
                continue
            if view.view_digest != block.view_digest:
                view_checks.append(ViewCheck(i, block.view_stylesheet_id, False, "VIEW_DIGEST_MISMATCH"))
            else:
                view_checks.append(ViewCheck(i, block.view_stylesheet_id, True))
    all_valid = all(c.valid for c in sig_checks) and all(c.ok for c in view_checks)
    return DocVerification(all_valid, tuple(sig_checks), tuple(view_checks))
