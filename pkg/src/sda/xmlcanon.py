"""Restricted XML document model with a deterministic canonical byte form.

Every structure the system signs, stores or transmits is reduced to this
model: an element tree without namespaces, mixed content or processing
instructions.  The canonical form is the normative wire and storage format;
signatures and fingerprints are computed over it, so two structurally equal
trees must always canonicalize to identical bytes.

Canonical form rules:
  * UTF-8, no XML declaration.
  * Text and attribute values are Unicode NFC-normalized.
  * Attributes are sorted lexicographically by name.
  * No whitespace between elements; leaf text is preserved verbatim.
  * ``& < > " '`` are always escaped; tab/newline/CR in attribute values and
    CR in text are emitted as numeric character references so they survive
    re-parsing.
  * An element holds either child elements or text, never both.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from xml.etree import ElementTree

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")

_TEXT_ESCAPES = {
    "&": "&amp;",
    "<": "&lt;",
    ">": "&gt;",
    '"': "&quot;",
    "'": "&apos;",
    "\r": "&#xD;",
}
_ATTR_ESCAPES = dict(_TEXT_ESCAPES, **{"\t": "&#x9;", "\n": "&#xA;"})

_TEXT_ESCAPE_RE = re.compile("[&<>\"'\r]")
_ATTR_ESCAPE_RE = re.compile("[&<>\"'\r\t\n]")


class XmlError(ValueError):
    """Malformed input or content outside the restricted XML model."""


@dataclass(eq=True)
class Element:
    """One node: a name, attributes, and either text or child elements."""

    name: str
    attrs: dict[str, str] = field(default_factory=dict)
    text: str = ""
    children: list["Element"] = field(default_factory=list)

    def child(self, name: str) -> "Element | None":
        for c in self.children:
            if c.name == name:
                return c
        return None

    def require_child(self, name: str) -> "Element":
        c = self.child(name)
        if c is None:
            raise XmlError(f"missing <{name}> in <{self.name}>")
        return c

    def children_named(self, name: str) -> list["Element"]:
        return [c for c in self.children if c.name == name]

    def attr(self, name: str, default: str = "") -> str:
        return self.attrs.get(name, default)

    def require_attr(self, name: str) -> str:
        if name not in self.attrs:
            raise XmlError(f"missing attribute {name!r} on <{self.name}>")
        return self.attrs[name]


def _check_name(name: str) -> str:
    if not _NAME_RE.match(name):
        raise XmlError(f"invalid name: {name!r}")
    return name


def _check_chars(value: str) -> str:
    for ch in value:
        o = ord(ch)
        if o in (0x9, 0xA, 0xD):
            continue
        if 0x20 <= o <= 0xD7FF or 0xE000 <= o <= 0xFFFD or 0x10000 <= o <= 0x10FFFF:
            continue
        raise XmlError(f"non-representable character U+{o:04X}")
    return value


def _escape(value: str, attr: bool) -> str:
    table = _ATTR_ESCAPES if attr else _TEXT_ESCAPES
    pattern = _ATTR_ESCAPE_RE if attr else _TEXT_ESCAPE_RE
    return pattern.sub(lambda m: table[m.group(0)], value)


def _write(el: Element, out: list[str]) -> None:
    _check_name(el.name)
    out.append("<")
    out.append(el.name)
    for name in sorted(el.attrs):
        value = unicodedata.normalize("NFC", _check_chars(el.attrs[name]))
        out.append(f' {_check_name(name)}="{_escape(value, attr=True)}"')
    if not el.children and not el.text:
        out.append("/>")
        return
    out.append(">")
    if el.children:
        if el.text and el.text.strip():
            raise XmlError(f"mixed content in <{el.name}>")
        for c in el.children:
            _write(c, out)
    else:
        out.append(_escape(unicodedata.normalize("NFC", _check_chars(el.text)), attr=False))
    out.append(f"</{el.name}>")


def canonicalize(el: Element) -> bytes:
    """Serialize to the canonical byte form. Deterministic and idempotent."""
    out: list[str] = []
    _write(el, out)
    return "".join(out).encode("utf-8")


def _convert(node: ElementTree.Element) -> Element:
    name = _check_name(str(node.tag))
    attrs: dict[str, str] = {}
    for k, v in node.attrib.items():
        attrs[_check_name(str(k))] = unicodedata.normalize("NFC", _check_chars(v))
    children = list(node)
    if children:
        if node.text is not None and node.text.strip():
            raise XmlError(f"mixed content in <{name}>")
        converted = []
        for c in children:
            if c.tail is not None and c.tail.strip():
                raise XmlError(f"mixed content in <{name}>")
            converted.append(_convert(c))
        return Element(name=name, attrs=attrs, children=converted)
    text = unicodedata.normalize("NFC", _check_chars(node.text or ""))
    return Element(name=name, attrs=attrs, text=text)


def parse(data: bytes) -> Element:
    """Parse UTF-8 XML bytes into the restricted model.

    Whitespace-only text between elements is insignificant and dropped;
    leaf text is preserved verbatim.
    """
    if not isinstance(data, bytes):
        raise XmlError("expected bytes")
    try:
        root = ElementTree.fromstring(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise XmlError(f"not UTF-8: {exc}") from exc
    except ElementTree.ParseError as exc:
        raise XmlError(f"malformed XML: {exc}") from exc
    return _convert(root)
