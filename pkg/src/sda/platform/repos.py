"""Role map, definitions repository, document directory, and their file store.

Persistence is file-per-entity under the data directory with atomic
write-temp-then-rename; a mutating command's file write completes before the
command is acknowledged.  Loading is strict: a corrupt entity file refuses
the whole load and names the offending file.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

from ..crypto import RoleCertificate, fingerprint
from ..edoc import DocTypeDefinition, EDoc, Stylesheet, serialize_doc
from ..xmlcanon import Element, XmlError, canonicalize, parse
from ..protocol.kinds import CommandKind, ROLE_SET_ONLY_KINDS

_SAFE_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


class RepositoryError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


class StoreCorruptError(Exception):
    """A persisted entity failed to load; the store refuses to start."""


# ---------------------------------------------------------------------------
# Role map
# ---------------------------------------------------------------------------

@dataclass
class RoleEntry:
    fingerprint: str
    role_name: str
    allowed_kinds: frozenset[CommandKind]
    allowed_doc_types: frozenset[str] | None  # None means every type
    certificate: RoleCertificate

    def to_element(self) -> Element:
        children: list[Element] = [self.certificate.to_element()]
        children += [
            Element("allow", attrs={"kind": k.value})
            for k in sorted(self.allowed_kinds, key=lambda k: k.value)
        ]
        if self.allowed_doc_types is None:
            children.append(Element("all-doc-types"))
        else:
            children += [Element("doc-type", attrs={"name": t}) for t in sorted(self.allowed_doc_types)]
        return Element(
            "role-entry",
            attrs={"fingerprint": self.fingerprint, "role": self.role_name},
            children=children,
        )

    @classmethod
    def from_element(cls, el: Element) -> "RoleEntry":
        cert = RoleCertificate.from_element(el.require_child("certificate"))
        types: frozenset[str] | None
        if el.child("all-doc-types") is not None:
            types = None
        else:
            types = frozenset(t.require_attr("name") for t in el.children_named("doc-type"))
        entry = cls(
            fingerprint=el.require_attr("fingerprint"),
            role_name=el.require_attr("role"),
            allowed_kinds=frozenset(CommandKind(a.require_attr("kind")) for a in el.children_named("allow")),
            allowed_doc_types=types,
            certificate=cert,
        )
        if entry.fingerprint != fingerprint(cert):
            raise XmlError("role entry fingerprint does not match its certificate")
        return entry


ROLE_SET_KINDS = frozenset(
    {CommandKind.INSTALL_ROLE, CommandKind.REVOKE_ROLE, CommandKind.STATUS,
     CommandKind.START_PORT, CommandKind.STOP_PORT}
)


class RoleMap:
    """Fingerprint-keyed authorization table.

    The role-set entry is derived from server startup configuration on every
    start; it is never persisted and cannot be installed over or revoked.
    """

    def __init__(self, role_set_certificate: RoleCertificate):
        self.role_set_fingerprint = fingerprint(role_set_certificate)
        self._role_set_entry = RoleEntry(
            fingerprint=self.role_set_fingerprint,
            role_name=role_set_certificate.role_name,
            allowed_kinds=ROLE_SET_KINDS,
            allowed_doc_types=None,
            certificate=role_set_certificate,
        )
        self.entries: dict[str, RoleEntry] = {self.role_set_fingerprint: self._role_set_entry}

    def install(self, entry: RoleEntry) -> None:
        if entry.fingerprint == self.role_set_fingerprint:
            raise RepositoryError("ROLE_SET_RESERVED", "cannot reinstall the role-set identity")
        self.entries[entry.fingerprint] = entry  # duplicate replaces: re-provisioning

    def revoke(self, fp: str) -> RoleEntry:
        if fp == self.role_set_fingerprint:
            raise RepositoryError("ROLE_SET_RESERVED", "cannot revoke the role-set identity")
        if fp not in self.entries:
            raise RepositoryError("UNKNOWN_ROLE", fp)
        return self.entries.pop(fp)

    def certificates(self) -> dict[str, RoleCertificate]:
        return {fp: e.certificate for fp, e in self.entries.items()}

    def authorize(self, fp: str, kind: CommandKind, doc_type: str | None = None) -> str | None:
        """None when allowed; otherwise UNKNOWN_ROLE, COMMAND_NOT_ALLOWED or
        TYPE_NOT_ALLOWED."""
        entry = self.entries.get(fp)
        if entry is None:
            return "UNKNOWN_ROLE"
        if kind in ROLE_SET_ONLY_KINDS and fp != self.role_set_fingerprint:
            return "COMMAND_NOT_ALLOWED"
        if kind not in entry.allowed_kinds:
            return "COMMAND_NOT_ALLOWED"
        if doc_type is not None and entry.allowed_doc_types is not None:
            if doc_type not in entry.allowed_doc_types:
                return "TYPE_NOT_ALLOWED"
        return None


# ---------------------------------------------------------------------------
# Definitions repository
# ---------------------------------------------------------------------------

class DefinitionsRepository:
    def __init__(self):
        self.definitions: dict[tuple[str, int], DocTypeDefinition] = {}
        self.stylesheets: dict[str, Stylesheet] = {}

    def install_definition(self, defn: DocTypeDefinition) -> None:
        key = (defn.type_name, defn.version)
        if key in self.definitions:
            raise RepositoryError(
                "DUPLICATE_DEFINITION", f"{defn.type_name} v{defn.version} is already installed"
            )
        self.definitions[key] = defn

    def install_stylesheet(self, sheet: Stylesheet) -> None:
        if sheet.stylesheet_id in self.stylesheets:
            raise RepositoryError("DUPLICATE_STYLESHEET", sheet.stylesheet_id)
        latest = self.latest_definition(sheet.type_name)
        if latest is None:
            raise RepositoryError("UNKNOWN_TYPE", sheet.type_name)
        known = set(latest.field_map())
        for name in sheet.placeholders():
            if name not in known:
                raise RepositoryError("UNKNOWN_FIELD", f"stylesheet references {name!r}")
        self.stylesheets[sheet.stylesheet_id] = sheet

    def restore_stylesheet(self, sheet: Stylesheet) -> None:
        # load path: placeholder checks ran at install time and later
        # definition versions must not retro-invalidate the stored sheet
        self.stylesheets[sheet.stylesheet_id] = sheet

    def latest_definition(self, type_name: str) -> DocTypeDefinition | None:
        versions = [v for (n, v) in self.definitions if n == type_name]
        if not versions:
            return None
        return self.definitions[(type_name, max(versions))]

    def definition(self, type_name: str, version: int | None = None) -> DocTypeDefinition | None:
        if version is None:
            return self.latest_definition(type_name)
        return self.definitions.get((type_name, version))

    def stylesheet_ids_for(self, type_name: str) -> frozenset[str]:
        return frozenset(s.stylesheet_id for s in self.stylesheets.values() if s.type_name == type_name)

    def list_definitions(self) -> list[DocTypeDefinition]:
        out = []
        for key in sorted(self.definitions):
            d = self.definitions[key]
            out.append(
                DocTypeDefinition(
                    d.type_name, d.version, d.fields, stylesheet_ids=self.stylesheet_ids_for(d.type_name)
                )
            )
        return out


# ---------------------------------------------------------------------------
# Document directory
# ---------------------------------------------------------------------------

class DocumentDirectory:
    def __init__(self, static_attributes: dict[str, str] | None = None):
        self.docs: dict[str, EDoc] = {}
        self.static_attributes = dict(static_attributes or {})
        self._next = 1

    def assign_id(self) -> str:
        doc_id = f"d{self._next}"
        self._next += 1
        return doc_id

    def unassign_last(self) -> None:
        self._next -= 1

    def note_loaded(self, doc: EDoc) -> None:
        self.docs[doc.doc_id] = doc
        num = int(doc.doc_id[1:]) if doc.doc_id[1:].isdigit() else 0
        self._next = max(self._next, num + 1)

    def get(self, doc_id: str) -> EDoc | None:
        return self.docs.get(doc_id)

    def search(self, type_name: str, attribute_equals: dict[str, str]) -> list[str]:
        hits = []
        for doc_id, doc in self.docs.items():
            if doc.type_name != type_name:
                continue
            if all(doc.attributes.get(k) == v for k, v in attribute_equals.items()):
                hits.append(doc_id)
        return sorted(hits, key=lambda i: int(i[1:]))


# ---------------------------------------------------------------------------
# File store
# ---------------------------------------------------------------------------

def atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class DataStore:
    """File layout: docs/, definitions/, stylesheets/, roles/ under data_dir."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        for sub in ("docs", "definitions", "stylesheets", "roles"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # -- write-through ----------------------------------------------------

    def save_doc(self, doc: EDoc) -> None:
        atomic_write(self.root / "docs" / f"{doc.doc_id}.edoc.xml", serialize_doc(doc))

    def save_definition(self, defn: DocTypeDefinition) -> None:
        if not _SAFE_NAME_RE.match(defn.type_name):
            raise RepositoryError("MALFORMED", f"unsafe type name {defn.type_name!r}")
        name = f"{defn.type_name}__v{defn.version}.def.xml"
        atomic_write(self.root / "definitions" / name, canonicalize(defn.to_element()))

    def save_stylesheet(self, sheet: Stylesheet) -> None:
        if not _SAFE_NAME_RE.match(sheet.stylesheet_id):
            raise RepositoryError("MALFORMED", f"unsafe stylesheet id {sheet.stylesheet_id!r}")
        atomic_write(
            self.root / "stylesheets" / f"{sheet.stylesheet_id}.xsl.xml",
            canonicalize(sheet.to_element()),
        )

    def save_role(self, entry: RoleEntry) -> None:
        atomic_write(self.root / "roles" / f"{entry.fingerprint}.role.xml", canonicalize(entry.to_element()))

    def delete_role(self, fp: str) -> None:
        try:
            os.remove(self.root / "roles" / f"{fp}.role.xml")
        except FileNotFoundError:
            pass

    # -- load -------------------------------------------------------------

    def _load_dir(self, sub: str, loader):
        out = []
        for path in sorted((self.root / sub).glob("*.xml")):
            if path.name.endswith(".tmp"):
                continue
            try:
                out.append(loader(parse(path.read_bytes())))
            except Exception as exc:
                raise StoreCorruptError(f"{sub}/{path.name}: {exc}") from exc
        return out

    def load_into(
        self, repo: DefinitionsRepository, directory: DocumentDirectory, role_map: RoleMap
    ) -> None:
        for defn in self._load_dir("definitions", DocTypeDefinition.from_element):
            repo.install_definition(defn)
        for sheet in self._load_dir("stylesheets", Stylesheet.from_element):
            repo.restore_stylesheet(sheet)
        for entry in self._load_dir("roles", RoleEntry.from_element):
            if entry.fingerprint != role_map.role_set_fingerprint:
                role_map.install(entry)
        for doc in self._load_dir("docs", EDoc.from_element):
            if not doc.doc_id:
                raise StoreCorruptError("stored document without a doc id")
            directory.note_loaded(doc)
